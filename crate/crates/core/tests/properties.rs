use hclab_core::backends::{derivative_matrix, diag_model, poly_of_operator, random_operators, Boundary, GridSpec};
use hclab_core::dynamics::{evolve_operator, states_as_solution, EvolutionConfig};
use hclab_core::eigenfields::{build_subspace, eigen_residual, exponential_field, lift_theorem21, lift_theorem22};
use hclab_core::linalg::{self, c64, CVec};
use hclab_core::polyspec::{
    characteristic_residual, complete_condition, condition_holds_symbolic, ComplexPoly, Interval, SpectralCondition,
    SymbolCurve,
};
use hclab_core::recurrence::{delta_mode_targets, visit_set, ComponentTarget, DeltaTargetData, TargetSpec, VisitSet};
use hclab_core::reduction::{build_companion, build_delta};
use num_complex::Complex64;
use proptest::prelude::*;

fn complex() -> impl Strategy<Value = Complex64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| c64(re, im))
}

fn poly(max_len: usize) -> impl Strategy<Value = ComplexPoly> {
    prop::collection::vec(complex(), 0..=max_len).prop_map(ComplexPoly::new)
}

/// `P_0..P_{n-2}` with `z^l P_l` divisible by `z^{n-1}`.
fn divisible_lower(n: usize) -> impl Strategy<Value = Vec<ComplexPoly>> {
    prop::collection::vec(prop::collection::vec(complex(), 0..=3), n - 1).prop_map(move |tails| {
        tails
            .into_iter()
            .enumerate()
            .map(|(l, tail)| {
                let mut coeffs = vec![c64(0.0, 0.0); n - 1 - l];
                coeffs.extend(tail);
                ComplexPoly::new(coeffs)
            })
            .collect()
    })
}

fn completed_family() -> impl Strategy<Value = (usize, Vec<ComplexPoly>)> {
    (2usize..=5).prop_flat_map(|n| {
        divisible_lower(n).prop_map(move |lower| {
            let top = complete_condition(n, &lower).unwrap();
            let mut polys = lower;
            polys.push(top);
            (n, polys)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn completion_round_trip((n, polys) in completed_family()) {
        let cond = SpectralCondition::new(polys.clone(), SymbolCurve::Identity, Interval::whole_line()).unwrap();
        prop_assert_eq!(cond.order(), n);
        prop_assert!(condition_holds_symbolic(&cond).unwrap().holds);
    }

    #[test]
    fn certified_conditions_have_small_residuals((n, polys) in completed_family()) {
        let cond = SpectralCondition::new(polys.clone(), SymbolCurve::Identity, Interval::new(-5.0, 5.0)).unwrap();
        for k in 0..1000 {
            let t = -5.0 + 10.0 * k as f64 / 999.0;
            let r = characteristic_residual(&cond, t).unwrap();
            prop_assert!(r.norm() <= 1e-12 * (1.0 + t.abs()).powi(n as i32), "t = {}: {:e}", t, r.norm());
        }
    }

    #[test]
    fn product_evaluates_as_product_of_values(p in poly(8), q in poly(8), zs in prop::collection::vec(complex(), 100)) {
        let pq = &p * &q;
        let magnitude = |poly: &ComplexPoly, r: f64| poly.coeffs().iter().rev().fold(0.0, |acc, c| acc * r + c.norm());
        for z in zs {
            let z = z * 2.0;
            let scale = magnitude(&p, z.norm()) * magnitude(&q, z.norm());
            let err = (pq.eval(z) - p.eval(z) * q.eval(z)).norm();
            prop_assert!(err <= 1e-12 * scale.max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn enlarging_radii_never_shrinks_visits(r1 in 0.01f64..2.0, extra in 0.0f64..1.0, t_star in 0.0f64..20.0) {
        let a = diag_model(&[c64(0.0, 1.0), c64(0.0, 2f64.sqrt())]);
        let x0 = CVec::from_element(2, c64(1.0 / 2f64.sqrt(), 0.0));
        let traj = evolve_operator(&a, &x0, &EvolutionConfig::new(60.0, 0.1).unwrap()).unwrap();
        let derivs = states_as_solution(&traj);
        let center = traj.state((t_star / 0.1) as usize);
        let small = TargetSpec::new(vec![ComponentTarget::ball(0, center.clone(), r1)], None).unwrap();
        let large = TargetSpec::new(vec![ComponentTarget::ball(0, center, r1 + extra)], None).unwrap();
        let s = visit_set(&derivs, &small).unwrap();
        let l = visit_set(&derivs, &large).unwrap();
        prop_assert!(s.is_subset_of(&l));
        let is_mask = matches!(s, VisitSet::BooleanMask { .. });
        prop_assert!(is_mask);
    }

    #[test]
    fn subspace_projector_ignores_sample_order(mut ts in prop::collection::vec(-5i32..=5, 1..8), seed in 0u64..1000) {
        let grid = GridSpec::new(std::f64::consts::PI, 32, Boundary::Periodic).unwrap();
        let field = lift_theorem21(exponential_field(&grid, Interval::new(-5.0, 5.0)), 2);
        let times: Vec<f64> = ts.iter().map(|&t| t as f64).collect();
        let p1 = build_subspace(&[field.clone()], &[times]).unwrap();
        // deterministic shuffle
        let len = ts.len();
        for i in (1..len).rev() {
            ts.swap(i, (seed as usize * 31 + i * 17) % (i + 1));
        }
        let shuffled: Vec<f64> = ts.iter().map(|&t| t as f64).collect();
        let p2 = build_subspace(&[field], &[shuffled]).unwrap();
        prop_assert_eq!(p1.rank(), p2.rank());
        prop_assert!(linalg::frobenius(&(p1.projector() - p2.projector())) <= 1e-10);
        for i in 0..2 {
            prop_assert!(linalg::frobenius(&(p1.block_projector(i) - p2.block_projector(i))) <= 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn eigen_relation_follows_from_the_condition((n, polys) in completed_family()) {
        let grid = GridSpec::new(std::f64::consts::PI, 64, Boundary::Periodic).unwrap();
        let d = derivative_matrix(&grid).unwrap();
        let ops: Vec<_> = polys.iter().enumerate().map(|(l, p)| poly_of_operator(p, &d, &format!("A{l}"))).collect();
        let field = exponential_field(&grid, Interval::new(-5.0, 5.0));
        let ts: Vec<f64> = (-5..=5).map(f64::from).collect();
        let cond = SpectralCondition::new(polys.clone(), SymbolCurve::Identity, Interval::new(-5.0, 5.0)).unwrap();
        let char_max = ts.iter().map(|&t| characteristic_residual(&cond, t).unwrap().norm()).fold(0.0, f64::max);
        // Each lift row collects sum_l (it)^l (A_l f - P_l(it) f).
        let mut backend: f64 = 0.0;
        for &t in &ts {
            let f = field.eval(t).unwrap();
            let it = c64(0.0, t);
            let weighted: f64 = ops
                .iter()
                .zip(&polys)
                .enumerate()
                .map(|(l, (a, p))| t.abs().powi(l as i32) * linalg::norm(&(a.apply(&f) - &f * p.eval(it))))
                .sum();
            backend = backend.max(weighted / linalg::norm(&f));
        }
        let bound = 10.0 * backend.max(field.tolerance()) + 10.0 * char_max;
        let rc = eigen_residual(&build_companion(&ops).unwrap(), &lift_theorem21(field.clone(), n), &ts).unwrap();
        let lifted = lift_theorem22(field, n, &ops[1..]).unwrap();
        let rd = eigen_residual(&build_delta(&ops).unwrap(), &lifted, &ts).unwrap();
        prop_assert!(rc <= bound, "companion {:e} > {:e}", rc, bound);
        prop_assert!(rd <= bound, "delta {:e} > {:e}", rd, bound);
    }

    #[test]
    fn delta_targets_are_lambda_independent(seed in 0u64..10_000, l1 in (2.5f64..6.0, -3.0f64..3.0), l2 in (-6.0f64..-2.5, -3.0f64..3.0)) {
        let ops = random_operators(seed, 2, 2, 0.5);
        let delta = build_delta(&ops).unwrap();
        let center = CVec::from_fn(4, |j, _| c64(0.1 * j as f64, -0.05));
        let spec = |lambda: Complex64| {
            TargetSpec::new(
                vec![ComponentTarget::ball(0, CVec::zeros(2), 1.0)],
                Some(DeltaTargetData { lambda, power: 2, center: center.clone(), radius: 20.0 }),
            )
            .unwrap()
        };
        let t1 = delta_mode_targets(&spec(c64(l1.0, l1.1)), &delta).unwrap();
        let t2 = delta_mode_targets(&spec(c64(l2.0, l2.1)), &delta).unwrap();
        let phi = t1.transition_map(&t2).unwrap();
        prop_assert!(linalg::condition_number(&phi).unwrap().is_finite());
        for k in 0..50 {
            let x = CVec::from_fn(4, |j, _| c64(((k * 7 + j * 3) % 11) as f64 / 11.0 - 0.5, ((k * 5 + j) % 13) as f64 / 13.0 - 0.5));
            let y = t2.forward_map() * &x;
            prop_assert_eq!(t1.contains_state(&x), t1.contains_mapped(&phi, &y));
        }
    }
}
