//! Random operator tuples evolved through both block reductions.

use hclab_core::backends::random_operators;
use hclab_core::dynamics::{acp_residual_curve, evolve, extract_derivatives};
use hclab_core::linalg::{self, c64, CVec};
use hclab_core::recurrence::{
    delta_mode_targets, delta_state_of, fh_harness, ComponentTarget, DeltaTargetData, DeltaTargets, HarnessMode,
    TargetSpec,
};
use hclab_core::reduction::{
    build_companion, build_delta, build_psi, derivatives_to_delta_state, psi_apply_inverse, BlockOperatorMatrix,
    InitialData,
};
use hclab_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{thin, u_block_mismatch};
use crate::config::ScenarioConfig;
use crate::report::{Check, Curve, Outcome};

fn targets_for(
    lambda: [f64; 2],
    n: usize,
    component: ComponentTarget,
    center: CVec,
    radius: f64,
    delta: &BlockOperatorMatrix,
) -> Result<(TargetSpec, DeltaTargets)> {
    let data = DeltaTargetData { lambda: c64(lambda[0], lambda[1]), power: n, center, radius };
    let spec = TargetSpec::new(vec![component], Some(data))?;
    let targets = delta_mode_targets(&spec, delta)?;
    Ok((spec, targets))
}

pub fn run(cfg: &ScenarioConfig) -> Result<Outcome> {
    let spec = cfg.operators.expect("validated");
    let (n, d) = (spec.order, spec.dim);
    let ops = random_operators(cfg.seed, n, d, spec.scale);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let init = InitialData::new(
        (0..n).map(|_| CVec::from_fn(d, |_, _| c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))).collect(),
    )?;
    let x0 = init.stacked();
    let v0 = derivatives_to_delta_state(&ops, &init)?;
    let psi = build_psi(&ops)?;
    let round_trip = linalg::norm(&(psi_apply_inverse(&psi, &v0)? - &x0)) / linalg::norm(&x0).max(1.0);

    let ev = cfg.evolution_config();
    let comp = build_companion(&ops)?;
    let delta = build_delta(&ops)?;
    let (ct, dt) = rayon::join(|| evolve(&comp, &x0, &ev), || evolve(&delta, &v0, &ev));
    let (ct, dt) = (ct?, dt?);
    let du = extract_derivatives(&ct, &ops)?;
    let dv = extract_derivatives(&dt, &ops)?;
    let mismatch = u_block_mismatch(&du, &dv);
    let mut acp = Curve::new("acp_residual.csv", &["t", "residual"]);
    acp_residual_curve(&du, &ops, ev.dt)?.into_iter().for_each(|(t, r)| acp.push(vec![t, r]));

    // DEF21 target: V is a ball around (lambda - Delta)^n applied to the
    // Neubrander state at the target time.
    let tc = &cfg.targets[0];
    let k_star = ((tc.center_time / ev.dt).round() as usize).min(du.len() - 1);
    let state = delta_state_of(&du, k_star, &delta)?;
    let w = du.component(k_star, tc.index);
    let component = ComponentTarget::ball(tc.index, w.clone(), tc.radius * linalg::norm(&w).max(f64::MIN_POSITIVE));
    let probe = targets_for(cfg.lambdas[0], n, component.clone(), CVec::zeros(n * d), 1.0, &delta)?.1;
    let center = probe.forward_map() * &state;
    let radius = tc.radius * linalg::norm(&center);
    let (target, _) = targets_for(cfg.lambdas[0], n, component.clone(), center.clone(), radius, &delta)?;
    let (estimate, harness, _) = fh_harness(&du, &target, HarnessMode::Def21, Some(&delta), Some(cfg.seed))?;

    let families = cfg
        .lambdas
        .iter()
        .map(|&l| Ok(targets_for(l, n, component.clone(), center.clone(), radius, &delta)?.1))
        .collect::<Result<Vec<_>>>()?;
    let states = (0..du.len()).map(|k| delta_state_of(&du, k, &delta)).collect::<Result<Vec<_>>>()?;
    let mut pairs = Curve::new(
        "lambda_pairs.csv",
        &["lambda1_re", "lambda1_im", "lambda2_re", "lambda2_im", "condition", "inside", "mismatches"],
    );
    let mut total_mismatches = 0usize;
    for (i, a) in families.iter().enumerate() {
        for (j, b) in families.iter().enumerate().skip(i + 1) {
            let phi = a.transition_map(b)?;
            let (inside, bad) = predicate_agreement(a, b, &phi, &states);
            total_mismatches += bad;
            let (la, lb) = (cfg.lambdas[i], cfg.lambdas[j]);
            pairs.push(vec![la[0], la[1], lb[0], lb[1], linalg::condition_number(&phi)?, inside as f64, bad as f64]);
        }
    }
    let mut density = Curve::new("density.csv", &["t", "ratio"]);
    estimate.curve.iter().for_each(|&(t, r)| density.push(vec![t, r]));

    let checks = vec![
        Check::at_most("psiRoundTrip", round_trip, cfg.tolerance("psiRoundTrip")),
        Check::at_most("reductionMismatch", mismatch.column_max("mismatch"), cfg.tolerance("reductionMismatch"))
            .from_curve("reduction_mismatch.csv", "mismatch"),
        Check::at_most("acpResidual", acp.column_max("residual"), cfg.tolerance("acpResidual"))
            .from_curve("acp_residual.csv", "residual"),
        Check::at_most("lambdaMismatches", total_mismatches as f64, 0.0).from_curve("lambda_pairs.csv", "mismatches"),
    ];
    let results = json!({
        "order": n,
        "dim": d,
        "operators": ops.iter().map(|a| linalg::matrix_to_json(a.entries())).collect::<Vec<_>>(),
        "initialData": linalg::vector_to_json(&x0),
        "psiRoundTrip": round_trip,
        "harness": harness,
        "testedStates": states.len(),
        "finalSolutionNorm": linalg::norm(&du.component(du.len() - 1, 0)),
    });
    Ok(Outcome { results, checks, curves: vec![mismatch, acp, pairs, thin(density, cfg.csv_stride)] })
}

/// Membership of each state under `a`, compared with membership of its
/// `b`-image carried back through the transition map; returns the number
/// of states inside and the number of disagreements.
fn predicate_agreement(a: &DeltaTargets, b: &DeltaTargets, phi: &linalg::CMat, states: &[CVec]) -> (usize, usize) {
    let mut inside = 0;
    let mut bad = 0;
    for x in states {
        let direct = a.contains_state(x);
        inside += direct as usize;
        bad += (direct != a.contains_mapped(phi, &(b.forward_map() * x))) as usize;
    }
    (inside, bad)
}
