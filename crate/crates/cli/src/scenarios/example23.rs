//! `d/ds` generating translations on a weighted periodic grid.

use hclab_core::backends::{
    admissible_weight_check, derivative_matrix, poly_of_operator, Boundary, GridSpec, WeightSpec,
};
use hclab_core::dynamics::{acp_residual_curve, evolve, extract_derivatives};
use hclab_core::eigenfields::{eigen_residual, exponential_field, lift_theorem21, lift_theorem22};
use hclab_core::linalg::{self, c64, CVec};
use hclab_core::polyspec::{condition_holds_symbolic, Interval, SpectralCondition, SymbolCurve};
use hclab_core::reduction::{build_companion, build_delta, derivatives_to_delta_state, InitialData};
use hclab_core::Result;
use rayon::prelude::*;
use serde_json::json;

use super::{superpose, u_block_mismatch};
use crate::config::{ScenarioConfig, WeightKind};
use crate::report::{Check, Curve, Outcome};

pub fn run(cfg: &ScenarioConfig) -> Result<Outcome> {
    let g = cfg.grid.as_ref().expect("validated");
    let grid = GridSpec::new(g.half_width, g.points, Boundary::Periodic)?;
    let w = cfg.weight.expect("validated");
    let weight = match w.kind {
        WeightKind::Unit => WeightSpec::unit(&grid),
        WeightKind::Exponential => WeightSpec::sampled(&grid, |s| (-w.alpha * s.abs()).exp(), 1.0, w.alpha),
    };
    let admissible = admissible_weight_check(&weight, &grid)?;

    let polys = cfg.polynomials.as_ref().expect("validated").resolve().expect("validated");
    let n = polys.len();
    let ts = &cfg.sample_times;
    let lo = ts.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let interval = Interval::new(lo, hi);
    let cond = SpectralCondition::new(polys.clone(), SymbolCurve::Identity, interval)?;
    let certificate = condition_holds_symbolic(&cond)?;

    let d = derivative_matrix(&grid)?;
    let ops: Vec<_> = polys.iter().enumerate().map(|(l, p)| poly_of_operator(p, &d, &format!("P{l}(d/ds)"))).collect();
    let comp = build_companion(&ops)?;
    let delta = build_delta(&ops)?;
    let field = exponential_field(&grid, interval);
    let rows = ts
        .par_iter()
        .map(|&t| {
            let backend = field.backend_residual(&d, &[t])?;
            let rc = eigen_residual(&comp, &lift_theorem21(field.clone(), n), &[t])?;
            let rd = eigen_residual(&delta, &lift_theorem22(field.clone(), n, &ops[1..])?, &[t])?;
            Ok(vec![t, backend, rc, rd])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut eigen = Curve::new("eigen_residual.csv", &["t", "backend", "companion", "delta"]);
    rows.into_iter().for_each(|r| eigen.push(r));

    // Superposed lifts stay on the translation branch: u(tau)(s) = u(0)(s + tau).
    let lift = lift_theorem21(field.clone(), n);
    let x0 = superpose(ts.iter().map(|&t| Ok((t, lift.eval(t)?))))?;
    let v0 = derivatives_to_delta_state(&ops, &InitialData::from_stacked(&x0, n)?)?;
    let ev = cfg.evolution_config();
    let (ct, dt) = rayon::join(|| evolve(&comp, &x0, &ev), || evolve(&delta, &v0, &ev));
    let (ct, dt) = (ct?, dt?);
    let du = extract_derivatives(&ct, &ops)?;
    let dv = extract_derivatives(&dt, &ops)?;
    let mut acp = Curve::new("acp_residual.csv", &["t", "residual"]);
    acp_residual_curve(&du, &ops, ev.dt)?.into_iter().for_each(|(t, r)| acp.push(vec![t, r]));
    let mismatch = u_block_mismatch(&du, &dv);
    let nodes = grid.nodes();
    let mut translation = Curve::new("translation_error.csv", &["t", "error"]);
    for k in 0..du.len() {
        let tau = du.time(k);
        let exact = CVec::from_iterator(
            nodes.len(),
            nodes.iter().map(|&s| {
                ts.iter().map(|&t| c64(0.0, t * (s + tau)).exp() / (1.0 + t.abs())).sum::<num_complex::Complex64>()
            }),
        );
        let err = linalg::norm(&(du.component(k, 0) - &exact)) / linalg::norm(&exact).max(1.0);
        translation.push(vec![tau, err]);
    }

    let eigen_tol = cfg.tolerance("eigenResidual");
    let checks = vec![
        Check::holds("weightAdmissible", admissible.admissible),
        Check::holds("conditionHolds", certificate.holds),
        Check::at_most("eigenResidualCompanion", eigen.column_max("companion"), eigen_tol)
            .from_curve("eigen_residual.csv", "companion"),
        Check::at_most("eigenResidualDelta", eigen.column_max("delta"), eigen_tol)
            .from_curve("eigen_residual.csv", "delta"),
        Check::at_most("acpResidual", acp.column_max("residual"), cfg.tolerance("acpResidual"))
            .from_curve("acp_residual.csv", "residual"),
        Check::at_most("reductionMismatch", mismatch.column_max("mismatch"), cfg.tolerance("reductionMismatch"))
            .from_curve("reduction_mismatch.csv", "mismatch"),
        Check::at_most("translationError", translation.column_max("error"), cfg.tolerance("translationError"))
            .from_curve("translation_error.csv", "error"),
    ];
    let results = json!({
        "weight": {
            "kind": w.kind,
            "m": weight.m,
            "omega": weight.omega,
            "admissible": admissible.admissible,
            "worstRatio": admissible.worst_ratio,
            "worstPair": admissible.worst_pair,
        },
        "conditionHolds": certificate.holds,
        "certification": certificate.certification,
        "order": n,
        "completedTopPolynomial": polys[n - 1].coeffs().iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
        "backendResidualMax": eigen.column_max("backend"),
        "steps": du.len() - 1,
    });
    Ok(Outcome { results, checks, curves: vec![eigen, acp, mismatch, translation] })
}
