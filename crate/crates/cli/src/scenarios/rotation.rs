//! Diagonal rotation model `diag(i w_1, ..., i w_d)`.

use hclab_core::backends::diag_model;
use hclab_core::dynamics::{evolve_operator, states_as_solution};
use hclab_core::eigenfields::{build_subspace, lift_theorem21, subspace_residual, EigenField};
use hclab_core::linalg::{self, c64, CVec};
use hclab_core::polyspec::{Interval, SymbolCurve};
use hclab_core::recurrence::{
    fh_harness, lower_density_continuous, synthesize_candidate, ComponentTarget, HarnessMode, TargetSpec, VisitSet,
    Weights, HEURISTIC_CANDIDATE_NOTE,
};
use hclab_core::{LabError, Result};
use serde_json::json;

use super::thin;
use crate::config::ScenarioConfig;
use crate::report::{Check, Curve, Outcome};

/// `t -> e_j` at `t = w_j`, an eigenfield with symbol `g(it) = it`.
fn coordinate_field(freqs: &[f64]) -> EigenField {
    let lo = freqs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = freqs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let table = SymbolCurve::table(freqs.iter().map(|&w| (w, c64(0.0, w))));
    let owned = freqs.to_vec();
    EigenField::new(freqs.len(), Interval::new(lo, hi), table, 0.0, move |t| {
        let j = owned
            .iter()
            .position(|&w| w == t)
            .ok_or_else(|| LabError::OutOfDomain { t, reason: "not one of the model frequencies".into() })?;
        let mut e = CVec::zeros(owned.len());
        e[j] = c64(1.0, 0.0);
        Ok(e)
    })
    .with_smoothness("defined on the frequency samples only")
}

pub fn run(cfg: &ScenarioConfig) -> Result<Outcome> {
    let freqs = cfg.frequencies.clone().expect("validated");
    let a = diag_model(&freqs.iter().map(|&w| c64(0.0, w)).collect::<Vec<_>>());
    let field = coordinate_field(&freqs);
    let backend = field.backend_residual(&a, &freqs)?;
    let basis = build_subspace(&[lift_theorem21(field, 1)], &[freqs.clone()])?;
    let x0 = synthesize_candidate(&basis, &Weights::Random(cfg.seed))?;
    let in_span = subspace_residual(&x0, &basis)?;

    let ev = cfg.evolution_config();
    let traj = evolve_operator(&a, &x0, &ev)?;
    let derivs = states_as_solution(&traj);
    let tc = &cfg.targets[0];
    let center = traj.state(((tc.center_time / ev.dt).round() as usize).min(traj.len() - 1));
    let radius = tc.radius * linalg::norm(&center);
    let target = TargetSpec::new(vec![ComponentTarget::ball(tc.index, center, radius)], None)?;
    let (estimate, harness, set) = fh_harness(&derivs, &target, HarnessMode::Def11, None, Some(cfg.seed))?;
    let VisitSet::BooleanMask { dt, mask } = &set else { unreachable!("the harness samples a mask") };
    let half = lower_density_continuous(&VisitSet::mask(*dt, mask[..mask.len() / 2].to_vec())?);
    let drift = (estimate.proxy - half.proxy).abs();

    let mut visits = Curve::new("visits.csv", &["start", "end"]);
    let mut start = None;
    for (k, &inside) in mask.iter().chain([&false]).enumerate() {
        match (inside, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                visits.push(vec![s as f64 * dt, k as f64 * dt]);
                start = None;
            }
            _ => {}
        }
    }
    let mut density = Curve::new("density.csv", &["t", "ratio"]);
    estimate.curve.iter().for_each(|&(t, r)| density.push(vec![t, r]));

    let checks = vec![
        Check::at_most("subspaceResidual", in_span, cfg.tolerance("subspaceResidual")),
        Check::at_least("densityProxy", estimate.proxy, cfg.tolerance("densityMin")),
        Check::at_most("densityDrift", drift, cfg.tolerance("densityDrift")),
    ];
    let results = json!({
        "backendResidual": backend,
        "candidate": linalg::vector_to_json(&x0),
        "candidateNote": HEURISTIC_CANDIDATE_NOTE,
        "harness": harness,
        "burnIn": estimate.burn_in,
        "halfHorizon": half.horizon,
        "halfHorizonProxy": half.proxy,
        "visitIntervals": visits.rows.len(),
    });
    Ok(Outcome { results, checks, curves: vec![visits, thin(density, cfg.csv_stride)] })
}
