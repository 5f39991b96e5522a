//! Polynomials in the Ornstein-Uhlenbeck operator `u'' + b x u' + c u`.

use hclab_core::backends::{ou_eigenfunction, ou_matrix, poly_of_operator, Boundary, Branch, GridSpec, OUParams};
use hclab_core::dynamics::{acp_residual_curve, evolve, extract_derivatives};
use hclab_core::eigenfields::{eigen_residual, lift_theorem21, lift_theorem22, ou_field};
use hclab_core::linalg::{self, c64};
use hclab_core::polyspec::{condition_holds_symbolic, ComplexPoly, Interval, SpectralCondition, SymbolCurve};
use hclab_core::reduction::{build_companion, build_delta, derivatives_to_delta_state, InitialData, OperatorHandle};
use hclab_core::Result;
use rayon::prelude::*;
use serde_json::json;

use super::{superpose, thin, u_block_mismatch};
use crate::config::{GridConfig, ScenarioConfig};
use crate::report::{Check, Curve, Outcome};

fn operators(polys: &[ComplexPoly], params: &OUParams, grid: &GridSpec) -> Result<Vec<OperatorHandle>> {
    let a = ou_matrix(params, grid)?;
    Ok(polys.iter().enumerate().map(|(l, p)| poly_of_operator(p, &a, &format!("P{l}(A_c)"))).collect())
}

fn decaying(g: &GridConfig) -> Result<GridSpec> {
    GridSpec::new(g.half_width, g.points, Boundary::Decaying)
}

pub fn run(cfg: &ScenarioConfig) -> Result<Outcome> {
    let ou = cfg.ou.expect("validated");
    let params = OUParams::new(ou.b, ou.c)?;
    let polys = cfg.polynomials.as_ref().expect("validated").resolve().expect("validated");
    let n = polys.len();
    let ts = &cfg.sample_times;
    let lo = ts.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let interval = Interval::new(lo, hi);
    let cond = SpectralCondition::new(polys.clone(), SymbolCurve::Identity, interval)?;
    let certificate = condition_holds_symbolic(&cond)?;

    // Eigenfields on the fine grid.
    let grid = decaying(cfg.grid.as_ref().expect("validated"))?;
    let ops = operators(&polys, &params, &grid)?;
    let a = ou_matrix(&params, &grid)?;
    let comp = build_companion(&ops)?;
    let delta = build_delta(&ops)?;
    let tol = cfg.tolerance("backendResidual");
    let jobs: Vec<(Branch, f64)> =
        [Branch::Odd, Branch::Even].into_iter().flat_map(|b| ts.iter().map(move |&t| (b, t))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(branch, t)| {
            let field = ou_field(params, grid, branch, interval, tol);
            let backend = field.backend_residual(&a, &[t])?;
            let rc = eigen_residual(&comp, &lift_theorem21(field.clone(), n), &[t])?;
            let rd = eigen_residual(&delta, &lift_theorem22(field, n, &ops[1..])?, &[t])?;
            let index = if branch == Branch::Odd { 1.0 } else { 2.0 };
            Ok(vec![t, index, backend, rc, rd])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut eigen = Curve::new("eigen_residual.csv", &["t", "branch", "backend", "companion", "delta"]);
    rows.into_iter().for_each(|r| eigen.push(r));
    let mut profiles = Vec::new();
    for branch in [Branch::Odd, Branch::Even] {
        let f = ou_eigenfunction(c64(0.0, hi), branch, &params, &grid)?;
        let mut curve = Curve::new(&format!("eigenfunction_{}.csv", branch_name(branch)), &["x", "re", "im"]);
        for (j, z) in f.iter().enumerate() {
            curve.push(vec![grid.node(j), z.re, z.im]);
        }
        profiles.push(curve);
    }

    // Reduction dynamics on the coarse grid, started from superposed lifts.
    let dgrid = decaying(cfg.dynamics_grid.as_ref().expect("validated"))?;
    let dops = operators(&polys, &params, &dgrid)?;
    let x0 = superpose(ts.iter().map(|&t| {
        let field = ou_field(params, dgrid, Branch::Even, interval, tol);
        Ok((t, lift_theorem21(field, n).eval(t)?))
    }))?;
    let v0 = derivatives_to_delta_state(&dops, &InitialData::from_stacked(&x0, n)?)?;
    let ev = cfg.evolution_config();
    let (cm, dm) = (build_companion(&dops)?, build_delta(&dops)?);
    let (ct, dt) = rayon::join(|| evolve(&cm, &x0, &ev), || evolve(&dm, &v0, &ev));
    let (ct, dt) = (ct?, dt?);
    let du = extract_derivatives(&ct, &dops)?;
    let dv = extract_derivatives(&dt, &dops)?;
    let mut acp = Curve::new("acp_residual.csv", &["t", "residual"]);
    acp_residual_curve(&du, &dops, ev.dt)?.into_iter().for_each(|(t, r)| acp.push(vec![t, r]));
    let mismatch = u_block_mismatch(&du, &dv);
    let mut norms = Curve::new("solution_norm.csv", &["t", "u_norm"]);
    for k in 0..du.len() {
        norms.push(vec![du.time(k), linalg::norm(&du.component(k, 0))]);
    }

    let checks = vec![
        Check::holds("conditionHolds", certificate.holds),
        Check::at_most("backendResidual", eigen.column_max("backend"), tol).from_curve("eigen_residual.csv", "backend"),
        Check::at_most("eigenResidualCompanion", eigen.column_max("companion"), cfg.tolerance("eigenResidual"))
            .from_curve("eigen_residual.csv", "companion"),
        Check::at_most("eigenResidualDelta", eigen.column_max("delta"), cfg.tolerance("eigenResidual"))
            .from_curve("eigen_residual.csv", "delta"),
        Check::at_most("acpResidual", acp.column_max("residual"), cfg.tolerance("acpResidual"))
            .from_curve("acp_residual.csv", "residual"),
        Check::at_most("reductionMismatch", mismatch.column_max("mismatch"), cfg.tolerance("reductionMismatch"))
            .from_curve("reduction_mismatch.csv", "mismatch"),
    ];
    let results = json!({
        "conditionHolds": certificate.holds,
        "certification": certificate.certification,
        "offendingCoefficients": certificate.offending,
        "order": n,
        "omegaBound": params.omega_bound(),
        "eigenGrid": {"halfWidth": grid.half_width, "points": grid.points},
        "dynamicsGrid": {"halfWidth": dgrid.half_width, "points": dgrid.points},
        "steps": du.len() - 1,
        "finalSolutionNorm": linalg::norm(&du.component(du.len() - 1, 0)),
    });
    let mut curves = vec![eigen, acp, mismatch, thin(norms, cfg.csv_stride)];
    curves.extend(profiles);
    Ok(Outcome { results, checks, curves })
}

fn branch_name(b: Branch) -> &'static str {
    match b {
        Branch::Odd => "odd",
        Branch::Even => "even",
    }
}
