//! Built-in scenarios and their defaults.

mod delta_companion;
mod example21;
mod example23;
mod rotation;

use hclab_core::dynamics::Derivatives;
use hclab_core::linalg::{self, c64, CVec};
use hclab_core::{LabError, Result};
use serde_json::{json, Value};

use crate::config::ScenarioConfig;
use crate::report::{Curve, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Example21,
    Example23,
    DiagRotation,
    DeltaVsCompanion,
}

/// Which optional configuration sections a scenario reads.
#[derive(Debug, Clone, Copy, Default)]
pub struct Requirements {
    pub grid: bool,
    pub dynamics_grid: bool,
    pub ou: bool,
    pub weight: bool,
    pub operators: bool,
    pub frequencies: bool,
    pub polynomials: bool,
    pub sample_times: bool,
    pub targets: bool,
    pub lambdas: bool,
}

impl ScenarioKind {
    /// Listing order.
    pub const ALL: [ScenarioKind; 4] =
        [ScenarioKind::DeltaVsCompanion, ScenarioKind::DiagRotation, ScenarioKind::Example21, ScenarioKind::Example23];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Example21 => "example21",
            ScenarioKind::Example23 => "example23",
            ScenarioKind::DiagRotation => "diag-rotation",
            ScenarioKind::DeltaVsCompanion => "delta-vs-companion",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn description(self) -> &'static str {
        match self {
            ScenarioKind::Example21 => {
                "Ornstein-Uhlenbeck polynomials of order 4: condition certificate, lifted eigenfields, reduction dynamics"
            }
            ScenarioKind::Example23 => {
                "weighted translation group on a periodic grid: weight admissibility, exact eigenfields, shift oracle"
            }
            ScenarioKind::DiagRotation => {
                "rotation model with rationally independent frequencies: eigenfield candidate and visit density"
            }
            ScenarioKind::DeltaVsCompanion => {
                "random operator tuple: companion and Delta evolutions, Psi round trip, lambda-independent targets"
            }
        }
    }

    pub fn requirements(self) -> Requirements {
        let base = Requirements::default();
        match self {
            ScenarioKind::Example21 => Requirements {
                grid: true,
                dynamics_grid: true,
                ou: true,
                polynomials: true,
                sample_times: true,
                ..base
            },
            ScenarioKind::Example23 => {
                Requirements { grid: true, weight: true, polynomials: true, sample_times: true, ..base }
            }
            ScenarioKind::DiagRotation => Requirements { frequencies: true, targets: true, ..base },
            ScenarioKind::DeltaVsCompanion => Requirements { operators: true, targets: true, lambdas: true, ..base },
        }
    }

    pub fn tolerance_keys(self) -> &'static [&'static str] {
        match self {
            ScenarioKind::Example21 => &["acpResidual", "backendResidual", "eigenResidual", "reductionMismatch"],
            ScenarioKind::Example23 => &["acpResidual", "eigenResidual", "reductionMismatch", "translationError"],
            ScenarioKind::DiagRotation => &["densityDrift", "densityMin", "subspaceResidual"],
            ScenarioKind::DeltaVsCompanion => &["acpResidual", "psiRoundTrip", "reductionMismatch"],
        }
    }
}

pub fn defaults(kind: ScenarioKind) -> Value {
    match kind {
        ScenarioKind::Example21 => json!({
            "seed": 0,
            "grid": {"halfWidth": 20.0, "points": 2048},
            "dynamicsGrid": {"halfWidth": 5.0, "points": 32},
            "ou": {"b": 1.0, "c": 2.0},
            "polynomials": {"order": 4, "explicit": [[], [], [[0.0, 0.0], [-2.0, 0.0]], [[2.0, 0.0], [-1.0, 0.0]]]},
            "sampleTimes": [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0],
            "evolution": {"tMax": 1.0, "dt": 5e-4},
            "tolerances": {"acpResidual": 1e-3, "backendResidual": 1e-3, "eigenResidual": 1e-2, "reductionMismatch": 1e-8},
            "csvStride": 10,
            "reportFormat": "both",
        }),
        ScenarioKind::Example23 => json!({
            "seed": 0,
            "grid": {"halfWidth": std::f64::consts::PI, "points": 64},
            "weight": {"kind": "UNIT"},
            "polynomials": {"order": 2, "complete": [[[0.0, 0.0], [0.5, 0.0]]]},
            "sampleTimes": [-5.0, -4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            "evolution": {"tMax": 10.0, "dt": 1e-3},
            "tolerances": {"acpResidual": 1e-4, "eigenResidual": 1e-12, "reductionMismatch": 1e-8, "translationError": 1e-9},
            "csvStride": 100,
            "reportFormat": "both",
        }),
        ScenarioKind::DiagRotation => json!({
            "seed": 42,
            "frequencies": [1.0, std::f64::consts::SQRT_2, 3f64.sqrt()],
            "evolution": {"tMax": 2e4, "dt": 0.05},
            "targets": [{"index": 0, "centerTime": 7.0, "radius": 0.3}],
            "tolerances": {"densityDrift": 0.02, "densityMin": 1e-3, "subspaceResidual": 1e-12},
            "csvStride": 200,
            "reportFormat": "both",
        }),
        ScenarioKind::DeltaVsCompanion => json!({
            "seed": 7,
            "operators": {"order": 3, "dim": 6, "scale": 0.5},
            "evolution": {"tMax": 10.0, "dt": 1e-3},
            "targets": [{"index": 0, "centerTime": 2.0, "radius": 0.3}],
            "lambdas": [[3.0, 0.0], [-3.0, 1.0], [0.0, 4.0]],
            "tolerances": {"acpResidual": 1e-5, "psiRoundTrip": 1e-12, "reductionMismatch": 1e-8},
            "csvStride": 100,
            "reportFormat": "both",
        }),
    }
}

pub fn run(cfg: &ScenarioConfig) -> Result<Outcome> {
    match cfg.kind() {
        ScenarioKind::Example21 => example21::run(cfg),
        ScenarioKind::Example23 => example23::run(cfg),
        ScenarioKind::DiagRotation => rotation::run(cfg),
        ScenarioKind::DeltaVsCompanion => delta_companion::run(cfg),
    }
}

/// Numerical breakdowns count as tolerance failures; every other core error
/// traces back to the configuration.
pub fn is_numerical_failure(e: &LabError) -> bool {
    matches!(e, LabError::NonfiniteState { .. } | LabError::NoConvergence(_))
}

/// Per-sample `||u_a - u_b|| / max(1, ||u_a||)` over the `u` blocks.
fn u_block_mismatch(a: &Derivatives, b: &Derivatives) -> Curve {
    let mut curve = Curve::new("reduction_mismatch.csv", &["t", "mismatch"]);
    for k in 0..a.len() {
        let ua = a.component(k, 0);
        let diff = linalg::norm(&(&ua - b.component(k, 0)));
        curve.push(vec![a.time(k), diff / linalg::norm(&ua).max(1.0)]);
    }
    curve
}

fn thin(curve: Curve, stride: usize) -> Curve {
    let last = curve.rows.len().saturating_sub(1);
    let rows = curve.rows.into_iter().enumerate().filter(|(k, _)| k % stride == 0 || *k == last).map(|p| p.1).collect();
    Curve { rows, ..curve }
}

/// `sum_t F(t) / (1 + |t|)` over the sample times.
fn superpose(fields: impl Iterator<Item = Result<(f64, CVec)>>) -> Result<CVec> {
    let mut acc: Option<CVec> = None;
    for item in fields {
        let (t, v) = item?;
        let v = v / c64(1.0 + t.abs(), 0.0);
        acc = Some(match acc {
            Some(a) => a + v,
            None => v,
        });
    }
    acc.ok_or(LabError::EmptySamples)
}
