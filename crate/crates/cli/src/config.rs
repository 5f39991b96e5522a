//! Scenario configuration.
//!
//! The effective configuration is the scenario defaults, overlaid by an
//! optional JSON file, overlaid by command-line flags. Objects merge key by
//! key; arrays, scalars and the `polynomials` object are replaced whole.

use std::collections::BTreeMap;
use std::fmt;

use clap::ValueEnum;
use hclab_core::dynamics::{EvolutionConfig, MAX_STEPS};
use hclab_core::linalg::c64;
use hclab_core::polyspec::{complete_condition, ComplexPoly};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::scenarios::{self, ScenarioKind};

/// A rejected field, reported as `path: message`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Both,
}

impl ReportFormat {
    pub fn json(self) -> bool {
        self != ReportFormat::Csv
    }

    pub fn csv(self) -> bool {
        self != ReportFormat::Json
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct GridConfig {
    pub half_width: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuConfig {
    pub b: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WeightKind {
    /// `rho = 1`, admissible with `M = 1`, `omega = 0`.
    Unit,
    /// `rho(s) = e^{-alpha |s|}`, admissible with `M = 1`, `omega = alpha`.
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    pub kind: WeightKind,
    #[serde(default)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomOperatorsConfig {
    pub order: usize,
    pub dim: usize,
    pub scale: f64,
}

/// Coefficient lists, lowest degree first, each coefficient `[re, im]`.
/// Exactly one of `explicit` (all `n` polynomials) or `complete` (the lower
/// `n - 1`, with `P_{n-1}` solved from the characteristic condition).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialConfig {
    pub order: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complete: Option<Vec<Vec<[f64; 2]>>>,
}

impl PolynomialConfig {
    pub fn resolve(&self) -> Result<Vec<ComplexPoly>, ConfigError> {
        let to_poly = |c: &Vec<[f64; 2]>| ComplexPoly::new(c.iter().map(|&[re, im]| c64(re, im)).collect());
        match (&self.explicit, &self.complete) {
            (Some(all), None) => Ok(all.iter().map(to_poly).collect()),
            (None, Some(lower)) => {
                let mut polys: Vec<ComplexPoly> = lower.iter().map(to_poly).collect();
                let top = complete_condition(self.order, &polys)
                    .map_err(|e| ConfigError::new("polynomials.complete", e.to_string()))?;
                polys.push(top);
                Ok(polys)
            }
            _ => Err(ConfigError::new("polynomials", "give exactly one of `explicit` or `complete`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct EvolutionSettings {
    pub t_max: f64,
    pub dt: f64,
}

/// A ball around the orbit point at `centerTime`, with radius relative to
/// the norm of that point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TargetConfig {
    pub index: usize,
    pub center_time: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics_grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ou: Option<OuConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operators: Option<RandomOperatorsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequencies: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polynomials: Option<PolynomialConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sample_times: Vec<f64>,
    pub evolution: EvolutionSettings,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<TargetConfig>,
    /// DEF21 resolvent parameters `[re, im]`; the first places the target.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambdas: Vec<[f64; 2]>,
    pub tolerances: BTreeMap<String, f64>,
    pub csv_stride: usize,
    pub report_format: ReportFormat,
}

impl ScenarioConfig {
    pub fn kind(&self) -> ScenarioKind {
        ScenarioKind::from_name(&self.scenario).expect("validated scenario name")
    }

    pub fn tolerance(&self, key: &str) -> f64 {
        self.tolerances[key]
    }

    pub fn evolution_config(&self) -> EvolutionConfig {
        EvolutionConfig { t_max: self.evolution.t_max, dt: self.evolution.dt }
    }
}

/// Flag values that override configuration fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<String>,
    pub seed: Option<u64>,
    pub t_max: Option<f64>,
    pub dt: Option<f64>,
    pub grid_n: Option<usize>,
    pub report_format: Option<ReportFormat>,
}

/// Merges defaults, the optional file contents and the flags, then parses
/// and validates the result.
pub fn resolve(file: Option<&str>, flags: &Overrides) -> Result<ScenarioConfig, Vec<ConfigError>> {
    let overlay: Value = match file {
        Some(text) => {
            serde_json::from_str(text).map_err(|e| vec![ConfigError::new("<config>", format!("invalid JSON: {e}"))])?
        }
        None => json!({}),
    };
    if !overlay.is_object() {
        return Err(vec![ConfigError::new("<config>", "top level must be an object")]);
    }
    let name = match (&flags.scenario, overlay.get("scenario")) {
        (Some(name), _) => name.clone(),
        (None, Some(Value::String(name))) => name.clone(),
        (None, Some(_)) => return Err(vec![ConfigError::new("scenario", "must be a string")]),
        (None, None) => return Err(vec![ConfigError::new("scenario", "required (use --scenario or the config file)")]),
    };
    let kind = ScenarioKind::from_name(&name)
        .ok_or_else(|| vec![ConfigError::new("scenario", format!("unknown scenario `{name}`; see `hclab list`"))])?;
    let mut merged = scenarios::defaults(kind);
    merge(&mut merged, overlay);
    apply_flags(&mut merged, flags)?;
    merged["scenario"] = json!(name);

    let cfg: ScenarioConfig = serde_path_to_error::deserialize(merged).map_err(|e| {
        let path = e.path().to_string();
        vec![ConfigError::new(path, e.into_inner().to_string())]
    })?;
    let errors = validate(&cfg);
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(errors)
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if k != "polynomials" => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn apply_flags(cfg: &mut Value, flags: &Overrides) -> Result<(), Vec<ConfigError>> {
    if let Some(seed) = flags.seed {
        cfg["seed"] = json!(seed);
    }
    if let Some(t_max) = flags.t_max {
        cfg["evolution"]["tMax"] = json!(t_max);
    }
    if let Some(dt) = flags.dt {
        cfg["evolution"]["dt"] = json!(dt);
    }
    if let Some(n) = flags.grid_n {
        match cfg.get_mut("grid") {
            Some(grid) if grid.is_object() => grid["points"] = json!(n),
            _ => return Err(vec![ConfigError::new("grid.points", "--grid-n given but this scenario has no grid")]),
        }
    }
    if let Some(fmt) = flags.report_format {
        cfg["reportFormat"] = serde_json::to_value(fmt).expect("enum serializes");
    }
    Ok(())
}

fn validate(cfg: &ScenarioConfig) -> Vec<ConfigError> {
    let kind = cfg.kind();
    let mut errs = Vec::new();
    let mut need = |present: bool, path: &str| {
        if !present {
            errs.push(ConfigError::new(path, format!("required by scenario {}", kind.name())));
        }
    };
    let spec = kind.requirements();
    need(!spec.grid || cfg.grid.is_some(), "grid");
    need(!spec.dynamics_grid || cfg.dynamics_grid.is_some(), "dynamicsGrid");
    need(!spec.ou || cfg.ou.is_some(), "ou");
    need(!spec.weight || cfg.weight.is_some(), "weight");
    need(!spec.operators || cfg.operators.is_some(), "operators");
    need(!spec.frequencies || cfg.frequencies.is_some(), "frequencies");
    need(!spec.polynomials || cfg.polynomials.is_some(), "polynomials");
    need(!spec.sample_times || !cfg.sample_times.is_empty(), "sampleTimes");
    need(!spec.targets || !cfg.targets.is_empty(), "targets");
    need(!spec.lambdas || !cfg.lambdas.is_empty(), "lambdas");
    let unused = [
        (cfg.grid.is_some() && !spec.grid, "grid"),
        (cfg.dynamics_grid.is_some() && !spec.dynamics_grid, "dynamicsGrid"),
        (cfg.ou.is_some() && !spec.ou, "ou"),
        (cfg.weight.is_some() && !spec.weight, "weight"),
        (cfg.operators.is_some() && !spec.operators, "operators"),
        (cfg.frequencies.is_some() && !spec.frequencies, "frequencies"),
        (cfg.polynomials.is_some() && !spec.polynomials, "polynomials"),
        (!cfg.sample_times.is_empty() && !spec.sample_times, "sampleTimes"),
        (!cfg.targets.is_empty() && !spec.targets, "targets"),
        (!cfg.lambdas.is_empty() && !spec.lambdas, "lambdas"),
    ];
    for (bad, path) in unused {
        if bad {
            errs.push(ConfigError::new(path, format!("not used by scenario {}", kind.name())));
        }
    }

    let even = spec.ou;
    for (grid, path) in [(&cfg.grid, "grid"), (&cfg.dynamics_grid, "dynamicsGrid")] {
        if let Some(g) = grid {
            if !(g.half_width > 0.0 && g.half_width.is_finite()) {
                errs.push(ConfigError::new(format!("{path}.halfWidth"), "must be positive and finite"));
            }
            if g.points < hclab_core::backends::MIN_POINTS {
                errs.push(ConfigError::new(
                    format!("{path}.points"),
                    format!("must be at least {}", hclab_core::backends::MIN_POINTS),
                ));
            } else if even && g.points % 2 != 0 {
                errs.push(ConfigError::new(format!("{path}.points"), "must be even"));
            }
        }
    }
    if let Some(ou) = cfg.ou {
        if !(ou.b > 0.0 && ou.c > ou.b / 2.0 && ou.c.is_finite()) {
            errs.push(ConfigError::new("ou", "requires c > b/2 > 0"));
        }
    }
    if let Some(w) = cfg.weight {
        if !(w.alpha >= 0.0 && w.alpha.is_finite()) {
            errs.push(ConfigError::new("weight.alpha", "must be nonnegative and finite"));
        }
    }
    if let Some(ops) = cfg.operators {
        if !(1..=8).contains(&ops.order) {
            errs.push(ConfigError::new("operators.order", "must be between 1 and 8"));
        }
        if !(1..=64).contains(&ops.dim) {
            errs.push(ConfigError::new("operators.dim", "must be between 1 and 64"));
        }
        if !(ops.scale > 0.0 && ops.scale.is_finite()) {
            errs.push(ConfigError::new("operators.scale", "must be positive and finite"));
        }
    }
    if let Some(freqs) = &cfg.frequencies {
        if freqs.is_empty() {
            errs.push(ConfigError::new("frequencies", "must be nonempty"));
        }
        for (k, w) in freqs.iter().enumerate() {
            if !w.is_finite() {
                errs.push(ConfigError::new(format!("frequencies[{k}]"), "must be finite"));
            }
            if freqs[..k].contains(w) {
                errs.push(ConfigError::new(format!("frequencies[{k}]"), "repeats an earlier frequency"));
            }
        }
    }
    if let Some(p) = &cfg.polynomials {
        validate_polynomials(p, &mut errs);
    }
    for (k, t) in cfg.sample_times.iter().enumerate() {
        if !t.is_finite() {
            errs.push(ConfigError::new(format!("sampleTimes[{k}]"), "must be finite"));
        }
    }
    let ev = cfg.evolution;
    if !(ev.t_max > 0.0 && ev.t_max.is_finite()) {
        errs.push(ConfigError::new("evolution.tMax", "must be positive and finite"));
    }
    if !(ev.dt > 0.0 && ev.dt <= ev.t_max) {
        errs.push(ConfigError::new("evolution.dt", "must be positive and at most tMax"));
    } else if ev.t_max / ev.dt > MAX_STEPS {
        errs.push(ConfigError::new("evolution", format!("more than {MAX_STEPS:e} steps")));
    }
    let order = cfg.polynomials.as_ref().map(|p| p.order).or(cfg.operators.map(|o| o.order)).unwrap_or(1);
    for (k, t) in cfg.targets.iter().enumerate() {
        if !(t.radius > 0.0 && t.radius.is_finite()) {
            errs.push(ConfigError::new(format!("targets[{k}].radius"), "must be positive and finite"));
        }
        if !(t.center_time >= 0.0 && t.center_time <= ev.t_max) {
            errs.push(ConfigError::new(format!("targets[{k}].centerTime"), "must lie in [0, evolution.tMax]"));
        }
        if t.index >= order {
            errs.push(ConfigError::new(format!("targets[{k}].index"), format!("must be below the order {order}")));
        }
        if cfg.targets[..k].iter().any(|o| o.index == t.index) {
            errs.push(ConfigError::new(format!("targets[{k}].index"), "repeats an earlier component"));
        }
    }
    for (k, l) in cfg.lambdas.iter().enumerate() {
        if !(l[0].is_finite() && l[1].is_finite()) {
            errs.push(ConfigError::new(format!("lambdas[{k}]"), "must be finite"));
        }
    }
    let known = kind.tolerance_keys();
    for (key, value) in &cfg.tolerances {
        if !known.contains(&key.as_str()) {
            errs.push(ConfigError::new(format!("tolerances.{key}"), format!("unknown for scenario {}", kind.name())));
        } else if !(*value > 0.0 && value.is_finite()) {
            errs.push(ConfigError::new(format!("tolerances.{key}"), "must be positive and finite"));
        }
    }
    for key in known {
        if !cfg.tolerances.contains_key(*key) {
            errs.push(ConfigError::new(format!("tolerances.{key}"), "required"));
        }
    }
    if cfg.csv_stride == 0 {
        errs.push(ConfigError::new("csvStride", "must be at least 1"));
    }
    errs
}

fn validate_polynomials(p: &PolynomialConfig, errs: &mut Vec<ConfigError>) {
    if !(1..=8).contains(&p.order) {
        errs.push(ConfigError::new("polynomials.order", "must be between 1 and 8"));
        return;
    }
    let (key, list, want) = match (&p.explicit, &p.complete) {
        (Some(all), None) => ("explicit", all, p.order),
        (None, Some(lower)) => ("complete", lower, p.order - 1),
        _ => {
            errs.push(ConfigError::new("polynomials", "give exactly one of `explicit` or `complete`"));
            return;
        }
    };
    if list.len() != want {
        errs.push(ConfigError::new(
            format!("polynomials.{key}"),
            format!("order {} needs {want} polynomials, got {}", p.order, list.len()),
        ));
        return;
    }
    for (l, coeffs) in list.iter().enumerate() {
        for (k, c) in coeffs.iter().enumerate() {
            if !(c[0].is_finite() && c[1].is_finite()) {
                errs.push(ConfigError::new(format!("polynomials.{key}[{l}][{k}]"), "must be finite"));
            }
        }
    }
    if errs.is_empty() {
        if let Err(e) = p.resolve() {
            errs.push(e);
        }
    }
}
