//! Visit-time sets, lower-density estimates and recurrence harnesses.
//!
//! No finite-dimensional system is frequently hypercyclic. The harness
//! measures how often a sampled orbit enters target balls and reports the
//! resulting lower-density proxy as a surrogate statistic.

use std::io::Write;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::Derivatives;
use crate::eigenfields::SubspaceBasis;
use crate::error::{LabError, Result};
use crate::linalg::{self, c64, CMat, CVec};
use crate::reduction::{build_psi, BlockOperatorMatrix, InitialData};

/// Relative membership tolerance for the subspace constraints.
pub const DEFAULT_MEMBERSHIP_TOLERANCE: f64 = 1e-6;

/// Smallest singular value of `lambda - Delta` below which `lambda` counts
/// as a spectral point.
pub const RESOLVENT_THRESHOLD: f64 = 1e-10;

pub const SURROGATE_NOTE: &str = "finite-dimensional surrogate: densities are recurrence statistics \
of a truncated model; frequent hypercyclicity is not certified";

pub const HEURISTIC_CANDIDATE_NOTE: &str =
    "candidate drawn as a random superposition of sampled eigenfield lifts (heuristic)";

/// Times at which an orbit satisfies a target predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VisitSet {
    /// Sample `k` stands for `[k dt, (k+1) dt)`; horizon `mask.len() * dt`.
    BooleanMask { dt: f64, mask: Vec<bool> },
    /// Sorted disjoint half-open intervals inside `[0, t_max]`.
    IntervalList { intervals: Vec<(f64, f64)>, t_max: f64 },
}

impl VisitSet {
    pub fn mask(dt: f64, mask: Vec<bool>) -> Result<Self> {
        if !(dt > 0.0) || mask.is_empty() {
            return Err(LabError::InvalidInput("mask needs dt > 0 and at least one sample".into()));
        }
        Ok(VisitSet::BooleanMask { dt, mask })
    }

    pub fn intervals(intervals: Vec<(f64, f64)>, t_max: f64) -> Result<Self> {
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(LabError::InvalidInput(format!("horizon must be positive, got {t_max}")));
        }
        let mut prev_end = 0.0;
        for &(a, b) in &intervals {
            if !(a >= prev_end && a <= b && b <= t_max) {
                return Err(LabError::InvalidInput(format!(
                    "interval [{a}, {b}) is not sorted, disjoint and inside [0, {t_max}]"
                )));
            }
            prev_end = b;
        }
        Ok(VisitSet::IntervalList { intervals, t_max })
    }

    pub fn horizon(&self) -> f64 {
        match self {
            VisitSet::BooleanMask { dt, mask } => dt * mask.len() as f64,
            VisitSet::IntervalList { t_max, .. } => *t_max,
        }
    }

    /// Lebesgue measure of the set inside `[0, t]`.
    pub fn measure_up_to(&self, t: f64) -> f64 {
        match self {
            VisitSet::BooleanMask { dt, mask } => {
                let k = ((t / dt).floor() as usize).min(mask.len());
                dt * mask[..k].iter().filter(|&&b| b).count() as f64
            }
            VisitSet::IntervalList { intervals, .. } => intervals.iter().map(|&(a, b)| (b.min(t) - a).max(0.0)).sum(),
        }
    }

    /// Set inclusion, for masks of equal shape.
    pub fn is_subset_of(&self, other: &VisitSet) -> bool {
        match (self, other) {
            (VisitSet::BooleanMask { mask: a, .. }, VisitSet::BooleanMask { mask: b, .. }) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| !x || *y)
            }
            _ => false,
        }
    }
}

/// Running ratios `m(T cap [0, t]) / t` and the liminf proxy
/// `min { ratio(t) : t0 <= t <= t_max }` with `t0 = max(1, t_max / 100)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DensityEstimate {
    pub curve: Vec<(f64, f64)>,
    pub proxy: f64,
    pub burn_in: f64,
    pub horizon: f64,
}

impl DensityEstimate {
    fn from_curve(curve: Vec<(f64, f64)>, horizon: f64) -> Self {
        let burn_in = burn_in(horizon);
        let proxy = curve.iter().filter(|(t, _)| *t >= burn_in).map(|&(_, r)| r).fold(f64::INFINITY, f64::min);
        let proxy = if proxy.is_finite() { proxy } else { curve.last().map_or(0.0, |p| p.1) };
        Self { curve, proxy, burn_in, horizon }
    }

    /// Ratio at the end of the horizon.
    pub fn final_ratio(&self) -> f64 {
        self.curve.last().map_or(0.0, |p| p.1)
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "t,ratio")?;
        for (t, r) in &self.curve {
            writeln!(out, "{t:e},{r:e}")?;
        }
        Ok(())
    }
}

pub fn burn_in(horizon: f64) -> f64 {
    (0.01 * horizon).max(1.0)
}

/// `|T cap [1, n]| / n` for `n = 1..=n_max`; elements outside `[1, n_max]`
/// are ignored.
pub fn lower_density_discrete(set: &[u64], n_max: u64) -> DensityEstimate {
    let mut hits = vec![false; n_max as usize + 1];
    for &k in set {
        if (1..=n_max).contains(&k) {
            hits[k as usize] = true;
        }
    }
    let mut count = 0usize;
    let curve = (1..=n_max as usize)
        .map(|n| {
            count += hits[n] as usize;
            (n as f64, count as f64 / n as f64)
        })
        .collect();
    DensityEstimate::from_curve(curve, n_max as f64)
}

/// Exact for interval lists: the running ratio increases inside intervals
/// and decreases between them, so its minimum over `[t0, t_max]` sits at an
/// interval start, at `t0` or at `t_max`, all of which are on the curve.
/// For masks the measure is the `dt`-quadrature of the indicator.
pub fn lower_density_continuous(set: &VisitSet) -> DensityEstimate {
    let horizon = set.horizon();
    let curve = match set {
        VisitSet::BooleanMask { dt, mask } => {
            let mut count = 0usize;
            mask.iter()
                .enumerate()
                .map(|(k, &b)| {
                    count += b as usize;
                    ((k + 1) as f64 * dt, count as f64 / (k + 1) as f64)
                })
                .collect()
        }
        VisitSet::IntervalList { intervals, t_max } => {
            let t0 = burn_in(*t_max).min(*t_max);
            let mut times: Vec<f64> =
                intervals.iter().flat_map(|&(a, b)| [a, b]).filter(|&t| t > 0.0).chain([t0, *t_max]).collect();
            times.sort_by(f64::total_cmp);
            times.dedup();
            let mut measure = 0.0;
            let mut idx = 0;
            times
                .into_iter()
                .map(|t| {
                    while idx < intervals.len() && intervals[idx].1 <= t {
                        measure += intervals[idx].1 - intervals[idx].0;
                        idx += 1;
                    }
                    let partial = intervals.get(idx).map_or(0.0, |&(a, _)| (t - a).max(0.0));
                    (t, (measure + partial) / t)
                })
                .collect()
        }
    };
    DensityEstimate::from_curve(curve, horizon)
}

/// One open ball `V_i` with an optional subspace `E_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentTarget {
    pub index: usize,
    pub center: CVec,
    pub radius: f64,
    /// Orthonormal basis of `E_i`; `None` means the whole space.
    pub subspace: Option<CMat>,
    pub tolerance: f64,
}

impl ComponentTarget {
    pub fn ball(index: usize, center: CVec, radius: f64) -> Self {
        Self { index, center, radius, subspace: None, tolerance: DEFAULT_MEMBERSHIP_TOLERANCE }
    }

    pub fn with_subspace(mut self, basis: CMat) -> Self {
        self.subspace = Some(basis);
        self
    }

    fn subspace_ok(&self, y: &CVec) -> bool {
        match &self.subspace {
            None => true,
            Some(q) => {
                let ny = linalg::norm(y);
                ny == 0.0 || linalg::norm(&(y - q * (q.adjoint() * y))) <= self.tolerance * ny
            }
        }
    }
}

/// Data for the Neubrander-state targets `pi_{i+1}((lambda - Delta)^{-n}(V))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaTargetData {
    pub lambda: Complex64,
    pub power: usize,
    /// Center of the ball `V` in the full `n d` space.
    pub center: CVec,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub components: Vec<ComponentTarget>,
    pub delta: Option<DeltaTargetData>,
}

impl TargetSpec {
    pub fn new(components: Vec<ComponentTarget>, delta: Option<DeltaTargetData>) -> Result<Self> {
        if components.is_empty() {
            return Err(LabError::InvalidInput("W must be nonempty".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &components {
            if !(c.radius > 0.0) {
                return Err(LabError::InvalidInput(format!("radius of component {} must be positive", c.index)));
            }
            if !seen.insert(c.index) {
                return Err(LabError::InvalidInput(format!("component {} listed twice", c.index)));
            }
        }
        if let Some(dd) = &delta {
            if !(dd.radius > 0.0) {
                return Err(LabError::InvalidInput("radius of V must be positive".into()));
            }
        }
        Ok(Self { components, delta })
    }

    pub fn indices(&self) -> Vec<usize> {
        self.components.iter().map(|c| c.index).collect()
    }
}

/// Sample `k` is a visit iff every `u^{(i)}(t_k)`, `i` in `W`, lies in its
/// ball and within tolerance of its subspace.
pub fn visit_set(derivs: &Derivatives, target: &TargetSpec) -> Result<VisitSet> {
    check_components(derivs, target)?;
    let mask = (0..derivs.len())
        .map(|k| {
            target.components.iter().all(|c| {
                let y = derivs.component(k, c.index);
                linalg::norm(&(&y - &c.center)) < c.radius && c.subspace_ok(&y)
            })
        })
        .collect();
    VisitSet::mask(derivs.dt(), mask)
}

fn check_components(derivs: &Derivatives, target: &TargetSpec) -> Result<()> {
    for c in &target.components {
        if c.index >= derivs.order() {
            return Err(LabError::MissingComponent { component: c.index, order: derivs.order() });
        }
        if c.center.len() != derivs.block_dim() {
            return Err(LabError::DimMismatch(format!(
                "center of component {} has {} entries, blocks have {}",
                c.index,
                c.center.len(),
                derivs.block_dim()
            )));
        }
    }
    Ok(())
}

/// Membership predicates for `(lambda - Delta)^{-n}(V)` and its block
/// projections, tested by mapping points forward with `L = (lambda - Delta)^n`.
#[derive(Debug, Clone)]
pub struct DeltaTargets {
    lambda: Complex64,
    n: usize,
    d: usize,
    l: CMat,
    center: CVec,
    radius: f64,
    /// Per block `i`: columns of `L` acting on block `i`, and an orthonormal
    /// basis of the range of the remaining columns.
    blocks: Vec<(CMat, CMat)>,
}

impl DeltaTargets {
    pub fn lambda(&self) -> Complex64 {
        self.lambda
    }

    /// `(lambda - Delta)^n`.
    pub fn forward_map(&self) -> &CMat {
        &self.l
    }

    /// `||L x - c|| - r`; negative inside.
    pub fn state_margin(&self, x: &CVec) -> f64 {
        linalg::norm(&(&self.l * x - &self.center)) - self.radius
    }

    /// `x in (lambda - Delta)^{-n}(V)`.
    pub fn contains_state(&self, x: &CVec) -> bool {
        self.state_margin(x) < 0.0
    }

    /// Distance from `L_{:,i} w - c` to the range of the other block
    /// columns, minus `r`; negative iff `w` is in the `i`-th projection.
    pub fn component_margin(&self, i: usize, w: &CVec) -> f64 {
        let (li, q) = &self.blocks[i];
        let v = li * w - &self.center;
        let resid = &v - q * (q.adjoint() * &v);
        linalg::norm(&resid) - self.radius
    }

    pub fn contains_component(&self, i: usize, w: &CVec) -> bool {
        self.component_margin(i, w) < 0.0
    }

    /// `Phi = L_self L_other^{-1}`, so that `L_self x = Phi (L_other x)`.
    pub fn transition_map(&self, other: &DeltaTargets) -> Result<CMat> {
        let inv = linalg::solve(&other.l, &linalg::identity(self.l.nrows()))?;
        Ok(&self.l * inv)
    }

    /// Membership of `y = L_other x` in `Phi^{-1}(V)`, the ball carried over
    /// to the other parameter.
    pub fn contains_mapped(&self, phi: &CMat, y: &CVec) -> bool {
        linalg::norm(&(phi * y - &self.center)) < self.radius
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn block_dim(&self) -> usize {
        self.d
    }
}

pub fn delta_mode_targets(target: &TargetSpec, delta: &BlockOperatorMatrix) -> Result<DeltaTargets> {
    let data =
        target.delta.as_ref().ok_or_else(|| LabError::InvalidInput("target carries no DELTA-mode data".into()))?;
    let n = delta.order();
    let d = delta.block_dim();
    let size = delta.size();
    if data.center.len() != size {
        return Err(LabError::DimMismatch(format!("center has {} entries, state has {size}", data.center.len())));
    }
    let shifted = linalg::identity(size) * data.lambda - delta.to_dense();
    let sigma_min = linalg::smallest_singular_value(&shifted)?;
    if !(sigma_min > RESOLVENT_THRESHOLD) {
        return Err(LabError::LambdaInSpectrum { sigma_min });
    }
    let l = (0..data.power).fold(linalg::identity(size), |acc, _| linalg::matmul(&acc, &shifted));
    let mut blocks = Vec::with_capacity(n);
    for i in 0..n {
        let li = l.columns(i * d, d).into_owned();
        let mut rest = CMat::zeros(size, size - d);
        let mut col = 0;
        for j in (0..size).filter(|j| j / d != i) {
            rest.set_column(col, &l.column(j));
            col += 1;
        }
        blocks.push((li, linalg::orthonormal_range(&rest, 1e-14)?));
    }
    Ok(DeltaTargets { lambda: data.lambda, n, d, l, center: data.center.clone(), radius: data.radius, blocks })
}

/// Coefficients for a candidate vector in the sampled subspace.
#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    Explicit(Vec<Complex64>),
    /// Independent standard complex Gaussians from a seeded ChaCha stream.
    Random(u64),
}

/// `x = sum_k c_k b_k / ||.||` over the basis columns.
pub fn synthesize_candidate(basis: &SubspaceBasis, weights: &Weights) -> Result<CVec> {
    let rank = basis.rank();
    let coeffs: Vec<Complex64> = match weights {
        Weights::Explicit(w) => {
            if w.len() != rank {
                return Err(LabError::LengthMismatch { expected: rank, got: w.len() });
            }
            w.clone()
        }
        Weights::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..rank)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    c64(re, im) / 2f64.sqrt()
                })
                .collect()
        }
    };
    let x = basis.columns() * CVec::from_vec(coeffs);
    let nrm = linalg::norm(&x);
    if nrm == 0.0 {
        return Err(LabError::InvalidInput("weights produce the zero vector".into()));
    }
    Ok(x / c64(nrm, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HarnessMode {
    Def11,
    Def21,
}

/// Closest approach of one tested component to its target over the orbit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NearestApproach {
    pub component: usize,
    /// Smallest distance to the ball center (DEF11) or to the projected
    /// ellipsoid center (DEF21).
    pub distance: f64,
    pub radius: f64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HarnessReport {
    pub target: serde_json::Value,
    pub mode: HarnessMode,
    pub density_proxy: f64,
    pub final_ratio: f64,
    pub nearest_approach: Vec<NearestApproach>,
    pub horizon: f64,
    pub seed: Option<u64>,
    pub note: String,
}

/// DEF11 tests `u^{(i)}` against the component balls. DEF21 tests the
/// Neubrander combinations `u^{(i)} + sum_{j=1}^{i} A_{n-j} u^{(i-j)}`
/// against the projections of `(lambda - Delta)^{-n}(V)`.
pub fn fh_harness(
    derivs: &Derivatives,
    target: &TargetSpec,
    mode: HarnessMode,
    delta: Option<&BlockOperatorMatrix>,
    seed: Option<u64>,
) -> Result<(DensityEstimate, HarnessReport, VisitSet)> {
    check_components(derivs, target)?;
    let samples = derivs.len();
    let mut nearest: Vec<NearestApproach> = target
        .components
        .iter()
        .map(|c| NearestApproach { component: c.index, distance: f64::INFINITY, radius: c.radius, time: 0.0 })
        .collect();
    let mask: Vec<bool> = match mode {
        HarnessMode::Def11 => (0..samples)
            .map(|k| {
                let mut inside = true;
                for (c, near) in target.components.iter().zip(nearest.iter_mut()) {
                    let y = derivs.component(k, c.index);
                    let dist = linalg::norm(&(&y - &c.center));
                    if dist < near.distance {
                        near.distance = dist;
                        near.time = derivs.time(k);
                    }
                    inside &= dist < c.radius && c.subspace_ok(&y);
                }
                inside
            })
            .collect(),
        HarnessMode::Def21 => {
            let delta = delta.ok_or_else(|| LabError::InvalidInput("DEF21 needs the Delta matrix".into()))?;
            if delta.order() != derivs.order() || delta.block_dim() != derivs.block_dim() {
                return Err(LabError::DimMismatch("Delta matrix does not match the derivatives".into()));
            }
            let targets = delta_mode_targets(target, delta)?;
            let psi = build_psi(&delta.operators())?;
            let d = derivs.block_dim();
            let radius = targets.radius;
            for near in nearest.iter_mut() {
                near.radius = radius;
            }
            (0..samples)
                .map(|k| {
                    let state = psi.apply(&derivs.stacked(k));
                    let mut inside = true;
                    for (c, near) in target.components.iter().zip(nearest.iter_mut()) {
                        let w = state.rows(c.index * d, d).into_owned();
                        let dist = targets.component_margin(c.index, &w) + radius;
                        if dist < near.distance {
                            near.distance = dist;
                            near.time = derivs.time(k);
                        }
                        inside &= dist < radius && c.subspace_ok(&w);
                    }
                    inside
                })
                .collect()
        }
    };
    let set = VisitSet::mask(derivs.dt(), mask)?;
    let estimate = lower_density_continuous(&set);
    let report = HarnessReport {
        target: describe_target(target),
        mode,
        density_proxy: estimate.proxy,
        final_ratio: estimate.final_ratio(),
        nearest_approach: nearest,
        horizon: set.horizon(),
        seed,
        note: SURROGATE_NOTE.into(),
    };
    Ok((estimate, report, set))
}

fn describe_target(target: &TargetSpec) -> serde_json::Value {
    let components: Vec<serde_json::Value> = target
        .components
        .iter()
        .map(|c| {
            serde_json::json!({
                "index": c.index,
                "center": linalg::vector_to_json(&c.center),
                "radius": c.radius,
                "subspaceRank": c.subspace.as_ref().map(|q| q.ncols()),
                "tolerance": c.tolerance,
            })
        })
        .collect();
    let delta = target.delta.as_ref().map(|dd| {
        serde_json::json!({
            "lambda": [dd.lambda.re, dd.lambda.im],
            "power": dd.power,
            "center": linalg::vector_to_json(&dd.center),
            "radius": dd.radius,
        })
    });
    serde_json::json!({ "components": components, "delta": delta })
}

/// Neubrander combinations of a derivative tuple (the `Psi` image), used to
/// place DEF21 targets at orbit points.
pub fn delta_state_of(derivs: &Derivatives, k: usize, delta: &BlockOperatorMatrix) -> Result<CVec> {
    let init = InitialData::from_stacked(&derivs.stacked(k), derivs.order())?;
    crate::reduction::derivatives_to_delta_state(&delta.operators(), &init)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::diag_model;
    use crate::dynamics::{derivatives_from_samples, evolve_operator, states_as_solution, EvolutionConfig};
    use crate::reduction::{build_delta, scalar_operator, OperatorHandle};

    #[test]
    fn discrete_even_numbers() {
        let evens: Vec<u64> = (1..=5000).map(|k| 2 * k).collect();
        let est = lower_density_discrete(&evens, 10_000);
        // Minimum of the running ratio past the burn-in n = 100 is at n = 101.
        assert!((est.proxy - 50.0 / 101.0).abs() < 1e-15);
        assert!((est.proxy - 0.5).abs() < 0.01);
        assert!((est.final_ratio() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn discrete_squares_and_full_range() {
        let squares: Vec<u64> = (1..=1000).map(|k| k * k).collect();
        assert!(lower_density_discrete(&squares, 1_000_000).proxy <= 0.002);
        let all: Vec<u64> = (1..=1000).collect();
        assert_eq!(lower_density_discrete(&all, 1000).proxy, 1.0);
    }

    #[test]
    fn discrete_ignores_out_of_range_elements() {
        let est = lower_density_discrete(&[0, 1, 2, 50], 2);
        assert_eq!(est.curve, vec![(1.0, 1.0), (2.0, 1.0)]);
    }

    #[test]
    fn continuous_alternating_intervals() {
        let ivs: Vec<(f64, f64)> = (0..5000).map(|k| (2.0 * k as f64, 2.0 * k as f64 + 1.0)).collect();
        let est = lower_density_continuous(&VisitSet::intervals(ivs, 1e4).unwrap());
        assert!((est.proxy - 0.5).abs() <= 0.01, "{}", est.proxy);
        assert!((est.proxy - 50.0 / 100.0).abs() < 1e-15);
    }

    #[test]
    fn continuous_full_and_single() {
        let full = lower_density_continuous(&VisitSet::intervals(vec![(0.0, 1e4)], 1e4).unwrap());
        assert_eq!(full.proxy, 1.0);
        let single = lower_density_continuous(&VisitSet::intervals(vec![(0.0, 1.0)], 1e3).unwrap());
        assert!((single.proxy - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn interval_minimum_at_interval_start() {
        // Ratio dips to 1/3 at t = 3 (start of the second interval).
        let set = VisitSet::intervals(vec![(0.0, 1.0), (3.0, 100.0)], 100.0).unwrap();
        let est = lower_density_continuous(&set);
        assert!((est.proxy - 1.0 / 3.0).abs() < 1e-15);
        assert!(est.curve.iter().any(|&(t, _)| t == 3.0));
    }

    #[test]
    fn invalid_interval_lists() {
        assert!(VisitSet::intervals(vec![(2.0, 3.0), (1.0, 1.5)], 10.0).is_err());
        assert!(VisitSet::intervals(vec![(0.0, 11.0)], 10.0).is_err());
        assert!(VisitSet::intervals(vec![(2.0, 1.0)], 10.0).is_err());
    }

    #[test]
    fn mask_measure_is_quadrature() {
        let set = VisitSet::mask(0.5, vec![true, false, true, true]).unwrap();
        assert_eq!(set.horizon(), 2.0);
        assert_eq!(set.measure_up_to(2.0), 1.5);
        assert_eq!(set.measure_up_to(1.0), 0.5);
        let est = lower_density_continuous(&set);
        assert_eq!(est.curve.last().unwrap(), &(2.0, 0.75));
    }

    #[test]
    fn discrete_and_continuous_agree_on_integer_sets() {
        let set: Vec<u64> = (1..=10_000u64).filter(|k| k % 3 == 0 || k % 7 == 1).collect();
        let disc = lower_density_discrete(&set, 10_000);
        let ivs: Vec<(f64, f64)> = set.iter().map(|&k| ((k - 1) as f64, k as f64)).collect();
        let cont = lower_density_continuous(&VisitSet::intervals(ivs, 1e4).unwrap());
        assert!((disc.proxy - cont.proxy).abs() <= 0.01);
    }

    fn rotation_derivs(t_max: f64, dt: f64) -> (Derivatives, CVec) {
        let a = diag_model(&[c64(0.0, 1.0), c64(0.0, 2f64.sqrt())]);
        let x0 = CVec::from_element(2, c64(1.0 / 2f64.sqrt(), 0.0));
        let traj = evolve_operator(&a, &x0, &EvolutionConfig::new(t_max, dt).unwrap()).unwrap();
        (states_as_solution(&traj), x0)
    }

    #[test]
    fn huge_ball_catches_every_time() {
        let (derivs, x0) = rotation_derivs(50.0, 0.1);
        let target = TargetSpec::new(vec![ComponentTarget::ball(0, x0, 1e6)], None).unwrap();
        let set = visit_set(&derivs, &target).unwrap();
        assert!(matches!(&set, VisitSet::BooleanMask { mask, .. } if mask.iter().all(|&b| b)));
        let (est, report, _) = fh_harness(&derivs, &target, HarnessMode::Def11, None, None).unwrap();
        assert_eq!(est.proxy, 1.0);
        assert_eq!(report.density_proxy, 1.0);
        assert!(report.note.contains("surrogate"));
    }

    #[test]
    fn tiny_ball_catches_nothing() {
        let (derivs, x0) = rotation_derivs(50.0, 0.1);
        let center = x0 + CVec::from_element(2, c64(1e-3, 0.0));
        let target = TargetSpec::new(vec![ComponentTarget::ball(0, center, 1e-12)], None).unwrap();
        let set = visit_set(&derivs, &target).unwrap();
        assert_eq!(set.measure_up_to(set.horizon()), 0.0);
    }

    #[test]
    fn missing_component_and_bad_targets() {
        let (derivs, x0) = rotation_derivs(1.0, 0.1);
        let target = TargetSpec::new(vec![ComponentTarget::ball(1, x0.clone(), 1.0)], None).unwrap();
        assert_eq!(visit_set(&derivs, &target).unwrap_err().code(), "MISSING_COMPONENT");
        assert!(TargetSpec::new(vec![], None).is_err());
        assert!(TargetSpec::new(vec![ComponentTarget::ball(0, x0, -1.0)], None).is_err());
    }

    #[test]
    fn subspace_constraint_filters_visits() {
        let (derivs, x0) = rotation_derivs(20.0, 0.1);
        let e1 = CMat::from_fn(2, 1, |i, _| c64(if i == 0 { 1.0 } else { 0.0 }, 0.0));
        let target = TargetSpec::new(vec![ComponentTarget::ball(0, x0, 1e6).with_subspace(e1)], None).unwrap();
        let set = visit_set(&derivs, &target).unwrap();
        assert_eq!(set.measure_up_to(set.horizon()), 0.0);
    }

    #[test]
    fn contracting_orbit_leaves_target() {
        let a = diag_model(&[c64(-0.5, 1.0), c64(-1.0, 0.0)]);
        let x0 = CVec::from_element(2, c64(1.0, 0.0));
        let target = |h: f64| {
            let traj = evolve_operator(&a, &x0, &EvolutionConfig::new(h, 0.05).unwrap()).unwrap();
            let derivs = states_as_solution(&traj);
            let spec = TargetSpec::new(vec![ComponentTarget::ball(0, x0.clone(), 0.5)], None).unwrap();
            fh_harness(&derivs, &spec, HarnessMode::Def11, None, None).unwrap().0.final_ratio()
        };
        let (short, long) = (target(100.0), target(1000.0));
        assert!(long < short && long < 1e-3);
    }

    fn scalar_delta(a: f64) -> BlockOperatorMatrix {
        build_delta(&[scalar_operator(c64(a, 0.0), "A0")]).unwrap()
    }

    fn delta_target(lambda: Complex64, center: CVec, radius: f64, n: usize) -> TargetSpec {
        TargetSpec::new(
            vec![ComponentTarget::ball(0, CVec::zeros(center.len() / n), 1.0)],
            Some(DeltaTargetData { lambda, power: n, center, radius }),
        )
        .unwrap()
    }

    #[test]
    fn delta_scalar_membership() {
        let a = 2.5;
        let targets =
            delta_mode_targets(&delta_target(c64(0.0, 0.0), CVec::zeros(1), 1.0, 1), &scalar_delta(a)).unwrap();
        for x in [-0.5, -0.39, 0.0, 0.3, 0.41, 1.0] {
            let v = CVec::from_element(1, c64(x, 0.0));
            assert_eq!(targets.contains_state(&v), (a * x).abs() < 1.0, "x = {x}");
            assert_eq!(targets.contains_component(0, &v), (a * x).abs() < 1.0, "x = {x}");
        }
    }

    #[test]
    fn delta_lambda_in_spectrum() {
        let err = delta_mode_targets(&delta_target(c64(-2.0, 0.0), CVec::zeros(1), 1.0, 1), &scalar_delta(2.0));
        assert_eq!(err.unwrap_err().code(), "LAMBDA_IN_SPECTRUM");
    }

    #[test]
    fn delta_infinite_radius_contains_everything() {
        let ops = crate::backends::random_operators(2, 3, 2, 1.0);
        let delta = build_delta(&ops).unwrap();
        let spec = delta_target(c64(3.0, 0.0), CVec::zeros(6), f64::INFINITY, 3);
        let targets = delta_mode_targets(&spec, &delta).unwrap();
        let x = CVec::from_element(6, c64(1e8, -1e8));
        assert!(targets.contains_state(&x));
        for i in 0..3 {
            assert!(targets.contains_component(i, &x.rows(2 * i, 2).into_owned()));
        }
    }

    #[test]
    fn component_projection_is_exact_for_state_members() {
        // Every block of a member state is in the corresponding projection,
        // and the projected margin never exceeds the full-state margin.
        let ops = crate::backends::random_operators(4, 2, 2, 1.0);
        let delta = build_delta(&ops).unwrap();
        let spec = delta_target(c64(2.0, 1.0), CVec::from_element(4, c64(0.3, 0.0)), 5.0, 2);
        let targets = delta_mode_targets(&spec, &delta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let x = CVec::from_fn(4, |_, _| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                c64(re, im) * 0.5
            });
            let full = targets.state_margin(&x);
            for i in 0..2 {
                let m = targets.component_margin(i, &x.rows(2 * i, 2).into_owned());
                assert!(m <= full + 1e-12);
            }
        }
    }

    #[test]
    fn transition_map_reproduces_forward_map() {
        let ops = crate::backends::random_operators(6, 2, 3, 1.0);
        let delta = build_delta(&ops).unwrap();
        let c = CVec::from_element(6, c64(0.1, 0.2));
        let t1 = delta_mode_targets(&delta_target(c64(3.0, 0.5), c.clone(), 2.0, 2), &delta).unwrap();
        let t2 = delta_mode_targets(&delta_target(c64(-1.0, 4.0), c, 2.0, 2), &delta).unwrap();
        let phi = t1.transition_map(&t2).unwrap();
        assert!(linalg::condition_number(&phi).unwrap().is_finite());
        let lhs = t1.forward_map();
        let rhs = &phi * t2.forward_map();
        assert!(linalg::frobenius(&(lhs - rhs)) <= 1e-10 * linalg::frobenius(lhs));
    }

    #[test]
    fn def21_harness_on_first_order_rotation() {
        // n = 1: Delta = -A_0 and the Neubrander state is u itself.
        let a0 = OperatorHandle::new(
            CMat::from_diagonal(&CVec::from_vec(vec![c64(0.0, -1.0), c64(0.0, -(2f64.sqrt()))])),
            "A0",
        )
        .unwrap();
        let delta = build_delta(&[a0.clone()]).unwrap();
        let gen = OperatorHandle::new(-a0.entries().clone(), "A").unwrap();
        let x0 = CVec::from_element(2, c64(1.0 / 2f64.sqrt(), 0.0));
        let traj = evolve_operator(&gen, &x0, &EvolutionConfig::new(200.0, 0.05).unwrap()).unwrap();
        let derivs = states_as_solution(&traj);
        let lambda = c64(3.0, 0.0);
        let l = linalg::identity(2) * lambda - delta.to_dense();
        let spec = TargetSpec::new(
            vec![ComponentTarget::ball(0, CVec::zeros(2), 1.0)],
            Some(DeltaTargetData { lambda, power: 1, center: &l * &x0, radius: 1e6 }),
        )
        .unwrap();
        let (est, report, _) = fh_harness(&derivs, &spec, HarnessMode::Def21, Some(&delta), Some(1)).unwrap();
        assert_eq!(est.proxy, 1.0);
        assert_eq!(report.mode, HarnessMode::Def21);
        assert!(report.nearest_approach[0].distance < 1e-12);
    }

    #[test]
    fn candidates_from_the_sampled_span() {
        let grid =
            crate::backends::GridSpec::new(std::f64::consts::PI, 32, crate::backends::Boundary::Periodic).unwrap();
        let field = crate::eigenfields::lift_theorem21(
            crate::eigenfields::exponential_field(&grid, crate::polyspec::Interval::new(-3.0, 3.0)),
            2,
        );
        let basis = crate::eigenfields::build_subspace(&[field], &[vec![-1.0, 0.0, 2.0]]).unwrap();
        let e1 = synthesize_candidate(&basis, &Weights::Explicit(vec![c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)]))
            .unwrap();
        assert!(linalg::norm(&(e1 - basis.column(0))) < 1e-15);
        let a = synthesize_candidate(&basis, &Weights::Random(42)).unwrap();
        let b = synthesize_candidate(&basis, &Weights::Random(42)).unwrap();
        assert_eq!(a, b);
        assert!((linalg::norm(&a) - 1.0).abs() < 1e-14);
        assert!(crate::eigenfields::subspace_residual(&a, &basis).unwrap() < 1e-12);
        let err = synthesize_candidate(&basis, &Weights::Explicit(vec![c64(1.0, 0.0)])).unwrap_err();
        assert_eq!(err.code(), "LENGTH_MISMATCH");
    }

    #[test]
    fn density_csv_shape() {
        let est = lower_density_discrete(&[1, 3], 4);
        let mut buf = Vec::new();
        est.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,ratio\n"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn samples_to_derivatives_roundtrip() {
        let xs: Vec<CVec> = (0..3).map(|k| CVec::from_element(4, c64(k as f64, 0.0))).collect();
        let d = derivatives_from_samples(0.5, 2, &xs).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.component(2, 1), CVec::from_element(2, c64(2.0, 0.0)));
    }
}
