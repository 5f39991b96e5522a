//! Evolution of the reduced first-order systems and matrix-scale checks of
//! the C-regularized semigroup axioms.
//!
//! The systems are linear and autonomous, so a single step matrix
//! `S = e^{dt M}` is computed once and applied repeatedly; state `k` is
//! `S^k x0` with no integrator error beyond that of `expm`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{self, c64, CMat, CVec};
use crate::reduction::{build_psi, derivatives_to_delta_state, psi_apply_inverse, BlockForm};
use crate::reduction::{BlockOperatorMatrix, InitialData, OperatorHandle};

/// Upper bound on the number of steps in one evolution.
pub const MAX_STEPS: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvolutionConfig {
    pub t_max: f64,
    pub dt: f64,
}

impl EvolutionConfig {
    pub fn new(t_max: f64, dt: f64) -> Result<Self> {
        let cfg = Self { t_max, dt };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(LabError::InvalidInput(format!("t_max must be positive, got {}", self.t_max)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(LabError::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if self.t_max / self.dt > MAX_STEPS {
            return Err(LabError::InvalidInput(format!(
                "t_max/dt = {:e} exceeds the {MAX_STEPS:e} step guard",
                self.t_max / self.dt
            )));
        }
        Ok(())
    }

    /// Number of steps; the last sample time is `steps * dt`, the grid point
    /// nearest `t_max`.
    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round().max(1.0) as usize
    }
}

/// Where a trajectory came from; decides how derivatives are recovered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provenance {
    Block(BlockForm),
    Operator,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Block(form) => form.name(),
            Provenance::Operator => "OPERATOR",
        }
    }
}

/// States on the uniform grid `t_k = k dt`, `k = 0..=steps`, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dt: f64,
    n: usize,
    d: usize,
    provenance: Provenance,
    states: Vec<num_complex::Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrajectoryMeta {
    pub form: String,
    pub n: usize,
    pub d: usize,
    pub dt: f64,
    pub t_max: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len() / self.size()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn size(&self) -> usize {
        self.n * self.d
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn block_dim(&self) -> usize {
        self.d
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn t_max(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn state(&self, k: usize) -> CVec {
        let m = self.size();
        CVec::from_column_slice(&self.states[k * m..(k + 1) * m])
    }

    pub fn meta(&self) -> TrajectoryMeta {
        TrajectoryMeta { form: self.provenance.name().into(), n: self.n, d: self.d, dt: self.dt, t_max: self.t_max() }
    }

    /// `t` followed by `re, im` of every state component; every `stride`-th
    /// sample (the last sample always included).
    pub fn write_csv<W: Write>(&self, out: &mut W, stride: usize) -> std::io::Result<()> {
        let stride = stride.max(1);
        write!(out, "t")?;
        for b in 0..self.n {
            for j in 0..self.d {
                write!(out, ",b{b}_{j}_re,b{b}_{j}_im")?;
            }
        }
        writeln!(out)?;
        let last = self.len() - 1;
        for k in (0..self.len()).filter(|k| k % stride == 0 || *k == last) {
            write!(out, "{:e}", self.time(k))?;
            for z in &self.states[k * self.size()..(k + 1) * self.size()] {
                write!(out, ",{:e},{:e}", z.re, z.im)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Step matrix `e^{dt M}` followed by repeated application to `x0`.
/// `visit` sees every state, including `x0`, in order.
pub fn evolve_with(m: &CMat, x0: &CVec, cfg: &EvolutionConfig, mut visit: impl FnMut(usize, &CVec)) -> Result<()> {
    cfg.validate()?;
    if m.nrows() != x0.len() || m.ncols() != x0.len() {
        return Err(LabError::DimMismatch(format!("generator {}x{} vs state {}", m.nrows(), m.ncols(), x0.len())));
    }
    let step = linalg::expm(&(m * c64(cfg.dt, 0.0)));
    let mut x = x0.clone();
    visit(0, &x);
    for k in 1..=cfg.steps() {
        x = &step * &x;
        if !x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(LabError::NonfiniteState { step: k });
        }
        visit(k, &x);
    }
    Ok(())
}

fn evolve_dense(m: &CMat, x0: &CVec, cfg: &EvolutionConfig, n: usize, provenance: Provenance) -> Result<Trajectory> {
    let mut states = Vec::with_capacity((cfg.steps() + 1) * x0.len());
    evolve_with(m, x0, cfg, |_, x| states.extend_from_slice(x.as_slice()))?;
    Ok(Trajectory { dt: cfg.dt, n, d: x0.len() / n, provenance, states })
}

pub fn evolve(m: &BlockOperatorMatrix, x0: &CVec, cfg: &EvolutionConfig) -> Result<Trajectory> {
    evolve_dense(&m.to_dense(), x0, cfg, m.order(), Provenance::Block(m.form()))
}

pub fn evolve_operator(a: &OperatorHandle, x0: &CVec, cfg: &EvolutionConfig) -> Result<Trajectory> {
    evolve_dense(a.entries(), x0, cfg, 1, Provenance::Operator)
}

/// `(u, u', ..., u^{(n-1)})` at every sample time, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives {
    dt: f64,
    n: usize,
    d: usize,
    values: Vec<num_complex::Complex64>,
}

impl Derivatives {
    pub fn len(&self) -> usize {
        self.values.len() / (self.n * self.d)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn block_dim(&self) -> usize {
        self.d
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// `u^{(i)}(t_k)`.
    pub fn component(&self, k: usize, i: usize) -> CVec {
        let start = (k * self.n + i) * self.d;
        CVec::from_column_slice(&self.values[start..start + self.d])
    }

    /// All components at `t_k`, stacked.
    pub fn stacked(&self, k: usize) -> CVec {
        let m = self.n * self.d;
        CVec::from_column_slice(&self.values[k * m..(k + 1) * m])
    }
}

/// Companion states are the derivatives themselves; Neubrander states are
/// mapped back through `Psi^{-1}`.
pub fn extract_derivatives(traj: &Trajectory, ops: &[OperatorHandle]) -> Result<Derivatives> {
    let values = match traj.provenance {
        Provenance::Block(BlockForm::Companion) => traj.states.clone(),
        Provenance::Block(BlockForm::Delta) => {
            if ops.len() != traj.n {
                return Err(LabError::LengthMismatch { expected: traj.n, got: ops.len() });
            }
            let psi = build_psi(ops)?;
            let mut values = Vec::with_capacity(traj.states.len());
            for k in 0..traj.len() {
                values.extend_from_slice(psi_apply_inverse(&psi, &traj.state(k))?.as_slice());
            }
            values
        }
        other => return Err(LabError::UnknownForm(other.name().into())),
    };
    Ok(Derivatives { dt: traj.dt, n: traj.n, d: traj.d, values })
}

/// Reads every state as the single component `u` of a first-order problem.
pub fn states_as_solution(traj: &Trajectory) -> Derivatives {
    Derivatives { dt: traj.dt, n: 1, d: traj.size(), values: traj.states.clone() }
}

/// Derivatives sampled on a uniform grid from externally computed values.
pub fn derivatives_from_samples(dt: f64, n: usize, samples: &[CVec]) -> Result<Derivatives> {
    let size = samples.first().map_or(0, |x| x.len());
    if n == 0 || size == 0 || size % n != 0 || samples.iter().any(|x| x.len() != size) {
        return Err(LabError::DimMismatch(format!("samples do not split into {n} equal blocks")));
    }
    let values = samples.iter().flat_map(|x| x.iter().copied()).collect();
    Ok(Derivatives { dt, n, d: size / n, values })
}

/// Maps recovered derivatives forward again; used to certify the recovery.
pub fn delta_states(derivs: &Derivatives, ops: &[OperatorHandle]) -> Result<Vec<CVec>> {
    (0..derivs.len())
        .map(|k| {
            let init = InitialData::from_stacked(&derivs.stacked(k), derivs.n)?;
            derivatives_to_delta_state(ops, &init)
        })
        .collect()
}

/// `max_t ||u^{(n)} + sum_i A_i u^{(i)}|| / max(1, ||u||)` over interior
/// samples, with `u^{(n)}` from centered differences of `u^{(n-1)}`.
pub fn acp_residual(derivs: &Derivatives, ops: &[OperatorHandle], dt: f64) -> Result<f64> {
    Ok(acp_residual_curve(derivs, ops, dt)?.iter().fold(0.0, |m, p| m.max(p.1)))
}

/// The per-sample terms of [`acp_residual`] as `(t, residual)` pairs.
pub fn acp_residual_curve(derivs: &Derivatives, ops: &[OperatorHandle], dt: f64) -> Result<Vec<(f64, f64)>> {
    if ops.len() != derivs.n {
        return Err(LabError::LengthMismatch { expected: derivs.n, got: ops.len() });
    }
    if let Some(bad) = ops.iter().find(|a| a.dim() != derivs.d) {
        return Err(LabError::DimMismatch(format!("operator {} vs block {}", bad.dim(), derivs.d)));
    }
    let n = derivs.n;
    Ok((1..derivs.len().saturating_sub(1))
        .map(|k| {
            let top = (derivs.component(k + 1, n - 1) - derivs.component(k - 1, n - 1)) / c64(2.0 * dt, 0.0);
            let mut r = top;
            for (i, a) in ops.iter().enumerate() {
                r += a.apply(&derivs.component(k, i));
            }
            let scale = linalg::norm(&derivs.component(k, 0)).max(1.0);
            (derivs.time(k), linalg::norm(&r) / scale)
        })
        .collect())
}

/// An operator with an injective regularizer commuting with it.
#[derive(Debug, Clone)]
pub struct RegularizedPair {
    a: OperatorHandle,
    c: OperatorHandle,
    commutator: f64,
    sigma_min: f64,
}

impl RegularizedPair {
    /// Rejects pairs with `||AC - CA|| > 1e-10 ||A|| ||C||` or singular `C`.
    pub fn new(a: OperatorHandle, c: OperatorHandle) -> Result<Self> {
        let pair = Self::unchecked(a, c)?;
        let bound = 1e-10 * linalg::frobenius(pair.a.entries()) * linalg::frobenius(pair.c.entries());
        if pair.commutator > bound {
            return Err(LabError::InvalidInput(format!(
                "regularizer does not commute: ||AC - CA|| = {:e}",
                pair.commutator
            )));
        }
        if !(pair.sigma_min > 0.0) {
            return Err(LabError::InvalidInput("regularizer is not injective".into()));
        }
        Ok(pair)
    }

    /// Records the invariants without enforcing them.
    pub fn unchecked(a: OperatorHandle, c: OperatorHandle) -> Result<Self> {
        if a.dim() != c.dim() {
            return Err(LabError::DimMismatch(format!("A is {}, C is {}", a.dim(), c.dim())));
        }
        let commutator = linalg::frobenius(&(a.entries() * c.entries() - c.entries() * a.entries()));
        let sigma_min = linalg::smallest_singular_value(c.entries())?;
        Ok(Self { a, c, commutator, sigma_min })
    }

    pub fn a(&self) -> &OperatorHandle {
        &self.a
    }

    pub fn c(&self) -> &OperatorHandle {
        &self.c
    }

    /// `||AC - CA||` (Frobenius).
    pub fn commutator(&self) -> f64 {
        self.commutator
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RegularizerKind {
    /// `C = e^{-|A|^2}` through the eigendecomposition.
    SpectralGaussian,
    /// `C = (lambda0 - A)^{-k}`.
    ResolventPower { lambda0: [f64; 2], k: u32 },
}

/// Eigenvector matrices with condition number at or above this are rejected.
pub const DIAGONALIZABLE_CONDITION: f64 = 1e8;

/// Smallest singular value of `lambda0 - A` below which `lambda0` counts as
/// a spectral point.
pub const SPECTRUM_THRESHOLD: f64 = 1e-10;

pub fn build_regularizer(a: &OperatorHandle, kind: RegularizerKind) -> Result<RegularizedPair> {
    let d = a.dim();
    let c = match kind {
        RegularizerKind::SpectralGaussian => {
            let (values, v) = eigendecomposition(a.entries())?;
            let condition = linalg::condition_number(&v)?;
            if !(condition < DIAGONALIZABLE_CONDITION) {
                return Err(LabError::NotDiagonalizable { condition });
            }
            let h =
                CMat::from_diagonal(&CVec::from_iterator(d, values.iter().map(|mu| c64((-mu.norm_sqr()).exp(), 0.0))));
            let v_inv = linalg::solve(&v, &linalg::identity(d))?;
            &v * h * v_inv
        }
        RegularizerKind::ResolventPower { lambda0, k } => {
            let shifted = linalg::identity(d) * c64(lambda0[0], lambda0[1]) - a.entries();
            let sigma_min = linalg::smallest_singular_value(&shifted)?;
            if !(sigma_min > SPECTRUM_THRESHOLD) {
                return Err(LabError::LambdaInSpectrum { sigma_min });
            }
            let r = linalg::solve(&shifted, &linalg::identity(d))?;
            (0..k).fold(linalg::identity(d), |acc, _| &acc * &r)
        }
    };
    RegularizedPair::new(a.clone(), OperatorHandle::new(c, "C")?)
}

/// Eigenvalues and unit eigenvectors from the Schur form `A = Q T Q*`.
///
/// Eigenvectors of `T` come from back substitution; denominators smaller than
/// `eps * ||T||` are replaced by that floor so nearly defective matrices give
/// badly conditioned (rather than infinite) eigenvector matrices.
fn eigendecomposition(a: &CMat) -> Result<(Vec<num_complex::Complex64>, CMat)> {
    let d = a.nrows();
    let (q, t) = a
        .clone()
        .try_schur(1e-15, 100_000)
        .ok_or_else(|| LabError::NoConvergence("Schur decomposition".into()))?
        .unpack();
    let floor = f64::EPSILON * linalg::frobenius(&t).max(f64::MIN_POSITIVE);
    let mut y = CMat::zeros(d, d);
    for k in 0..d {
        y[(k, k)] = c64(1.0, 0.0);
        for j in (0..k).rev() {
            let mut s = c64(0.0, 0.0);
            for m in j + 1..=k {
                s += t[(j, m)] * y[(m, k)];
            }
            let mut den = t[(j, j)] - t[(k, k)];
            if den.norm() < floor {
                den = c64(floor, 0.0);
            }
            y[(j, k)] = -s / den;
        }
    }
    let mut v = q * y;
    for mut col in v.column_iter_mut() {
        let nrm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        col /= c64(nrm, 0.0);
    }
    Ok(((0..d).map(|k| t[(k, k)]).collect(), v))
}

/// Normalized residuals of the C-regularized axioms for `T(t) = e^{tA} C`.
///
/// Every residual is divided by `max(1, scale)` where `scale` is the sum of
/// the norms of the terms being compared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CRegReport {
    /// `max ||T(t) A - A T(t)||`
    pub commutes_with_a: f64,
    /// `max ||T(t) C - C T(t)||`
    pub commutes_with_c: f64,
    /// `max ||A int_0^t T(s) ds - (T(t) - C)||`
    pub integral_identity: f64,
    /// `max ||T(t) T(s) - T(t+s) C||` over all pairs
    pub composition: f64,
}

impl CRegReport {
    pub fn max(&self) -> f64 {
        self.commutes_with_a.max(self.commutes_with_c).max(self.integral_identity).max(self.composition)
    }
}

pub const QUADRATURE_TOLERANCE: f64 = 1e-10;

pub fn cregularized_check(pair: &RegularizedPair, ts: &[f64]) -> Result<CRegReport> {
    if ts.is_empty() {
        return Err(LabError::EmptySamples);
    }
    let a = pair.a.entries();
    let c = pair.c.entries();
    let f = linalg::frobenius;
    let t_of = |t: f64| linalg::expm(&(a * c64(t, 0.0))) * c;
    let rel = |diff: CMat, scale: f64| f(&diff) / scale.max(1.0);
    let mut report =
        CRegReport { commutes_with_a: 0.0, commutes_with_c: 0.0, integral_identity: 0.0, composition: 0.0 };
    for &t in ts {
        let tt = t_of(t);
        let ta = f(&tt) * f(a);
        report.commutes_with_a = report.commutes_with_a.max(rel(&tt * a - a * &tt, 2.0 * ta));
        let tc = f(&tt) * f(c);
        report.commutes_with_c = report.commutes_with_c.max(rel(&tt * c - c * &tt, 2.0 * tc));
        let integral = gauss_kronrod(&t_of, 0.0, t, QUADRATURE_TOLERANCE)?;
        let lhs = a * &integral;
        let scale = f(&lhs) + f(&tt) + f(c);
        report.integral_identity = report.integral_identity.max(rel(lhs - (&tt - c), scale));
        for &s in ts {
            let ts_ = t_of(s);
            let lhs = &tt * &ts_;
            let rhs = t_of(t + s) * c;
            let scale = f(&lhs) + f(&rhs);
            report.composition = report.composition.max(rel(lhs - rhs, scale));
        }
    }
    Ok(report)
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_KRONROD: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// Gauss weights on the odd-indexed Kronrod nodes (and the centre).
const GK_GAUSS: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// Adaptive G7-K15 quadrature of a matrix-valued function; bisects until the
/// Kronrod/Gauss difference is below `tol * max(1, ||integral||)`.
pub fn gauss_kronrod(f: &impl Fn(f64) -> CMat, lo: f64, hi: f64, tol: f64) -> Result<CMat> {
    fn panel(f: &impl Fn(f64) -> CMat, lo: f64, hi: f64) -> (CMat, CMat) {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let centre = f(mid);
        let mut kronrod = &centre * c64(GK_KRONROD[7], 0.0);
        let mut gauss = &centre * c64(GK_GAUSS[3], 0.0);
        for k in 0..7 {
            let pair = f(mid - half * GK_NODES[k]) + f(mid + half * GK_NODES[k]);
            kronrod += &pair * c64(GK_KRONROD[k], 0.0);
            if k % 2 == 1 {
                gauss += &pair * c64(GK_GAUSS[k / 2], 0.0);
            }
        }
        (kronrod * c64(half, 0.0), gauss * c64(half, 0.0))
    }
    let mut stack = vec![(lo, hi, 0usize)];
    let (k0, _) = panel(f, lo, hi);
    let scale = linalg::frobenius(&k0).max(1.0);
    let mut total = CMat::zeros(k0.nrows(), k0.ncols());
    while let Some((a, b, depth)) = stack.pop() {
        let (k, g) = panel(f, a, b);
        let err = linalg::frobenius(&(&k - &g));
        let width_share = ((b - a) / (hi - lo)).abs();
        if err <= tol * scale * width_share || depth >= 40 {
            if err > tol * scale * width_share {
                return Err(LabError::NoConvergence("adaptive quadrature".into()));
            }
            total += k;
        } else {
            let mid = 0.5 * (a + b);
            stack.push((mid, b, depth + 1));
            stack.push((a, mid, depth + 1));
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::diag_model;
    use crate::linalg::frobenius;
    use crate::reduction::{build_companion, build_delta, scalar_operator};

    fn s(v: f64, label: &str) -> OperatorHandle {
        scalar_operator(c64(v, 0.0), label)
    }

    fn vec_of(v: &[f64]) -> CVec {
        CVec::from_iterator(v.len(), v.iter().map(|&x| c64(x, 0.0)))
    }

    #[test]
    fn config_guards() {
        assert!(EvolutionConfig::new(1.0, 1e-3).is_ok());
        assert!(EvolutionConfig::new(-1.0, 1e-3).is_err());
        assert!(EvolutionConfig::new(1.0, 0.0).is_err());
        assert!(EvolutionConfig::new(1e5, 1e-3).is_err());
        assert_eq!(EvolutionConfig::new(10.0, 1e-3).unwrap().steps(), 10_000);
    }

    #[test]
    fn zero_generator_is_constant() {
        let a = OperatorHandle::zero(3, "0");
        let x0 = vec_of(&[1.0, -2.0, 0.5]);
        let traj = evolve_operator(&a, &x0, &EvolutionConfig::new(1.0, 0.1).unwrap()).unwrap();
        assert_eq!(traj.len(), 11);
        for k in 0..traj.len() {
            assert_eq!(traj.state(k), x0);
        }
    }

    #[test]
    fn rotation_returns_after_one_period() {
        let a = diag_model(&[c64(0.0, 1.0)]);
        let cfg = EvolutionConfig::new(2.0 * std::f64::consts::PI, 2.0 * std::f64::consts::PI / 1000.0).unwrap();
        let traj = evolve_operator(&a, &vec_of(&[1.0]), &cfg).unwrap();
        assert!((traj.state(traj.len() - 1)[0] - c64(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn second_order_companion_closed_form() {
        let m = build_companion(&[s(2.0, "A0"), s(3.0, "A1")]).unwrap();
        let traj = evolve(&m, &vec_of(&[1.0, 0.0]), &EvolutionConfig::new(5.0, 0.01).unwrap()).unwrap();
        for k in (0..traj.len()).step_by(37) {
            let t = traj.time(k);
            let u = 2.0 * (-t).exp() - (-2.0 * t).exp();
            assert!((traj.state(k)[0].re - u).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn overflow_is_reported() {
        let a = diag_model(&[c64(300.0, 0.0)]);
        let err = evolve_operator(&a, &vec_of(&[1.0]), &EvolutionConfig::new(10.0, 0.5).unwrap());
        assert_eq!(err.unwrap_err().code(), "NONFINITE_STATE");
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = diag_model(&[c64(0.0, 1.0)]);
        let err = evolve_operator(&a, &vec_of(&[1.0, 2.0]), &EvolutionConfig::new(1.0, 0.5).unwrap());
        assert_eq!(err.unwrap_err().code(), "DIM_MISMATCH");
    }

    #[test]
    fn semigroup_step_property() {
        let ops = crate::backends::random_operators(11, 2, 3, 1.0);
        let m = build_companion(&ops).unwrap();
        let x0 = CVec::from_fn(6, |j, _| c64(1.0 / (j + 1) as f64, 0.0));
        let cfg = EvolutionConfig::new(2.0, 0.01).unwrap();
        let traj = evolve(&m, &x0, &cfg).unwrap();
        let step = linalg::expm(&(m.to_dense() * c64(cfg.dt, 0.0)));
        let (k1, k2) = (73, 91);
        let mut x = traj.state(k2);
        for _ in 0..k1 {
            x = &step * x;
        }
        let target = traj.state(k1 + k2);
        assert!(linalg::norm(&(x - &target)) <= 1e-12 * linalg::norm(&target).max(1.0));
    }

    #[test]
    fn companion_extraction_is_passthrough() {
        let m = build_companion(&[s(2.0, "A0"), s(3.0, "A1")]).unwrap();
        let traj = evolve(&m, &vec_of(&[1.0, 0.0]), &EvolutionConfig::new(1.0, 0.1).unwrap()).unwrap();
        let d = extract_derivatives(&traj, &[]).unwrap();
        for k in 0..traj.len() {
            assert_eq!(d.stacked(k), traj.state(k));
        }
    }

    #[test]
    fn delta_extraction_subtracts_a1_u() {
        let ops = [s(2.0, "A0"), s(3.0, "A1")];
        let delta = build_delta(&ops).unwrap();
        // Psi (u0, u1) = (u0, 3 u0 + u1)
        let x0 = vec_of(&[1.0, 3.0]);
        let traj = evolve(&delta, &x0, &EvolutionConfig::new(3.0, 0.01).unwrap()).unwrap();
        let derivs = extract_derivatives(&traj, &ops).unwrap();
        for k in (0..traj.len()).step_by(17) {
            let st = traj.state(k);
            let du = derivs.component(k, 1)[0];
            assert!((du - (st[1] - st[0] * 3.0)).norm() < 1e-14);
            let t = traj.time(k);
            let exact = -2.0 * (-t).exp() + 2.0 * (-2.0 * t).exp();
            assert!((du.re - exact).abs() < 1e-12);
        }
        let again = delta_states(&derivs, &ops).unwrap();
        for (k, x) in again.iter().enumerate() {
            assert!(linalg::norm(&(x - traj.state(k))) <= 1e-10);
        }
    }

    #[test]
    fn centered_difference_matches_recovered_derivative() {
        let ops = [s(2.0, "A0"), s(3.0, "A1")];
        let m = build_companion(&ops).unwrap();
        let dt = 1e-3;
        let traj = evolve(&m, &vec_of(&[1.0, 0.0]), &EvolutionConfig::new(2.0, dt).unwrap()).unwrap();
        let derivs = extract_derivatives(&traj, &ops).unwrap();
        for k in (1..traj.len() - 1).step_by(101) {
            let fd = (derivs.component(k + 1, 0)[0] - derivs.component(k - 1, 0)[0]) / (2.0 * dt);
            assert!((fd - derivs.component(k, 1)[0]).norm() < 2.0 * dt * dt);
        }
    }

    #[test]
    fn operator_trajectories_have_unknown_form() {
        let a = diag_model(&[c64(0.0, 1.0)]);
        let traj = evolve_operator(&a, &vec_of(&[1.0]), &EvolutionConfig::new(1.0, 0.5).unwrap()).unwrap();
        assert_eq!(extract_derivatives(&traj, &[]).unwrap_err().code(), "UNKNOWN_FORM");
    }

    fn acp_for(ops: &[OperatorHandle], x0: &[f64], dt: f64, t_max: f64) -> f64 {
        let m = build_companion(ops).unwrap();
        let traj = evolve(&m, &vec_of(x0), &EvolutionConfig::new(t_max, dt).unwrap()).unwrap();
        acp_residual(&extract_derivatives(&traj, ops).unwrap(), ops, dt).unwrap()
    }

    #[test]
    fn acp_residual_first_order_scalar() {
        // u = e^{-a t}: the centered difference error is dt^2 a^3 / 6.
        let r = acp_for(&[s(0.25, "A0")], &[1.0], 1e-3, 10.0);
        assert!(r <= 1e-8, "{r:e}");
    }

    #[test]
    fn acp_residual_second_order_and_convergence() {
        let ops = [s(2.0, "A0"), s(3.0, "A1")];
        let r1 = acp_for(&ops, &[1.0, 0.0], 1e-3, 5.0);
        assert!(r1 <= 1e-5, "{r1:e}");
        let r2 = acp_for(&ops, &[1.0, 0.0], 5e-4, 5.0);
        assert!((r1 / r2 - 4.0).abs() < 0.5, "ratio {}", r1 / r2);
    }

    #[test]
    fn acp_residual_zero_data() {
        assert_eq!(acp_for(&[s(2.0, "A0"), s(3.0, "A1")], &[0.0, 0.0], 1e-2, 1.0), 0.0);
    }

    #[test]
    fn trajectory_csv_and_meta() {
        let m = build_companion(&[s(2.0, "A0"), s(3.0, "A1")]).unwrap();
        let traj = evolve(&m, &vec_of(&[1.0, 0.0]), &EvolutionConfig::new(1.0, 0.1).unwrap()).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf, 3).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,b0_0_re,b0_0_im,b1_0_re,b1_0_im");
        assert_eq!(lines.count(), 5); // k = 0, 3, 6, 9, 10
        let meta = serde_json::to_value(traj.meta()).unwrap();
        assert_eq!(meta["form"], "COMPANION");
        assert_eq!(meta["n"], 2);
        assert!((meta["tMax"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_regularizer_on_diagonal() {
        let a = diag_model(&[c64(0.0, 1.0), c64(0.0, 2.0)]);
        let pair = build_regularizer(&a, RegularizerKind::SpectralGaussian).unwrap();
        let c = pair.c().entries();
        assert!((c[(0, 0)] - c64((-1f64).exp(), 0.0)).norm() < 1e-15);
        assert!((c[(1, 1)] - c64((-4f64).exp(), 0.0)).norm() < 1e-15);
        assert!(c[(0, 1)].norm() < 1e-15 && c[(1, 0)].norm() < 1e-15);
    }

    #[test]
    fn resolvent_regularizer_on_nilpotent() {
        let mut m = CMat::zeros(2, 2);
        m[(0, 1)] = c64(1.0, 0.0);
        let a = OperatorHandle::new(m, "N").unwrap();
        let kind = RegularizerKind::ResolventPower { lambda0: [1.0, 0.0], k: 1 };
        let c = build_regularizer(&a, kind).unwrap().c().entries().clone();
        let expect = CMat::from_row_slice(2, 2, &[c64(1.0, 0.0), c64(1.0, 0.0), c64(0.0, 0.0), c64(1.0, 0.0)]);
        assert!(frobenius(&(c - expect)) < 1e-15);
    }

    #[test]
    fn regularizer_errors() {
        let a = diag_model(&[c64(1.0, 0.0), c64(2.0, 0.0)]);
        let kind = RegularizerKind::ResolventPower { lambda0: [2.0, 0.0], k: 2 };
        assert_eq!(build_regularizer(&a, kind).unwrap_err().code(), "LAMBDA_IN_SPECTRUM");
        let mut j = CMat::zeros(3, 3);
        j[(0, 1)] = c64(1.0, 0.0);
        j[(1, 2)] = c64(1.0, 0.0);
        let jordan = OperatorHandle::new(j, "J").unwrap();
        let err = build_regularizer(&jordan, RegularizerKind::SpectralGaussian).unwrap_err();
        assert_eq!(err.code(), "NOT_DIAGONALIZABLE");
    }

    #[test]
    fn produced_regularizers_commute() {
        let a = &crate::backends::random_operators(5, 1, 5, 1.5)[0];
        for kind in [RegularizerKind::SpectralGaussian, RegularizerKind::ResolventPower { lambda0: [4.0, 1.0], k: 3 }] {
            let pair = build_regularizer(a, kind).unwrap();
            let scale = frobenius(a.entries()) * frobenius(pair.c().entries());
            assert!(pair.commutator() <= 1e-12 * scale, "{kind:?}: {:e}", pair.commutator());
            assert!(pair.sigma_min() > 0.0);
        }
    }

    #[test]
    fn cregularized_zero_generator() {
        let a = OperatorHandle::zero(3, "0");
        let c = OperatorHandle::new(CMat::from_diagonal(&vec_of(&[1.0, 0.5, 0.25])), "C").unwrap();
        let pair = RegularizedPair::new(a, c).unwrap();
        let report = cregularized_check(&pair, &[0.5, 1.0, 2.0]).unwrap();
        assert_eq!(report.max(), 0.0);
    }

    #[test]
    fn cregularized_diagonal_gaussian() {
        let a = diag_model(&[c64(0.0, 1.0), c64(0.0, 2.0)]);
        let pair = build_regularizer(&a, RegularizerKind::SpectralGaussian).unwrap();
        let report = cregularized_check(&pair, &[0.5, 1.0, 2.0]).unwrap();
        assert!(report.max() <= 1e-9, "{report:?}");
    }

    #[test]
    fn cregularized_detects_noncommuting_regularizer() {
        let a = diag_model(&[c64(0.0, 1.0), c64(0.0, 2.0)]);
        let c = CMat::from_row_slice(2, 2, &[c64(1.0, 0.0), c64(0.5, 0.0), c64(0.0, 0.0), c64(1.0, 0.0)]);
        let c = OperatorHandle::new(c, "C~").unwrap();
        assert!(RegularizedPair::new(a.clone(), c.clone()).is_err());
        let pair = RegularizedPair::unchecked(a, c).unwrap();
        assert!((pair.commutator() - 0.5).abs() < 1e-15);
        let report = cregularized_check(&pair, &[0.5, 1.0]).unwrap();
        assert!(report.commutes_with_a > 1e-2, "{report:?}");
        assert!(report.commutes_with_c > 1e-2, "{report:?}");
    }

    #[test]
    fn gauss_kronrod_integrates_exponential() {
        let f = |t: f64| CMat::from_element(1, 1, c64(0.0, 3.0 * t).exp());
        let v = gauss_kronrod(&f, 0.0, 2.0, 1e-12).unwrap()[(0, 0)];
        let exact = (c64(0.0, 6.0).exp() - 1.0) / c64(0.0, 3.0);
        assert!((v - exact).norm() < 1e-12);
        let poly = |t: f64| CMat::from_element(1, 1, c64(t.powi(5), 0.0));
        let p = gauss_kronrod(&poly, -1.0, 3.0, 1e-14).unwrap()[(0, 0)].re;
        assert!((p - (729.0 - 1.0) / 6.0).abs() < 1e-10);
    }
}
