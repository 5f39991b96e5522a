//! Eigenvector fields and their lifts to the reduced first-order systems.
//!
//! A scalar field `t -> f(t)` with `A f(t) = g(it) f(t)` is lifted either to
//! the companion state `(f, it f, ..., (it)^{n-1} f)` or to the Neubrander
//! state, which is the image of the companion lift under `Psi`. Finitely many
//! samples of the lifts span the subspace that stands in for the closed span
//! of the eigenfield family.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::backends::{self, Branch, GridSpec, OUParams};
use crate::error::{LabError, Result};
use crate::linalg::{self, c64, CMat, CVec};
use crate::polyspec::{Interval, SymbolCurve};
use crate::reduction::{BlockOperatorMatrix, OperatorHandle};

/// Relative singular-value cutoff for rank decisions.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Samples per interval when none are given.
pub const DEFAULT_SAMPLES: usize = 17;

pub type Evaluator = Arc<dyn Fn(f64) -> Result<CVec> + Send + Sync>;

/// `t -> f(t)` on an interval, with `A f(t) = g(it) f(t)` up to `tolerance`.
#[derive(Clone)]
pub struct EigenField {
    dim: usize,
    interval: Interval,
    symbol: SymbolCurve,
    tolerance: f64,
    smoothness: String,
    evaluator: Evaluator,
}

impl fmt::Debug for EigenField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EigenField")
            .field("dim", &self.dim)
            .field("interval", &self.interval)
            .field("symbol", &self.symbol)
            .field("tolerance", &self.tolerance)
            .field("smoothness", &self.smoothness)
            .finish_non_exhaustive()
    }
}

impl EigenField {
    pub fn new(
        dim: usize,
        interval: Interval,
        symbol: SymbolCurve,
        tolerance: f64,
        evaluator: impl Fn(f64) -> Result<CVec> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            interval,
            symbol,
            tolerance,
            smoothness: "assumed C^2 in t; not checked".into(),
            evaluator: Arc::new(evaluator),
        }
    }

    pub fn with_smoothness(mut self, note: impl Into<String>) -> Self {
        self.smoothness = note.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn symbol(&self) -> &SymbolCurve {
        &self.symbol
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn smoothness(&self) -> &str {
        &self.smoothness
    }

    pub fn eval(&self, t: f64) -> Result<CVec> {
        if !self.interval.contains(t) {
            return Err(LabError::OutOfDomain { t, reason: "outside the field interval".into() });
        }
        let v = (self.evaluator)(t)?;
        if v.len() != self.dim {
            return Err(LabError::DimMismatch(format!(
                "evaluator returned {} entries, expected {}",
                v.len(),
                self.dim
            )));
        }
        Ok(v)
    }

    /// `max ||A f(t) - g(it) f(t)|| / ||f(t)||` over `ts`.
    pub fn backend_residual(&self, a: &OperatorHandle, ts: &[f64]) -> Result<f64> {
        if ts.is_empty() {
            return Err(LabError::EmptySamples);
        }
        if a.dim() != self.dim {
            return Err(LabError::DimMismatch(format!("operator {} vs field {}", a.dim(), self.dim)));
        }
        let mut worst: f64 = 0.0;
        for &t in ts {
            let f = self.eval(t)?;
            let g = self.symbol.eval(t)?;
            worst = worst.max(relative(&(a.apply(&f) - &f * g), &f));
        }
        Ok(worst)
    }
}

/// `s -> e^{i t s}` on the nodes of a periodic grid; `d/ds` has symbol `it`.
///
/// The phase is reduced in turns, `t s_j / 2pi = t (L/pi) (2j - N) / 2N`,
/// which is exact for integer `t` on a `2pi`-periodic grid with `N` a power
/// of two. Rounding `t s_j` directly leaves noise of size `eps |t s_j|` that
/// the differentiation matrix amplifies by `N/2`.
pub fn exponential_field(grid: &GridSpec, interval: Interval) -> EigenField {
    let n = grid.points;
    let ratio = grid.half_width / PI;
    EigenField::new(n, interval, SymbolCurve::Identity, 1e-12, move |t| {
        let rate = t * ratio;
        Ok(CVec::from_fn(n, |j, _| {
            let turns = rate * (2.0 * j as f64 - n as f64) / (2 * n) as f64;
            let (s, c) = (2.0 * PI * (turns - turns.round())).sin_cos();
            c64(c, s)
        }))
    })
    .with_smoothness("entire in t")
}

/// `t -> f_branch(it)` for the OU operator, so the symbol is `g(it) = it`.
pub fn ou_field(params: OUParams, grid: GridSpec, branch: Branch, interval: Interval, tolerance: f64) -> EigenField {
    EigenField::new(grid.points, interval, SymbolCurve::Identity, tolerance, move |t| {
        backends::ou_eigenfunction(c64(0.0, t), branch, &params, &grid)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LiftKind {
    /// Companion state `(f, it f, ..., (it)^{n-1} f)`.
    Theorem21,
    /// Neubrander state `Psi (f, it f, ..., (it)^{n-1} f)`.
    Theorem22,
}

/// An eigenfield lifted to `n` blocks.
#[derive(Debug, Clone)]
pub struct CompanionEigenField {
    base: EigenField,
    n: usize,
    kind: LiftKind,
    /// `A_1, ..., A_{n-1}` for the Neubrander lift, empty otherwise.
    ops: Vec<OperatorHandle>,
}

impl CompanionEigenField {
    pub fn base(&self) -> &EigenField {
        &self.base
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> LiftKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.n * self.base.dim
    }

    /// Block `s` (1-indexed) of the Neubrander lift is
    /// `sum_{l=0}^{s-2} (it)^l A_{n-s+1+l} f + (it)^{s-1} f`.
    pub fn eval(&self, t: f64) -> Result<CVec> {
        let f = self.base.eval(t)?;
        let d = self.base.dim;
        let n = self.n;
        let it = c64(0.0, t);
        let powers: Vec<Complex64> = std::iter::successors(Some(c64(1.0, 0.0)), |p| Some(p * it)).take(n).collect();
        let mut out = CVec::zeros(n * d);
        match self.kind {
            LiftKind::Theorem21 => {
                for s in 0..n {
                    out.rows_mut(s * d, d).copy_from(&(&f * powers[s]));
                }
            }
            LiftKind::Theorem22 => {
                let af: Vec<CVec> = self.ops.iter().map(|a| a.apply(&f)).collect();
                for s in 1..=n {
                    let mut block = &f * powers[s - 1];
                    for l in 0..s.saturating_sub(1) {
                        let k = n - s + 1 + l;
                        if k == 0 || k >= n {
                            return Err(LabError::IndexOutOfRange { index: k, order: n });
                        }
                        block += &af[k - 1] * powers[l];
                    }
                    out.rows_mut((s - 1) * d, d).copy_from(&block);
                }
            }
        }
        Ok(out)
    }
}

pub fn lift_theorem21(base: EigenField, n: usize) -> CompanionEigenField {
    assert!(n >= 1, "order must be at least one");
    CompanionEigenField { base, n, kind: LiftKind::Theorem21, ops: Vec::new() }
}

/// `ops` holds `A_1, ..., A_{n-1}`; `A_0` never enters the Neubrander lift.
pub fn lift_theorem22(base: EigenField, n: usize, ops: &[OperatorHandle]) -> Result<CompanionEigenField> {
    if n == 0 {
        return Err(LabError::InvalidInput("order must be at least one".into()));
    }
    if ops.len() != n - 1 {
        return Err(LabError::DimMismatch(format!(
            "{} operators given, the lift needs A_1..A_{} ({})",
            ops.len(),
            n - 1,
            n - 1
        )));
    }
    if let Some(bad) = ops.iter().find(|a| a.dim() != base.dim) {
        return Err(LabError::DimMismatch(format!(
            "operator {} has dimension {}, field has {}",
            bad.label(),
            bad.dim(),
            base.dim
        )));
    }
    Ok(CompanionEigenField { base, n, kind: LiftKind::Theorem22, ops: ops.to_vec() })
}

/// `max ||M F(t) - it F(t)|| / ||F(t)||` over `ts`.
pub fn eigen_residual(m: &BlockOperatorMatrix, field: &CompanionEigenField, ts: &[f64]) -> Result<f64> {
    if ts.is_empty() {
        return Err(LabError::EmptySamples);
    }
    if m.size() != field.size() {
        return Err(LabError::DimMismatch(format!(
            "block matrix of size {} vs lifted field of size {}",
            m.size(),
            field.size()
        )));
    }
    let mut worst: f64 = 0.0;
    for &t in ts {
        let v = field.eval(t)?;
        worst = worst.max(relative(&(m.apply(&v) - &v * c64(0.0, t)), &v));
    }
    Ok(worst)
}

/// `m` Chebyshev points of the first kind on `[lo, hi]`, ascending.
pub fn chebyshev_points(interval: Interval, m: usize) -> Result<Vec<f64>> {
    if !(interval.lo.is_finite() && interval.hi.is_finite()) {
        return Err(LabError::InvalidInput("sampling needs a bounded interval".into()));
    }
    let mid = 0.5 * (interval.lo + interval.hi);
    let half = 0.5 * (interval.hi - interval.lo);
    Ok((0..m).rev().map(|k| mid + half * (PI * (2 * k + 1) as f64 / (2 * m) as f64).cos()).collect())
}

/// Orthonormal basis of the span of sampled lifts, with block bases for the
/// coordinate projections `pi_i`.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    n: usize,
    d: usize,
    q: CMat,
    times: Vec<f64>,
    blocks: Vec<CMat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisJson {
    pub nd: usize,
    pub rank: usize,
    pub columns: Vec<Vec<[f64; 2]>>,
}

impl SubspaceBasis {
    /// Orthonormalizes the given columns (each an `n d` vector).
    pub fn from_columns(samples: &CMat, n: usize, times: Vec<f64>) -> Result<Self> {
        if samples.ncols() == 0 {
            return Err(LabError::EmptySamples);
        }
        if n == 0 || samples.nrows() % n != 0 {
            return Err(LabError::DimMismatch(format!("{} rows do not split into {n} blocks", samples.nrows())));
        }
        let d = samples.nrows() / n;
        let mut normalized = samples.clone();
        for mut col in normalized.column_iter_mut() {
            let nrm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if nrm > 0.0 {
                col /= c64(nrm, 0.0);
            }
        }
        let q = linalg::orthonormal_range(&normalized, RANK_TOLERANCE)?;
        let blocks = (0..n)
            .map(|i| linalg::orthonormal_range(&q.rows(i * d, d).into_owned(), RANK_TOLERANCE))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { n, d, q, times, blocks })
    }

    pub fn rank(&self) -> usize {
        self.q.ncols()
    }

    pub fn size(&self) -> usize {
        self.q.nrows()
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn block_dim(&self) -> usize {
        self.d
    }

    pub fn columns(&self) -> &CMat {
        &self.q
    }

    pub fn column(&self, k: usize) -> CVec {
        self.q.column(k).into_owned()
    }

    pub fn sample_times(&self) -> &[f64] {
        &self.times
    }

    /// Orthonormal basis of `pi_i` of the span (0-indexed block).
    pub fn block_basis(&self, i: usize) -> &CMat {
        &self.blocks[i]
    }

    pub fn projector(&self) -> CMat {
        &self.q * self.q.adjoint()
    }

    pub fn block_projector(&self, i: usize) -> CMat {
        &self.blocks[i] * self.blocks[i].adjoint()
    }

    pub fn project(&self, x: &CVec) -> CVec {
        &self.q * (self.q.adjoint() * x)
    }

    pub fn to_json(&self) -> BasisJson {
        BasisJson {
            nd: self.size(),
            rank: self.rank(),
            columns: self.q.column_iter().map(|c| c.iter().map(|z| [z.re, z.im]).collect()).collect(),
        }
    }
}

/// Lifts sampled at the given times, orthonormalized.
pub fn build_subspace(fields: &[CompanionEigenField], ts: &[Vec<f64>]) -> Result<SubspaceBasis> {
    if fields.len() != ts.len() {
        return Err(LabError::LengthMismatch { expected: fields.len(), got: ts.len() });
    }
    let first = fields.first().ok_or(LabError::EmptySamples)?;
    let (n, size) = (first.order(), first.size());
    if let Some(bad) = fields.iter().find(|f| f.order() != n || f.size() != size) {
        return Err(LabError::DimMismatch(format!("lifted fields disagree in shape: {} vs {}", bad.size(), size)));
    }
    let total: usize = ts.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(LabError::EmptySamples);
    }
    let mut samples = CMat::zeros(size, total);
    let mut times = Vec::with_capacity(total);
    let mut col = 0;
    for (field, field_ts) in fields.iter().zip(ts) {
        for &t in field_ts {
            samples.set_column(col, &field.eval(t)?);
            times.push(t);
            col += 1;
        }
    }
    SubspaceBasis::from_columns(&samples, n, times)
}

/// `||x - P x|| / ||x||` against the full span; zero for `x = 0`.
pub fn subspace_residual(x: &CVec, basis: &SubspaceBasis) -> Result<f64> {
    if x.len() != basis.size() {
        return Err(LabError::DimMismatch(format!("vector {} vs basis {}", x.len(), basis.size())));
    }
    Ok(relative(&(x - basis.project(x)), x))
}

/// Residual of a `d`-vector against the block span `pi_i` (0-indexed).
pub fn block_residual(y: &CVec, basis: &SubspaceBasis, i: usize) -> Result<f64> {
    if i >= basis.n {
        return Err(LabError::IndexOutOfRange { index: i, order: basis.n });
    }
    if y.len() != basis.d {
        return Err(LabError::DimMismatch(format!("vector {} vs block {}", y.len(), basis.d)));
    }
    let b = &basis.blocks[i];
    Ok(relative(&(y - b * (b.adjoint() * y)), y))
}

fn relative(r: &CVec, x: &CVec) -> f64 {
    let nx = linalg::norm(x);
    if nx == 0.0 {
        linalg::norm(r)
    } else {
        linalg::norm(r) / nx
    }
}
