//! Finite-dimensional operator realizations.
//!
//! * diagonal models with prescribed spectrum,
//! * the Ornstein-Uhlenbeck type operator `u'' + b x u' + c u` on a truncated
//!   line (finite differences) together with its Fourier-side eigenfunctions,
//! * the derivative `d/dt` on a periodic grid (Fourier collocation),
//! * admissible weights `rho(t) <= M e^{omega |t'|} rho(t + t')`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{self, c64, CMat, CVec, ZERO};
use crate::polyspec::ComplexPoly;
use crate::reduction::OperatorHandle;

/// Minimum number of grid points.
pub const MIN_POINTS: usize = 8;

/// Refinement of the frequency grid used to synthesize eigenfunctions. The
/// profiles have a kink at the origin, so sampling them only on the plain
/// dual grid periodizes the eigenfunction with period `2L` and the images
/// leak into the residual through the unbounded `b x` coefficient.
pub const FREQUENCY_OVERSAMPLING: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Boundary {
    Periodic,
    Decaying,
}

/// Uniform grid `x_j = -L + j h`, `h = 2L / N`, `j = 0..N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GridSpec {
    pub half_width: f64,
    pub points: usize,
    pub boundary: Boundary,
}

impl GridSpec {
    pub fn new(half_width: f64, points: usize, boundary: Boundary) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(LabError::InvalidInput(format!("half width must be positive, got {half_width}")));
        }
        if points < MIN_POINTS {
            return Err(LabError::GridTooCoarse { points, min: MIN_POINTS });
        }
        Ok(Self { half_width, points, boundary })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.node(j)).collect()
    }
}

/// Parameters of `u'' + b x u' + c u`, with `c > b/2 > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OUParams {
    pub b: f64,
    pub c: f64,
}

impl OUParams {
    pub fn new(b: f64, c: f64) -> Result<Self> {
        if !(b > 0.0 && c > b / 2.0) {
            return Err(LabError::InvalidInput(format!("need c > b/2 > 0, got b = {b}, c = {c}")));
        }
        Ok(Self { b, c })
    }

    /// `c - b/2`, the bound on `Re(lambda)` for the eigenfunction formulas.
    pub fn omega_bound(&self) -> f64 {
        self.c - self.b / 2.0
    }
}

/// Weight samples on a grid with the claimed admissibility constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub rho: Vec<f64>,
    pub m: f64,
    pub omega: f64,
}

impl WeightSpec {
    pub fn sampled(grid: &GridSpec, rho: impl Fn(f64) -> f64, m: f64, omega: f64) -> Self {
        Self { rho: grid.nodes().into_iter().map(rho).collect(), m, omega }
    }

    pub fn unit(grid: &GridSpec) -> Self {
        Self::sampled(grid, |_| 1.0, 1.0, 0.0)
    }
}

/// Diagonal matrix with the given entries.
pub fn diag_model(mu: &[Complex64]) -> OperatorHandle {
    let entries = CMat::from_diagonal(&CVec::from_column_slice(mu));
    OperatorHandle::new(entries, "diag").expect("nonempty diagonal")
}

/// `u'' + b x u' + c u` with central differences inside and one-sided
/// second-order stencils at the two edge nodes.
pub fn ou_matrix(params: &OUParams, grid: &GridSpec) -> Result<OperatorHandle> {
    if grid.boundary != Boundary::Decaying {
        return Err(LabError::InvalidInput("OU operator needs a DECAYING grid".into()));
    }
    let n = grid.points;
    if n < MIN_POINTS {
        return Err(LabError::GridTooCoarse { points: n, min: MIN_POINTS });
    }
    let h = grid.spacing();
    let (b, c) = (params.b, params.c);
    let mut m = CMat::zeros(n, n);
    let mut add = |i: usize, j: usize, v: f64| m[(i, j)] += c64(v, 0.0);
    for j in 1..n - 1 {
        let drift = b * grid.node(j) / (2.0 * h);
        add(j, j - 1, 1.0 / (h * h) - drift);
        add(j, j, -2.0 / (h * h) + c);
        add(j, j + 1, 1.0 / (h * h) + drift);
    }
    for (row, dir) in [(0usize, 1isize), (n - 1, -1isize)] {
        let at = |k: isize| (row as isize + dir * k) as usize;
        let drift = b * grid.node(row) / (2.0 * h);
        for (k, w) in [2.0, -5.0, 4.0, -1.0].into_iter().enumerate() {
            add(row, at(k as isize), w / (h * h));
        }
        for (k, w) in [-3.0, 4.0, -1.0].into_iter().enumerate() {
            add(row, at(k as isize), dir as f64 * drift * w);
        }
        add(row, row, c);
    }
    OperatorHandle::new(m, format!("OU(b={b},c={c})"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// Odd profile `xi |xi|^{-(2 + (lambda - c)/b)}`.
    Odd,
    /// Even profile `|xi|^{-(1 + (lambda - c)/b)}`.
    Even,
}

impl Branch {
    pub fn from_index(k: u8) -> Result<Self> {
        match k {
            1 => Ok(Branch::Odd),
            2 => Ok(Branch::Even),
            _ => Err(LabError::InvalidInput(format!("branch must be 1 or 2, got {k}"))),
        }
    }
}

/// Inverse Fourier transform of `e^{-xi^2/2b}` times the branch profile,
/// sampled on the grid nodes and normalized to unit Euclidean norm.
///
/// The frequency grid has the Nyquist band of `grid` and spacing
/// `pi / (K L)` with `K = FREQUENCY_OVERSAMPLING`; the `xi = 0` bin is zeroed.
pub fn ou_eigenfunction(lambda: Complex64, branch: Branch, params: &OUParams, grid: &GridSpec) -> Result<CVec> {
    let bound = params.omega_bound();
    if !(lambda.re < bound) {
        return Err(LabError::OutOfOmega { re: lambda.re, bound });
    }
    if grid.points < MIN_POINTS {
        return Err(LabError::GridTooCoarse { points: grid.points, min: MIN_POINTS });
    }
    if grid.points % 2 != 0 {
        return Err(LabError::InvalidInput("eigenfunction synthesis needs an even point count".into()));
    }
    let n = grid.points;
    let total = n * FREQUENCY_OVERSAMPLING;
    let h = grid.spacing();
    let dxi = 2.0 * PI / (total as f64 * h);
    let exponent = -(c64(1.0, 0.0) + (lambda - params.c) / params.b);
    let mut spectrum: Vec<Complex64> = (0..total)
        .map(|m| {
            let k = if m <= total / 2 { m as f64 } else { m as f64 - total as f64 };
            let xi = k * dxi;
            if m == 0 {
                return ZERO;
            }
            let mag = xi.abs();
            let profile = (exponent * mag.ln()).exp() * (-xi * xi / (2.0 * params.b)).exp();
            match branch {
                Branch::Even => profile,
                Branch::Odd => profile * xi.signum(),
            }
        })
        .collect();
    FftPlanner::new().plan_fft_inverse(total).process(&mut spectrum);
    // x_j = (j - N/2) h sits at FFT index (j - N/2) mod total.
    let mut f = CVec::from_fn(n, |j, _| {
        let offset = j as isize - (n / 2) as isize;
        spectrum[offset.rem_euclid(total as isize) as usize]
    });
    let nrm = linalg::norm(&f);
    if !(nrm > 0.0 && nrm.is_finite()) {
        return Err(LabError::InvalidInput("eigenfunction profile vanished on the grid".into()));
    }
    f /= c64(nrm, 0.0);
    Ok(f)
}

/// Fourier collocation matrix for `d/dt` on a periodic grid of period `2L`.
///
/// For even `N` the Nyquist mode is discarded, which makes the matrix real
/// and antisymmetric.
pub fn derivative_matrix(grid: &GridSpec) -> Result<OperatorHandle> {
    if grid.boundary != Boundary::Periodic {
        return Err(LabError::InvalidInput("derivative operator needs a PERIODIC grid".into()));
    }
    let n = grid.points;
    let scale = PI / grid.half_width;
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let k = i - j;
            let arg = PI * k as f64 / n as f64;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let base = if n % 2 == 0 { 1.0 / arg.tan() } else { 1.0 / arg.sin() };
            let v = 0.5 * scale * sign * base;
            m[(i, j)] = c64(v, 0.0);
            m[(j, i)] = c64(-v, 0.0);
        }
    }
    OperatorHandle::new(m, "d/dt")
}

/// `P(A)` by Horner's rule; a degree-one polynomial needs no matrix product.
pub fn poly_of_operator(p: &ComplexPoly, a: &OperatorHandle, label: &str) -> OperatorHandle {
    let d = a.dim();
    let coeffs = p.coeffs();
    let entries = match coeffs.len() {
        0 => CMat::zeros(d, d),
        1 => CMat::identity(d, d) * coeffs[0],
        len => {
            let mut acc = a.entries() * coeffs[len - 1];
            for k in 0..d {
                acc[(k, k)] += coeffs[len - 2];
            }
            for &ck in coeffs[..len - 2].iter().rev() {
                acc = linalg::matmul(&acc, a.entries());
                for k in 0..d {
                    acc[(k, k)] += ck;
                }
            }
            acc
        }
    };
    OperatorHandle::new(entries, label).expect("polynomial of a finite operator is finite")
}

/// Random complex operators `A_0..A_{n-1}` with entries drawn from
/// `N(0, scale^2 / d)`; reproducible from the seed.
pub fn random_operators(seed: u64, n: usize, d: usize, scale: f64) -> Vec<OperatorHandle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = scale / (2.0 * d as f64).sqrt();
    (0..n)
        .map(|k| {
            let m = CMat::from_fn(d, d, |_, _| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                c64(sd * re, sd * im)
            });
            OperatorHandle::new(m, format!("A{k}")).expect("finite random entries")
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct WeightCheck {
    pub admissible: bool,
    /// Largest `rho(t) / (M e^{omega |t'|} rho(t + t'))` over the grid pairs.
    pub worst_ratio: f64,
    /// `(t, t')` attaining the worst ratio.
    pub worst_pair: (f64, f64),
}

/// Exhaustive check of `rho(t) <= M e^{omega |t'|} rho(t + t')` over all
/// pairs of grid nodes `t` and `t + t'`.
pub fn admissible_weight_check(w: &WeightSpec, grid: &GridSpec) -> Result<WeightCheck> {
    if w.rho.len() != grid.points {
        return Err(LabError::DimMismatch(format!("{} weight samples for {} grid points", w.rho.len(), grid.points)));
    }
    if w.rho.iter().any(|&r| !(r > 0.0)) {
        return Err(LabError::InvalidInput("weight must be strictly positive".into()));
    }
    let h = grid.spacing();
    let log_m = w.m.ln();
    let log_rho: Vec<f64> = w.rho.iter().map(|r| r.ln()).collect();
    let mut worst = (f64::NEG_INFINITY, (0.0, 0.0));
    for i in 0..grid.points {
        for k in 0..grid.points {
            let shift = (k as f64 - i as f64) * h;
            let log_ratio = log_rho[i] - log_m - w.omega * shift.abs() - log_rho[k];
            if log_ratio > worst.0 {
                worst = (log_ratio, (grid.node(i), shift));
            }
        }
    }
    let ratio = worst.0.exp();
    Ok(WeightCheck { admissible: worst.0 <= 1e-12, worst_ratio: ratio, worst_pair: worst.1 })
}

/// Writes `x, re, im` rows for plotting.
pub fn write_vector_csv<W: Write>(out: &mut W, grid: &GridSpec, v: &CVec) -> std::io::Result<()> {
    writeln!(out, "x,re,im")?;
    for (j, z) in v.iter().enumerate() {
        writeln!(out, "{:e},{:e},{:e}", grid.node(j), z.re, z.im)?;
    }
    Ok(())
}
