//! Dense complex linear algebra used throughout the lab.
//!
//! Everything is built on `nalgebra` dynamic matrices over `Complex64`.
//! Large products are routed through real GEMM on the split real and
//! imaginary parts, which is an order of magnitude faster than the generic
//! complex kernel.

mod expm;

pub use expm::expm;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{LabError, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

const SPLIT_GEMM_MIN: usize = 24;

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Matrix product `a * b`.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.nrows(), "matmul: inner dimensions differ");
    if a.nrows().min(a.ncols()).min(b.ncols()) < SPLIT_GEMM_MIN {
        return a * b;
    }
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    DMatrix::from_fn(a.nrows(), b.ncols(), |i, j| c64(re[(i, j)], im[(i, j)]))
}

fn split(a: &CMat) -> (DMatrix<f64>, DMatrix<f64>) {
    (a.map(|z| z.re), a.map(|z| z.im))
}

pub fn identity(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn norm(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn slice_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Maximum absolute column sum.
pub fn norm1(a: &CMat) -> f64 {
    a.column_iter().map(|col| col.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn all_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Singular values, largest first.
pub fn singular_values(a: &CMat) -> Result<Vec<f64>> {
    Ok(svd(a)?.1)
}

pub fn smallest_singular_value(a: &CMat) -> Result<f64> {
    Ok(singular_values(a)?.last().copied().unwrap_or(0.0))
}

/// 2-norm condition number `sigma_max / sigma_min` (infinite when singular).
pub fn condition_number(a: &CMat) -> Result<f64> {
    let s = singular_values(a)?;
    let (hi, lo) = (s[0], *s.last().unwrap());
    Ok(if lo == 0.0 { f64::INFINITY } else { hi / lo })
}

/// Eigenvalues through the complex Schur form.
pub fn eigenvalues(a: &CMat) -> Result<Vec<Complex64>> {
    let schur =
        a.clone().try_schur(1e-15, 100_000).ok_or_else(|| LabError::NoConvergence("Schur decomposition".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Largest distance in an optimal-greedy pairing of two equally sized
/// multisets of complex numbers. Each element of `a` is paired with the
/// closest still-unmatched element of `b`, processing the globally closest
/// pairs first.
pub fn multiset_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len(), "multisets differ in size");
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            pairs.push(((x - y).norm(), i, j));
        }
    }
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for (dist, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            worst = worst.max(dist);
        }
    }
    worst
}

/// Orthonormal basis of the column span of `a`, discarding singular
/// directions below `rel_tol * sigma_max`.
pub fn orthonormal_range(a: &CMat, rel_tol: f64) -> Result<CMat> {
    if a.ncols() == 0 || a.nrows() == 0 {
        return Ok(CMat::zeros(a.nrows(), 0));
    }
    let (u, s, _) = svd(a)?;
    let smax = s[0];
    if smax == 0.0 {
        return Ok(CMat::zeros(a.nrows(), 0));
    }
    let keep = s.iter().take_while(|&&sk| sk > rel_tol * smax).count();
    Ok(u.columns(0, keep).into_owned())
}

/// Thin singular value decomposition `a = U diag(s) V*` with `s` sorted
/// descending, by one-sided Jacobi rotations on the columns.
///
/// Columns of `U` belonging to zero singular values are zero.
pub fn svd(a: &CMat) -> Result<(CMat, Vec<f64>, CMat)> {
    if a.nrows() < a.ncols() {
        let (u, s, v) = svd(&a.adjoint())?;
        return Ok((v, s, u));
    }
    let n = a.ncols();
    let mut u = a.clone();
    let mut v = identity(n);
    let tol = f64::EPSILON * (a.nrows() as f64).sqrt();
    let mut converged = n < 2;
    for _ in 0..JACOBI_SWEEPS {
        if converged {
            break;
        }
        converged = true;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = u.column(p).norm_squared();
                let beta = u.column(q).norm_squared();
                let gamma = u.column(p).dotc(&u.column(q));
                let g = gamma.norm();
                if g == 0.0 || g <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                converged = false;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut u, p, q, c, s, phase);
                rotate(&mut v, p, q, c, s, phase);
            }
        }
    }
    if !converged {
        return Err(LabError::NoConvergence("Jacobi singular value decomposition".into()));
    }
    let norms: Vec<f64> = (0..n).map(|k| u.column(k).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let mut uu = CMat::zeros(a.nrows(), n);
    let mut vv = CMat::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (c, &k) in order.iter().enumerate() {
        s.push(norms[k]);
        if norms[k] > 0.0 {
            uu.set_column(c, &(u.column(k) / c64(norms[k], 0.0)));
        }
        vv.set_column(c, &v.column(k));
    }
    Ok((uu, s, vv))
}

const JACOBI_SWEEPS: usize = 60;

/// Columns `p, q` of `m` times the unitary that diagonalizes their Gram
/// block; `phase = gamma / |gamma|` with `gamma = <m_p, m_q>`.
fn rotate(m: &mut CMat, p: usize, q: usize, c: f64, s: f64, phase: Complex64) {
    for i in 0..m.nrows() {
        let mp = m[(i, p)];
        let mq = m[(i, q)] * phase.conj();
        m[(i, p)] = mp * c - mq * s;
        m[(i, q)] = (mp * s + mq * c) * phase;
    }
}

/// Solve `a x = b` by LU with partial pivoting.
pub fn solve(a: &CMat, b: &CMat) -> Result<CMat> {
    a.clone().lu().solve(b).ok_or_else(|| LabError::InvalidInput("singular linear system".into()))
}

pub fn solve_vec(a: &CMat, b: &CVec) -> Result<CVec> {
    a.clone().lu().solve(b).ok_or_else(|| LabError::InvalidInput("singular linear system".into()))
}

/// Serialize a matrix row-major as nested arrays of `[re, im]`.
pub fn matrix_to_json(a: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| [a[(i, j)].re, a[(i, j)].im]).collect()).collect()
}

pub fn matrix_from_json(rows: &[Vec<[f64; 2]>]) -> Result<CMat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(LabError::DimMismatch("ragged matrix rows".into()));
    }
    Ok(CMat::from_fn(nrows, ncols, |i, j| c64(rows[i][j][0], rows[i][j][1])))
}

pub fn vector_to_json(v: &CVec) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

pub fn vector_from_json(v: &[[f64; 2]]) -> CVec {
    CVec::from_iterator(v.len(), v.iter().map(|p| c64(p[0], p[1])))
}
