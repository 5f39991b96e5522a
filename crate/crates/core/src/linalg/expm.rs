//! Matrix exponential by scaling and squaring with diagonal Padé approximants.
//!
//! Degree selection follows Higham's 2005 bounds: the lowest of the
//! approximants r3, r5, r7, r9, r13 whose backward-error threshold covers the
//! 1-norm is used; otherwise the matrix is scaled by 2^-s into the r13 range
//! and the result squared s times.

use super::{identity, matmul, norm1, CMat};

const THETA: [(usize, f64); 5] = [
    (3, 1.495_585_217_958_292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504_178_996_162_932e-1),
    (9, 2.097_847_961_257_068),
    (13, 5.371_920_351_148_152),
];

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17_297_280.0, 8_648_640.0, 1_995_840.0, 277_200.0, 25_200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// `exp(a)` for a square complex matrix.
pub fn expm(a: &CMat) -> CMat {
    assert_eq!(a.nrows(), a.ncols(), "expm needs a square matrix");
    let d = a.nrows();
    if d == 0 {
        return CMat::zeros(0, 0);
    }
    if d == 1 {
        return CMat::from_element(1, 1, a[(0, 0)].exp());
    }
    let norm = norm1(a);
    for &(m, theta) in &THETA[..4] {
        if norm <= theta {
            let coeffs: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            return pade_low(a, coeffs);
        }
    }
    let theta13 = THETA[4].1;
    let s = if norm > theta13 { (norm / theta13).log2().ceil().max(0.0) as i32 } else { 0 };
    let scaled = a.map(|z| z * 2f64.powi(-s));
    let mut r = pade13(&scaled);
    for _ in 0..s {
        r = matmul(&r, &r);
    }
    r
}

fn pade_low(a: &CMat, b: &[f64]) -> CMat {
    let d = a.nrows();
    let a2 = matmul(a, a);
    // Even powers I, A^2, A^4, ... up to the degree needed.
    let mut evens = vec![identity(d), a2.clone()];
    let degree = b.len() - 1;
    while evens.len() < degree / 2 + 1 {
        let next = matmul(evens.last().unwrap(), &a2);
        evens.push(next);
    }
    let mut u_inner = CMat::zeros(d, d);
    let mut v = CMat::zeros(d, d);
    for (k, p) in evens.iter().enumerate() {
        if 2 * k + 1 < b.len() {
            u_inner += p * super::c64(b[2 * k + 1], 0.0);
        }
        if 2 * k < b.len() {
            v += p * super::c64(b[2 * k], 0.0);
        }
    }
    let u = matmul(a, &u_inner);
    rational(&u, &v)
}

fn pade13(a: &CMat) -> CMat {
    let d = a.nrows();
    let id = identity(d);
    let a2 = matmul(a, a);
    let a4 = matmul(&a2, &a2);
    let a6 = matmul(&a4, &a2);
    let s = |x: f64| super::c64(x, 0.0);
    let b = &B13;
    let u_hi = &a6 * s(b[13]) + &a4 * s(b[11]) + &a2 * s(b[9]);
    let u_inner = matmul(&a6, &u_hi) + &a6 * s(b[7]) + &a4 * s(b[5]) + &a2 * s(b[3]) + &id * s(b[1]);
    let u = matmul(a, &u_inner);
    let v_hi = &a6 * s(b[12]) + &a4 * s(b[10]) + &a2 * s(b[8]);
    let v = matmul(&a6, &v_hi) + &a6 * s(b[6]) + &a4 * s(b[4]) + &a2 * s(b[2]) + &id * s(b[0]);
    rational(&u, &v)
}

/// `(v - u)^{-1} (v + u)`
fn rational(u: &CMat, v: &CMat) -> CMat {
    let p = v + u;
    let q = v - u;
    q.lu().solve(&p).expect("Pade denominator is nonsingular inside the theta bounds")
}

#[cfg(test)]
mod tests {
    use super::super::{c64, frobenius};
    use super::*;

    /// Truncated Taylor series with scaling and squaring, an independent route.
    fn taylor_expm(a: &CMat) -> CMat {
        let s = 8;
        let scaled = a.map(|z| z / 2f64.powi(s));
        let d = a.nrows();
        let mut term = identity(d);
        let mut sum = identity(d);
        for k in 1..40 {
            term = &term * &scaled / c64(k as f64, 0.0);
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    fn sample(scale: f64) -> CMat {
        CMat::from_fn(5, 5, |i, j| {
            let x = ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.5;
            let y = ((i * 5 + j * 2) % 7) as f64 / 7.0 - 0.5;
            c64(scale * x, scale * y)
        })
    }

    #[test]
    fn every_pade_degree_matches_taylor() {
        for &scale in &[1e-3, 0.05, 0.3, 0.8, 1.5, 4.0, 30.0] {
            let a = sample(scale);
            let e = expm(&a);
            let t = taylor_expm(&a);
            let rel = frobenius(&(&e - &t)) / frobenius(&t);
            assert!(rel < 1e-12, "scale {scale}: relative error {rel:e}");
        }
    }

    #[test]
    fn zero_gives_identity() {
        let e = expm(&CMat::zeros(4, 4));
        assert!(frobenius(&(e - identity(4))) < 1e-15);
    }

    #[test]
    fn diagonal_rotation_has_unit_modulus() {
        let a = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c64(0.0, 1.0),
            c64(0.0, 2f64.sqrt()),
            c64(0.0, -37.5),
        ]));
        let e = expm(&a);
        for k in 0..3 {
            assert!((e[(k, k)].norm() - 1.0).abs() < 1e-14);
            assert!((e[(k, k)] - a[(k, k)].exp()).norm() < 1e-13);
        }
    }

    #[test]
    fn nilpotent_block_is_exact_polynomial() {
        let mut a = CMat::zeros(3, 3);
        a[(0, 1)] = c64(1.0, 0.0);
        a[(1, 2)] = c64(1.0, 0.0);
        let e = expm(&a);
        assert!((e[(0, 1)] - c64(1.0, 0.0)).norm() < 1e-15);
        assert!((e[(0, 2)] - c64(0.5, 0.0)).norm() < 1e-15);
        assert!((e[(1, 2)] - c64(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn agrees_with_nalgebra_exponential() {
        let a = sample(3.0);
        let ours = expm(&a);
        let theirs = a.exp();
        assert!(frobenius(&(&ours - &theirs)) / frobenius(&theirs) < 1e-13);
    }
}
