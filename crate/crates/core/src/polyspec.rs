//! Complex polynomials and the characteristic spectral condition
//!
//! ```text
//! r(t) = (it)^n + sum_{l=0}^{n-1} (it)^l P_l(g(it))
//! ```
//!
//! which gates the lift of scalar eigenfields to eigenvector fields of the
//! reduced first-order system. For the identity symbol curve the condition
//! is the vanishing of the polynomial `q(z) = z^n + sum z^l P_l(z)`, which is
//! certified coefficient by coefficient, exactly whenever possible. Every
//! finite `f64` is a dyadic rational, so the exact route converts the inputs
//! losslessly and expands `q` over complex rationals.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{LabError, Result};
use crate::linalg::{c64, I, ONE, ZERO};

/// Magnitude threshold applied when exact arithmetic does not certify a zero.
pub const ZERO_TOLERANCE: f64 = 1e-12;

/// Dense complex polynomial, lowest degree first, without trailing zeros.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComplexPoly {
    coeffs: Vec<Complex64>,
}

impl ComplexPoly {
    pub fn new(mut coeffs: Vec<Complex64>) -> Self {
        while coeffs.last().is_some_and(|c| *c == ZERO) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: Complex64) -> Self {
        Self::new(vec![c])
    }

    /// The monomial `c z^k`.
    pub fn monomial(c: Complex64, k: usize) -> Self {
        let mut coeffs = vec![ZERO; k + 1];
        coeffs[k] = c;
        Self::new(coeffs)
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&x| c64(x, 0.0)).collect())
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient of `z^k`, zero beyond the degree.
    pub fn coeff(&self, k: usize) -> Complex64 {
        self.coeffs.get(k).copied().unwrap_or(ZERO)
    }

    /// Index of the last nonzero coefficient, `-1` for the zero polynomial.
    pub fn degree(&self) -> isize {
        self.coeffs.len() as isize - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Horner evaluation.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(ZERO, |acc, &c| acc * z + c)
    }

    /// Multiply by `z^k`.
    pub fn shift(&self, k: usize) -> Self {
        if self.is_zero() {
            return Self::zero();
        }
        let mut coeffs = vec![ZERO; k];
        coeffs.extend_from_slice(&self.coeffs);
        Self { coeffs }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self::new(self.coeffs.iter().map(|&a| a * c).collect())
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

impl fmt::Display for ComplexPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let terms: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != ZERO)
            .map(|(k, c)| match k {
                0 => format!("({c})"),
                1 => format!("({c})z"),
                _ => format!("({c})z^{k}"),
            })
            .collect();
        write!(f, "{}", terms.join(" + "))
    }
}

impl Add for &ComplexPoly {
    type Output = ComplexPoly;
    fn add(self, rhs: &ComplexPoly) -> ComplexPoly {
        let len = self.coeffs.len().max(rhs.coeffs.len());
        ComplexPoly::new((0..len).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl Sub for &ComplexPoly {
    type Output = ComplexPoly;
    fn sub(self, rhs: &ComplexPoly) -> ComplexPoly {
        let len = self.coeffs.len().max(rhs.coeffs.len());
        ComplexPoly::new((0..len).map(|k| self.coeff(k) - rhs.coeff(k)).collect())
    }
}

impl Neg for &ComplexPoly {
    type Output = ComplexPoly;
    fn neg(self) -> ComplexPoly {
        ComplexPoly::new(self.coeffs.iter().map(|c| -c).collect())
    }
}

impl Mul for &ComplexPoly {
    type Output = ComplexPoly;
    fn mul(self, rhs: &ComplexPoly) -> ComplexPoly {
        if self.is_zero() || rhs.is_zero() {
            return ComplexPoly::zero();
        }
        let mut out = vec![ZERO; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        ComplexPoly::new(out)
    }
}

impl Serialize for ComplexPoly {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = self.coeffs.iter().map(|c| [c.re, c.im]).collect();
        pairs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexPoly {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(ComplexPoly::new(pairs.iter().map(|p| c64(p[0], p[1])).collect()))
    }
}

/// The scalar map `g` with `A f(t) = g(it) f(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SymbolCurve {
    /// `g(it) = it`
    Identity,
    /// Sampled pairs `(t, g(it))`; evaluation only at stored sample points.
    Table { samples: Vec<(f64, [f64; 2])> },
}

impl SymbolCurve {
    pub fn table(samples: impl IntoIterator<Item = (f64, Complex64)>) -> Self {
        SymbolCurve::Table { samples: samples.into_iter().map(|(t, g)| (t, [g.re, g.im])).collect() }
    }

    pub fn eval(&self, t: f64) -> Result<Complex64> {
        match self {
            SymbolCurve::Identity => Ok(c64(0.0, t)),
            SymbolCurve::Table { samples } => {
                samples.iter().find(|(s, _)| *s == t).map(|(_, g)| c64(g[0], g[1])).ok_or_else(|| {
                    LabError::OutOfDomain { t, reason: "not a stored sample of the tabulated curve".into() }
                })
            }
        }
    }
}

/// Closed parameter interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo <= hi, "interval bounds out of order");
        Self { lo, hi }
    }

    pub fn whole_line() -> Self {
        Self { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    pub fn contains(&self, t: f64) -> bool {
        self.lo <= t && t <= self.hi
    }
}

/// `n` polynomials `P_0, ..., P_{n-1}` with a symbol curve on an interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralCondition {
    order: usize,
    polys: Vec<ComplexPoly>,
    symbol: SymbolCurve,
    interval: Interval,
}

impl SpectralCondition {
    pub fn new(polys: Vec<ComplexPoly>, symbol: SymbolCurve, interval: Interval) -> Result<Self> {
        if polys.is_empty() {
            return Err(LabError::InvalidInput("order must be at least 1".into()));
        }
        Ok(Self { order: polys.len(), polys, symbol, interval })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn polys(&self) -> &[ComplexPoly] {
        &self.polys
    }

    pub fn symbol(&self) -> &SymbolCurve {
        &self.symbol
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    /// `q(z) = z^n + sum z^l P_l(z)` in floating point.
    pub fn characteristic_poly(&self) -> ComplexPoly {
        let mut q = ComplexPoly::monomial(ONE, self.order);
        for (l, p) in self.polys.iter().enumerate() {
            q = &q + &p.shift(l);
        }
        q
    }
}

/// Evaluates `r(t) = (it)^n + sum (it)^l P_l(g(it))`.
pub fn characteristic_residual(cond: &SpectralCondition, t: f64) -> Result<Complex64> {
    if !cond.interval.contains(t) {
        return Err(LabError::OutOfDomain {
            t,
            reason: format!("outside [{}, {}]", cond.interval.lo, cond.interval.hi),
        });
    }
    let g = cond.symbol.eval(t)?;
    let it = I * t;
    let mut power = ONE;
    let mut sum = ZERO;
    for p in &cond.polys {
        sum += power * p.eval(g);
        power *= it;
    }
    Ok(sum + power)
}

/// How a zero was (or was not) certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Certification {
    /// Exact complex-rational arithmetic produced zero.
    Exact,
    /// Nonzero in exact arithmetic but below the magnitude tolerance.
    Tolerance,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ConditionCheck {
    pub holds: bool,
    pub certification: Certification,
    /// `(degree, coefficient)` of every coefficient of `q` that is not zero.
    pub offending: Vec<(usize, [f64; 2])>,
}

/// Coefficient-wise check that `z^n + sum z^l P_l(z)` vanishes identically.
pub fn condition_holds_symbolic(cond: &SpectralCondition) -> Result<ConditionCheck> {
    if cond.symbol != SymbolCurve::Identity {
        return Err(LabError::UnsupportedCurve);
    }
    let exact = exact_characteristic(cond.order, &cond.polys);
    let scale = scale_of(&cond.polys);
    let (certification, offending) = classify_zero(&exact, scale, 0..exact.len());
    Ok(ConditionCheck { holds: certification != Certification::Failed, certification, offending })
}

/// Solves the identity-curve condition for the missing `P_{n-1}`:
/// `P_{n-1}(z) = -(z^n + sum_{l<=n-2} z^l P_l(z)) / z^{n-1}`.
pub fn complete_condition(order: usize, lower: &[ComplexPoly]) -> Result<ComplexPoly> {
    if order == 0 {
        return Err(LabError::InvalidInput("order must be at least 1".into()));
    }
    if lower.len() != order - 1 {
        return Err(LabError::DimMismatch(format!(
            "order {order} needs {} lower polynomials, got {}",
            order - 1,
            lower.len()
        )));
    }
    let partial = exact_characteristic(order, lower);
    let scale = scale_of(lower);
    let low = order - 1;
    let (cert, offending) = classify_zero(&partial, scale, 0..low.min(partial.len()));
    if cert == Certification::Failed {
        return Err(LabError::NotDivisible { degrees: offending.iter().map(|(k, _)| *k).collect() });
    }
    let coeffs = partial[low..]
        .iter()
        .map(|c| {
            let z = c.to_complex64();
            -z
        })
        .collect();
    Ok(ComplexPoly::new(coeffs))
}

fn scale_of(polys: &[ComplexPoly]) -> f64 {
    polys.iter().map(ComplexPoly::max_abs_coeff).fold(1.0, f64::max)
}

fn classify_zero(
    coeffs: &[RationalComplex],
    scale: f64,
    range: std::ops::Range<usize>,
) -> (Certification, Vec<(usize, [f64; 2])>) {
    let nonzero: Vec<(usize, Complex64)> =
        range.filter(|&k| !coeffs[k].is_zero()).map(|k| (k, coeffs[k].to_complex64())).collect();
    if nonzero.is_empty() {
        return (Certification::Exact, Vec::new());
    }
    let report = nonzero.iter().map(|(k, c)| (*k, [c.re, c.im])).collect();
    if nonzero.iter().all(|(_, c)| c.norm() <= ZERO_TOLERANCE * scale) {
        (Certification::Tolerance, report)
    } else {
        (Certification::Failed, report)
    }
}

/// Exact coefficients of `z^n + sum_l z^l P_l(z)` over the given polynomials.
fn exact_characteristic(order: usize, polys: &[ComplexPoly]) -> Vec<RationalComplex> {
    let len = polys.iter().enumerate().map(|(l, p)| l + p.coeffs().len()).fold(order + 1, usize::max);
    let mut q = vec![RationalComplex::zero(); len];
    q[order] = RationalComplex::one();
    for (l, p) in polys.iter().enumerate() {
        for (k, c) in p.coeffs().iter().enumerate() {
            q[l + k] = &q[l + k] + &RationalComplex::from_complex64(*c);
        }
    }
    q
}

/// Complex number with exact rational parts.
#[derive(Debug, Clone, PartialEq)]
struct RationalComplex {
    re: BigRational,
    im: BigRational,
}

impl RationalComplex {
    fn zero() -> Self {
        Self { re: BigRational::zero(), im: BigRational::zero() }
    }

    fn one() -> Self {
        Self { re: BigRational::from_integer(BigInt::from(1)), im: BigRational::zero() }
    }

    fn from_complex64(z: Complex64) -> Self {
        let conv = |x: f64| BigRational::from_float(x).expect("polynomial coefficients are finite");
        Self { re: conv(z.re), im: conv(z.im) }
    }

    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    fn to_complex64(&self) -> Complex64 {
        c64(self.re.to_f64().unwrap_or(f64::NAN), self.im.to_f64().unwrap_or(f64::NAN))
    }
}

impl Add for &RationalComplex {
    type Output = RationalComplex;
    fn add(self, rhs: &RationalComplex) -> RationalComplex {
        RationalComplex { re: &self.re + &rhs.re, im: &self.im + &rhs.im }
    }
}
