//! First-order block reductions of
//!
//! ```text
//! u^(n) + A_{n-1} u^(n-1) + ... + A_1 u' + A_0 u = 0,   u^(k)(0) = u_k
//! ```
//!
//! * the companion matrix (state = derivatives `(u, u', ..., u^(n-1))`),
//! * the Neubrander matrix `Delta` (state = combinations
//!   `v_{i+1} = u^(i) + sum_{j=1}^{i} A_{n-j} u^(i-j)`),
//! * the unit lower-triangular map `Psi` taking derivatives to `Delta` states.
//!
//! `Delta = Psi * companion * Psi^{-1}` holds for arbitrary (not necessarily
//! commuting) operator tuples, so both systems carry the same solution `u`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{self, matrix_from_json, matrix_to_json, CMat, CVec, ZERO};

/// Square finite complex matrix standing for a discretized operator.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorHandle {
    entries: CMat,
    label: String,
}

impl OperatorHandle {
    pub fn new(entries: CMat, label: impl Into<String>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(LabError::DimMismatch(format!(
                "operator must be square and nonempty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if !linalg::all_finite(&entries) {
            return Err(LabError::InvalidInput("operator has non-finite entries".into()));
        }
        Ok(Self { entries, label: label.into() })
    }

    pub fn zero(dim: usize, label: impl Into<String>) -> Self {
        Self { entries: CMat::zeros(dim, dim), label: label.into() }
    }

    pub fn identity(dim: usize, label: impl Into<String>) -> Self {
        Self { entries: CMat::identity(dim, dim), label: label.into() }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn apply(&self, x: &CVec) -> CVec {
        &self.entries * x
    }

    fn is_exact_zero(&self) -> bool {
        self.entries.iter().all(|z| *z == ZERO)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BlockForm {
    Companion,
    Delta,
    Psi,
}

impl BlockForm {
    pub fn name(self) -> &'static str {
        match self {
            BlockForm::Companion => "COMPANION",
            BlockForm::Delta => "DELTA",
            BlockForm::Psi => "PSI",
        }
    }
}

/// One block of a [`BlockOperatorMatrix`]; zero and identity blocks are
/// tagged explicitly instead of materialized.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Zero,
    Identity,
    Op(OperatorHandle),
}

impl Block {
    fn from_operator(op: &OperatorHandle, negate: bool) -> Block {
        if op.is_exact_zero() {
            Block::Zero
        } else if negate {
            Block::Op(OperatorHandle { entries: -op.entries.clone(), label: format!("-{}", op.label) })
        } else {
            Block::Op(op.clone())
        }
    }

    fn dense(&self, d: usize) -> CMat {
        match self {
            Block::Zero => CMat::zeros(d, d),
            Block::Identity => CMat::identity(d, d),
            Block::Op(op) => op.entries.clone(),
        }
    }
}

/// `n x n` block matrix over `d x d` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOperatorMatrix {
    n: usize,
    d: usize,
    form: BlockForm,
    blocks: Vec<Block>,
}

impl BlockOperatorMatrix {
    pub fn order(&self) -> usize {
        self.n
    }

    pub fn block_dim(&self) -> usize {
        self.d
    }

    pub fn form(&self) -> BlockForm {
        self.form
    }

    /// Flattened size `n * d`.
    pub fn size(&self) -> usize {
        self.n * self.d
    }

    pub fn block(&self, row: usize, col: usize) -> &Block {
        &self.blocks[row * self.n + col]
    }

    /// Block-wise product with a stacked `nd` vector.
    pub fn apply(&self, x: &CVec) -> CVec {
        assert_eq!(x.len(), self.size(), "block matrix applied to wrong length");
        let d = self.d;
        let mut out = CVec::zeros(self.size());
        for i in 0..self.n {
            for j in 0..self.n {
                let xj = x.rows(j * d, d);
                let mut yi = out.rows_mut(i * d, d);
                match self.block(i, j) {
                    Block::Zero => {}
                    Block::Identity => yi += xj,
                    Block::Op(op) => yi += &op.entries * xj,
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> CMat {
        let (n, d) = (self.n, self.d);
        let mut m = CMat::zeros(n * d, n * d);
        for i in 0..n {
            for j in 0..n {
                match self.block(i, j) {
                    Block::Zero => {}
                    Block::Identity => m.view_mut((i * d, j * d), (d, d)).fill_with_identity(),
                    Block::Op(op) => m.view_mut((i * d, j * d), (d, d)).copy_from(&op.entries),
                }
            }
        }
        m
    }

    pub fn to_json(&self) -> BlockMatrixJson {
        let blocks = (0..self.n)
            .map(|i| (0..self.n).map(|j| matrix_to_json(&self.block(i, j).dense(self.d))).collect())
            .collect();
        BlockMatrixJson { n: self.n, d: self.d, form: self.form, blocks }
    }

    pub fn from_json(env: &BlockMatrixJson) -> Result<Self> {
        if env.blocks.len() != env.n || env.blocks.iter().any(|r| r.len() != env.n) {
            return Err(LabError::DimMismatch("block grid is not n x n".into()));
        }
        let mut blocks = Vec::with_capacity(env.n * env.n);
        for (i, row) in env.blocks.iter().enumerate() {
            for (j, b) in row.iter().enumerate() {
                let m = matrix_from_json(b)?;
                if m.nrows() != env.d || m.ncols() != env.d {
                    return Err(LabError::DimMismatch(format!("block ({i},{j}) is not d x d")));
                }
                blocks.push(if m.iter().all(|z| *z == ZERO) {
                    Block::Zero
                } else if m == CMat::identity(env.d, env.d) {
                    Block::Identity
                } else {
                    Block::Op(OperatorHandle::new(m, format!("block({i},{j})"))?)
                });
            }
        }
        let out = Self { n: env.n, d: env.d, form: env.form, blocks };
        out.check_form()?;
        Ok(out)
    }

    /// Operators `A_0, ..., A_{n-1}` recovered from the block layout.
    pub fn operators(&self) -> Vec<OperatorHandle> {
        let n = self.n;
        let d = self.d;
        (0..n)
            .map(|k| {
                let block = match self.form {
                    BlockForm::Companion => self.block(n - 1, k),
                    BlockForm::Delta => self.block(n - 1 - k, 0),
                    BlockForm::Psi if k == 0 => &Block::Zero,
                    BlockForm::Psi => self.block(n - k, 0),
                };
                let sign = if self.form == BlockForm::Psi { 1.0 } else { -1.0 };
                let entries = block.dense(d) * linalg::c64(sign, 0.0);
                OperatorHandle { entries, label: format!("A{k}") }
            })
            .collect()
    }

    /// Verifies the structural invariant of the form tag.
    pub fn check_form(&self) -> Result<()> {
        let n = self.n;
        let bad = |i: usize, j: usize| {
            Err(LabError::InvalidInput(format!("block ({i},{j}) violates the {} layout", self.form.name())))
        };
        for i in 0..n {
            for j in 0..n {
                let b = self.block(i, j);
                let ok = match self.form {
                    BlockForm::Companion => {
                        if j == i + 1 {
                            *b == Block::Identity
                        } else if i == n - 1 {
                            true
                        } else {
                            *b == Block::Zero
                        }
                    }
                    BlockForm::Delta => {
                        if j == 0 {
                            true
                        } else if j == i + 1 {
                            *b == Block::Identity
                        } else {
                            *b == Block::Zero
                        }
                    }
                    BlockForm::Psi => {
                        if i == j {
                            *b == Block::Identity
                        } else if j > i {
                            *b == Block::Zero
                        } else {
                            // band: block (i, j) carries A_{n-(i-j)}
                            self.block(i - j, 0).dense(self.d) == b.dense(self.d)
                        }
                    }
                };
                if !ok {
                    return bad(i, j);
                }
            }
        }
        Ok(())
    }
}

/// JSON envelope `{n, d, form, blocks}` with row-major `[re, im]` blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockMatrixJson {
    pub n: usize,
    pub d: usize,
    pub form: BlockForm,
    pub blocks: Vec<Vec<Vec<Vec<[f64; 2]>>>>,
}

/// Initial data `u_0, ..., u_{n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    values: Vec<CVec>,
}

impl InitialData {
    pub fn new(values: Vec<CVec>) -> Result<Self> {
        let d = values.first().map(|v| v.len()).unwrap_or(0);
        if values.is_empty() || d == 0 {
            return Err(LabError::InvalidInput("initial data needs n >= 1 nonempty values".into()));
        }
        if values.iter().any(|v| v.len() != d) {
            return Err(LabError::DimMismatch("initial values differ in dimension".into()));
        }
        Ok(Self { values })
    }

    /// Split a stacked `nd` vector into `n` blocks.
    pub fn from_stacked(x: &CVec, n: usize) -> Result<Self> {
        if n == 0 || x.len() % n != 0 {
            return Err(LabError::DimMismatch(format!("length {} is not a multiple of {n}", x.len())));
        }
        let d = x.len() / n;
        Self::new((0..n).map(|i| x.rows(i * d, d).into_owned()).collect())
    }

    pub fn order(&self) -> usize {
        self.values.len()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn values(&self) -> &[CVec] {
        &self.values
    }

    pub fn stacked(&self) -> CVec {
        let d = self.dim();
        let mut out = CVec::zeros(self.order() * d);
        for (i, v) in self.values.iter().enumerate() {
            out.rows_mut(i * d, d).copy_from(v);
        }
        out
    }
}

fn common_dim(ops: &[OperatorHandle]) -> Result<usize> {
    let d = ops.first().ok_or_else(|| LabError::InvalidInput("need at least one operator".into()))?.dim();
    if let Some(bad) = ops.iter().find(|op| op.dim() != d) {
        return Err(LabError::DimMismatch(format!("operator {} has dimension {}, expected {d}", bad.label, bad.dim())));
    }
    Ok(d)
}

/// Companion matrix: identity superdiagonal, last row `(-A_0, ..., -A_{n-1})`.
pub fn build_companion(ops: &[OperatorHandle]) -> Result<BlockOperatorMatrix> {
    let d = common_dim(ops)?;
    let n = ops.len();
    let mut blocks = vec![Block::Zero; n * n];
    for i in 0..n.saturating_sub(1) {
        blocks[i * n + i + 1] = Block::Identity;
    }
    for (k, op) in ops.iter().enumerate() {
        blocks[(n - 1) * n + k] = Block::from_operator(op, true);
    }
    Ok(BlockOperatorMatrix { n, d, form: BlockForm::Companion, blocks })
}

/// Neubrander matrix: first column `(-A_{n-1}, ..., -A_0)`, identity superdiagonal.
pub fn build_delta(ops: &[OperatorHandle]) -> Result<BlockOperatorMatrix> {
    let d = common_dim(ops)?;
    let n = ops.len();
    let mut blocks = vec![Block::Zero; n * n];
    for i in 0..n {
        blocks[i * n] = Block::from_operator(&ops[n - 1 - i], true);
        if i + 1 < n {
            blocks[i * n + i + 1] = Block::Identity;
        }
    }
    Ok(BlockOperatorMatrix { n, d, form: BlockForm::Delta, blocks })
}

/// Unit lower-triangular `Psi`: block `(i, i-j)` is `+A_{n-j}` for `1 <= j <= i`.
pub fn build_psi(ops: &[OperatorHandle]) -> Result<BlockOperatorMatrix> {
    let d = common_dim(ops)?;
    let n = ops.len();
    let mut blocks = vec![Block::Zero; n * n];
    for i in 0..n {
        blocks[i * n + i] = Block::Identity;
        for j in 1..=i {
            blocks[i * n + (i - j)] = Block::from_operator(&ops[n - j], false);
        }
    }
    Ok(BlockOperatorMatrix { n, d, form: BlockForm::Psi, blocks })
}

/// Forward substitution with the unit lower-triangular block structure.
pub fn psi_apply_inverse(psi: &BlockOperatorMatrix, v: &CVec) -> Result<CVec> {
    if psi.form != BlockForm::Psi {
        return Err(LabError::InvalidInput(format!("expected a PSI matrix, got {}", psi.form.name())));
    }
    if v.len() != psi.size() {
        return Err(LabError::DimMismatch(format!("vector length {} vs block size {}", v.len(), psi.size())));
    }
    let d = psi.d;
    let mut y = v.clone();
    for i in 1..psi.n {
        for k in 0..i {
            let yk = y.rows(k * d, d).into_owned();
            let mut yi = y.rows_mut(i * d, d);
            match psi.block(i, k) {
                Block::Zero => {}
                Block::Identity => yi -= &yk,
                Block::Op(op) => yi -= &op.entries * &yk,
            }
        }
    }
    Ok(y)
}

/// `x = Psi (u_0, ..., u_{n-1})`: component `i+1` is `u_i + sum_{j=1}^{i} A_{n-j} u_{i-j}`.
pub fn derivatives_to_delta_state(ops: &[OperatorHandle], init: &InitialData) -> Result<CVec> {
    let d = common_dim(ops)?;
    let n = ops.len();
    if init.order() != n || init.dim() != d {
        return Err(LabError::DimMismatch(format!(
            "initial data is {}x{}, operators need {n}x{d}",
            init.order(),
            init.dim()
        )));
    }
    let u = init.values();
    let mut out = CVec::zeros(n * d);
    for i in 0..n {
        let mut acc = u[i].clone();
        for j in 1..=i {
            acc += ops[n - j].apply(&u[i - j]);
        }
        out.rows_mut(i * d, d).copy_from(&acc);
    }
    Ok(out)
}

/// Scalar helper for tests and small models: a `1 x 1` operator.
pub fn scalar_operator(value: num_complex::Complex64, label: &str) -> OperatorHandle {
    OperatorHandle { entries: CMat::from_element(1, 1, value), label: label.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, eigenvalues, frobenius, multiset_distance};

    fn s(x: f64, label: &str) -> OperatorHandle {
        scalar_operator(c64(x, 0.0), label)
    }

    fn real_dense(m: &BlockOperatorMatrix) -> Vec<Vec<f64>> {
        let d = m.to_dense();
        (0..d.nrows()).map(|i| (0..d.ncols()).map(|j| d[(i, j)].re).collect()).collect()
    }

    #[test]
    fn companion_second_order() {
        let m = build_companion(&[s(2.0, "A0"), s(3.0, "A1")]).unwrap();
        assert_eq!(real_dense(&m), vec![vec![0.0, 1.0], vec![-2.0, -3.0]]);
        m.check_form().unwrap();
    }

    #[test]
    fn companion_first_order_is_negated_operator() {
        let m = build_companion(&[s(5.0, "A0")]).unwrap();
        assert_eq!(real_dense(&m), vec![vec![-5.0]]);
    }

    #[test]
    fn companion_eigenvalues_are_roots() {
        // lambda^2 + 3 lambda + 2 = (lambda + 1)(lambda + 2)
        let m = build_companion(&[s(2.0, "A0"), s(3.0, "A1")]).unwrap();
        let ev = eigenvalues(&m.to_dense()).unwrap();
        assert!(multiset_distance(&ev, &[c64(-1.0, 0.0), c64(-2.0, 0.0)]) < 1e-12);
    }

    #[test]
    fn delta_second_order() {
        let m = build_delta(&[s(2.0, "A0"), s(3.0, "A1")]).unwrap();
        assert_eq!(real_dense(&m), vec![vec![-3.0, 1.0], vec![-2.0, 0.0]]);
        let ev = eigenvalues(&m.to_dense()).unwrap();
        assert!(multiset_distance(&ev, &[c64(-1.0, 0.0), c64(-2.0, 0.0)]) < 1e-12);
    }

    #[test]
    fn delta_of_zero_operators_is_shift() {
        let m = build_delta(&[s(0.0, "A0"), s(0.0, "A1"), s(0.0, "A2")]).unwrap();
        assert_eq!(real_dense(&m), vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0]]);
        let d = m.to_dense();
        assert!(frobenius(&(&d * &d * &d)) == 0.0);
    }

    #[test]
    fn psi_layouts() {
        let m = build_psi(&[s(0.0, "A0"), s(3.0, "A1")]).unwrap();
        assert_eq!(real_dense(&m), vec![vec![1.0, 0.0], vec![3.0, 1.0]]);
        let m = build_psi(&[s(7.0, "A0")]).unwrap();
        assert_eq!(real_dense(&m), vec![vec![1.0]]);
        let (a, b) = (2.5, -4.0);
        let m = build_psi(&[s(9.0, "A0"), s(b, "A1"), s(a, "A2")]).unwrap();
        assert_eq!(real_dense(&m), vec![vec![1.0, 0.0, 0.0], vec![a, 1.0, 0.0], vec![b, a, 1.0]]);
        m.check_form().unwrap();
    }

    #[test]
    fn psi_inverse_examples() {
        let psi = build_psi(&[s(0.0, "A0"), s(0.0, "A1")]).unwrap();
        let v = CVec::from_vec(vec![c64(1.0, 2.0), c64(-3.0, 0.5)]);
        assert_eq!(psi_apply_inverse(&psi, &v).unwrap(), v);

        let psi = build_psi(&[s(0.0, "A0"), s(3.0, "A1")]).unwrap();
        let v = CVec::from_vec(vec![c64(1.0, 0.0), c64(5.0, 0.0)]);
        let y = psi_apply_inverse(&psi, &v).unwrap();
        assert_eq!(y, CVec::from_vec(vec![c64(1.0, 0.0), c64(2.0, 0.0)]));
    }

    #[test]
    fn delta_state_forward_map() {
        let ops = [s(0.0, "A0"), s(3.0, "A1")];
        let init =
            InitialData::new(vec![CVec::from_element(1, c64(1.0, 0.0)), CVec::from_element(1, c64(4.0, 0.0))]).unwrap();
        let x = derivatives_to_delta_state(&ops, &init).unwrap();
        assert_eq!(x, CVec::from_vec(vec![c64(1.0, 0.0), c64(7.0, 0.0)]));

        let zeros = [s(0.0, "A0"), s(0.0, "A1")];
        assert_eq!(derivatives_to_delta_state(&zeros, &init).unwrap(), init.stacked());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = OperatorHandle::zero(2, "A0");
        let b = OperatorHandle::zero(3, "A1");
        assert_eq!(build_companion(&[a.clone(), b.clone()]).unwrap_err().code(), "DIM_MISMATCH");
        assert_eq!(build_delta(&[a.clone(), b.clone()]).unwrap_err().code(), "DIM_MISMATCH");
        assert_eq!(build_psi(&[a, b]).unwrap_err().code(), "DIM_MISMATCH");
    }

    #[test]
    fn operator_rejects_nonfinite() {
        let m = CMat::from_element(2, 2, c64(f64::NAN, 0.0));
        assert!(OperatorHandle::new(m, "bad").is_err());
        assert!(OperatorHandle::new(CMat::zeros(2, 3), "rect").is_err());
    }

    #[test]
    fn json_envelope_round_trip() {
        let ops = [s(2.0, "A0"), s(3.0, "A1"), s(-1.5, "A2")];
        for m in [build_companion(&ops), build_delta(&ops), build_psi(&ops)] {
            let m = m.unwrap();
            let text = serde_json::to_string(&m.to_json()).unwrap();
            let back: BlockMatrixJson = serde_json::from_str(&text).unwrap();
            let m2 = BlockOperatorMatrix::from_json(&back).unwrap();
            assert_eq!(m.to_dense(), m2.to_dense());
            assert_eq!(m.form(), m2.form());
        }
    }

    #[test]
    fn operators_recovered_from_layout() {
        let ops = [s(2.0, "A0"), s(3.0, "A1"), s(-1.5, "A2")];
        for m in [build_companion(&ops).unwrap(), build_delta(&ops).unwrap()] {
            let rec = m.operators();
            for (a, b) in rec.iter().zip(&ops) {
                assert_eq!(a.entries(), b.entries());
            }
        }
        let rec = build_psi(&ops).unwrap().operators();
        for k in 1..3 {
            assert_eq!(rec[k].entries(), ops[k].entries());
        }
    }
}
