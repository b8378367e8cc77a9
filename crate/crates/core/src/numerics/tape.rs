//! Reverse-mode differentiation over a fixed set of matrix operations.
//!
//! A [`Tape`] records every operation eagerly: values are computed when the
//! op is pushed, and [`Tape::backward`] walks the records in reverse. Only
//! nodes that depend on a parameter leaf receive gradients.
//!
//! The first op that produces a non-finite value poisons the tape; `backward`
//! then fails with [`Error::Numeric`] naming that op.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, SparseMatrix};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    SpMM(Arc<SparseMatrix>, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `a (n×m) + b (n×1)` broadcast along columns.
    AddCol(Var, Var),
    /// `a (n×m) ∘ b (n×1)` broadcast along columns.
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    RowNormalize(Var),
    RowSum(Var),
    ColSum(Var),
    Sum(Var),
    GatherRows(Var, Arc<Vec<usize>>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::MatMulBt(..) => "matmul_bt",
            Op::SpMM(..) => "spmm",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddCol(..) => "add_col",
            Op::MulCol(..) => "mul_col",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Relu(..) => "relu",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::RowNormalize(..) => "row_normalize",
            Op::RowSum(..) => "row_sum",
            Op::ColSum(..) => "col_sum",
            Op::Sum(..) => "sum",
            Op::GatherRows(..) => "gather_rows",
        }
    }
}

struct Node {
    value: DenseMatrix,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    poisoned: Option<&'static str>,
    shape_error: Option<String>,
    track_relu: bool,
    relu_pattern: Vec<bool>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records the sign pattern of every ReLU input; used by the
    /// finite-difference checker to detect kink crossings.
    pub fn tracking_relu() -> Self {
        Self {
            track_relu: true,
            ..Self::default()
        }
    }

    pub fn relu_pattern(&self) -> &[bool] {
        &self.relu_pattern
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn param(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).get(0, 0)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: DenseMatrix, op: Op, requires_grad: bool) -> Var {
        if self.poisoned.is_none() && !value.is_finite() {
            self.poisoned = Some(op.name());
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// On a shape error the tape records it and yields a placeholder so the
    /// caller can keep chaining; `check`/`backward` surface the error.
    fn push_result(&mut self, value: Result<DenseMatrix>, op: Op, requires_grad: bool) -> Var {
        match value {
            Ok(v) => self.push(v, op, requires_grad),
            Err(e) => {
                if self.shape_error.is_none() {
                    self.shape_error = Some(format!("{}: {e}", op.name()));
                }
                self.push(DenseMatrix::zeros(1, 1), op, false)
            }
        }
    }

    /// Fails if any recorded op hit a shape mismatch or produced a non-finite value.
    pub fn check(&self) -> Result<()> {
        if let Some(msg) = &self.shape_error {
            return Err(Error::Shape(msg.clone()));
        }
        if let Some(op) = self.poisoned {
            return Err(Error::Numeric { op });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push_result(v, Op::MatMul(a, b), rg)
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_bt(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push_result(v, Op::MatMulBt(a, b), rg)
    }

    pub fn spmm(&mut self, sparse: &Arc<SparseMatrix>, b: Var) -> Var {
        let v = sparse.spmm(self.value(b));
        let rg = self.rg(b);
        self.push_result(v, Op::SpMM(Arc::clone(sparse), b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).add(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push_result(v, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).sub(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push_result(v, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).hadamard(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push_result(v, Op::Mul(a, b), rg)
    }

    pub fn add_col(&mut self, a: Var, col: Var) -> Var {
        let v = broadcast_col(self.value(a), self.value(col), |x, c| x + c);
        let rg = self.rg(a) || self.rg(col);
        self.push_result(v, Op::AddCol(a, col), rg)
    }

    pub fn sub_col(&mut self, a: Var, col: Var) -> Var {
        let neg = self.scale(col, -1.0);
        self.add_col(a, neg)
    }

    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let v = broadcast_col(self.value(a), self.value(col), |x, c| x * c);
        let rg = self.rg(a) || self.rg(col);
        self.push_result(v, Op::MulCol(a, col), rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        let rg = self.rg(a);
        self.push(v, Op::Scale(a, s), rg)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x + s);
        let rg = self.rg(a);
        self.push(v, Op::AddScalar(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        if self.track_relu {
            let pattern: Vec<bool> = self.value(a).data().iter().map(|&x| x > 0.0).collect();
            self.relu_pattern.extend(pattern);
        }
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let rg = self.rg(a);
        self.push(v, Op::Relu(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        let rg = self.rg(a);
        self.push(v, Op::Exp(a), rg)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        let rg = self.rg(a);
        self.push(v, Op::Log(a), rg)
    }

    pub fn row_normalize(&mut self, a: Var) -> Var {
        let v = self.value(a).row_l2_normalized();
        let rg = self.rg(a);
        self.push(v, Op::RowNormalize(a), rg)
    }

    /// `n×m → n×1`
    pub fn row_sum(&mut self, a: Var) -> Var {
        let sums = self.value(a).row_sums();
        let v = DenseMatrix::from_vec(sums.len(), 1, sums).expect("column vector");
        let rg = self.rg(a);
        self.push(v, Op::RowSum(a), rg)
    }

    /// `n×m → 1×m`
    pub fn col_sum(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let mut sums = vec![0.0; m.cols()];
        for r in 0..m.rows() {
            for (s, &x) in sums.iter_mut().zip(m.row(r)) {
                *s += x;
            }
        }
        let v = DenseMatrix::from_vec(1, sums.len(), sums).expect("row vector");
        let rg = self.rg(a);
        self.push(v, Op::ColSum(a), rg)
    }

    /// `n×m → 1×1`
    pub fn sum(&mut self, a: Var) -> Var {
        let v = DenseMatrix::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(v, Op::Sum(a), rg)
    }

    pub fn gather_rows(&mut self, a: Var, idx: &Arc<Vec<usize>>) -> Var {
        let src = self.value(a);
        let value = if let Some(&bad) = idx.iter().find(|&&i| i >= src.rows()) {
            Err(Error::shape(format!("row {bad} of a {}-row matrix", src.rows())))
        } else {
            Ok(src.select_rows(idx))
        };
        let rg = self.rg(a);
        self.push_result(value, Op::GatherRows(a, Arc::clone(idx)), rg)
    }

    /// Row-wise dot product of two equally shaped matrices, `n×1`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Var {
        let prod = self.mul(a, b);
        self.row_sum(prod)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let s = self.sum(a);
        self.scale(s, 1.0 / (r * c).max(1) as f64)
    }

    /// Reverse pass from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.check()?;
        if self.shape(loss) != (1, 1) {
            return Err(Error::shape(format!(
                "backward needs a 1x1 objective, got {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(DenseMatrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.rg(*a) {
                        let da = g.matmul_bt(self.value(*b))?;
                        accumulate(&mut grads, *a, da);
                    }
                    if self.rg(*b) {
                        let db = self.value(*a).matmul_at(&g)?;
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::MatMulBt(a, b) => {
                    if self.rg(*a) {
                        let da = g.matmul(self.value(*b))?;
                        accumulate(&mut grads, *a, da);
                    }
                    if self.rg(*b) {
                        let db = g.matmul_at(self.value(*a))?;
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::SpMM(sp, b) => {
                    let db = sp.spmm_transposed(&g)?;
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, g.scale(-1.0));
                    }
                }
                Op::Mul(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g.hadamard(self.value(*b))?);
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, g.hadamard(self.value(*a))?);
                    }
                }
                Op::AddCol(a, col) => {
                    if self.rg(*col) {
                        let sums = g.row_sums();
                        let dc = DenseMatrix::from_vec(sums.len(), 1, sums)?;
                        accumulate(&mut grads, *col, dc);
                    }
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::MulCol(a, col) => {
                    if self.rg(*col) {
                        let av = self.value(*a);
                        let dc: Vec<f64> = (0..g.rows())
                            .map(|r| g.row(r).iter().zip(av.row(r)).map(|(x, y)| x * y).sum())
                            .collect();
                        accumulate(&mut grads, *col, DenseMatrix::from_vec(dc.len(), 1, dc)?);
                    }
                    if self.rg(*a) {
                        let da = broadcast_col(&g, self.value(*col), |x, c| x * c)?;
                        accumulate(&mut grads, *a, da);
                    }
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, g.scale(*s)),
                Op::AddScalar(a) => accumulate(&mut grads, *a, g),
                Op::Relu(a) => {
                    // d relu(x)/dx at exactly 0 is taken to be 0.
                    let da = g.zip_map(self.value(*a), |gv, x| if x > 0.0 { gv } else { 0.0 })?;
                    accumulate(&mut grads, *a, da);
                }
                Op::Exp(a) => accumulate(&mut grads, *a, g.hadamard(&node.value)?),
                Op::Log(a) => {
                    let da = g.zip_map(self.value(*a), |gv, x| gv / x)?;
                    accumulate(&mut grads, *a, da);
                }
                Op::RowNormalize(a) => {
                    let x = self.value(*a);
                    let y = &node.value;
                    let mut da = DenseMatrix::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        let norm = x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                        if norm == 0.0 {
                            continue;
                        }
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let proj: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((d, &gv), &yv) in da.row_mut(r).iter_mut().zip(gr).zip(yr) {
                            *d = (gv - yv * proj) / norm;
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::RowSum(a) => {
                    let (r, c) = self.shape(*a);
                    let da = DenseMatrix::from_fn(r, c, |i, _| g.get(i, 0));
                    accumulate(&mut grads, *a, da);
                }
                Op::ColSum(a) => {
                    let (r, c) = self.shape(*a);
                    let da = DenseMatrix::from_fn(r, c, |_, j| g.get(0, j));
                    accumulate(&mut grads, *a, da);
                }
                Op::Sum(a) => {
                    let (r, c) = self.shape(*a);
                    accumulate(&mut grads, *a, DenseMatrix::filled(r, c, g.get(0, 0)));
                }
                Op::GatherRows(a, idx) => {
                    let (r, c) = self.shape(*a);
                    let mut da = DenseMatrix::zeros(r, c);
                    for (k, &i) in idx.iter().enumerate() {
                        for (d, &gv) in da.row_mut(i).iter_mut().zip(g.row(k)) {
                            *d += gv;
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn broadcast_col(
    a: &DenseMatrix,
    col: &DenseMatrix,
    f: impl Fn(f64, f64) -> f64,
) -> Result<DenseMatrix> {
    if col.cols() != 1 || col.rows() != a.rows() {
        return Err(Error::shape(format!(
            "column broadcast of {:?} onto {:?}",
            col.shape(),
            a.shape()
        )));
    }
    Ok(DenseMatrix::from_fn(a.rows(), a.cols(), |r, c| {
        f(a.get(r, c), col.get(r, 0))
    }))
}

fn accumulate(grads: &mut [Option<DenseMatrix>], v: Var, g: DenseMatrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.axpy(1.0, &g).expect("gradient shapes agree"),
        slot @ None => *slot = Some(g),
    }
}

/// Result of a reverse pass.
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    /// Gradient with respect to a leaf; unreachable leaves get zeros.
    pub fn wrt(&self, tape: &Tape, v: Var) -> DenseMatrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = tape.shape(v);
                DenseMatrix::zeros(r, c)
            }
        }
    }
}
