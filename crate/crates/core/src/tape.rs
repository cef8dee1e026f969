//! Reverse-mode differentiation over dense matrices.
//!
//! Every operation appends a node holding its forward value and the inputs
//! it was computed from. [`Tape::backward`] walks the nodes once in reverse
//! and accumulates gradients for the leaves that were registered with
//! [`Tape::param`]. Constants never receive gradients and subgraphs that only
//! depend on constants are skipped.

use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::sinkhorn::{self, SinkhornRecord};
use crate::sparse::CsrMatrix;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How the right operand of an elementwise binary op is broadcast.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// `1 x cols`, repeated down the rows.
    Row,
    /// `rows x 1`, repeated across the columns.
    Col,
    /// `1 x 1`.
    Scalar,
}

fn broadcast_kind(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Result<Broadcast> {
    if lhs == rhs {
        Ok(Broadcast::Same)
    } else if rhs == (1, 1) {
        Ok(Broadcast::Scalar)
    } else if rhs.0 == 1 && rhs.1 == lhs.1 {
        Ok(Broadcast::Row)
    } else if rhs.1 == 1 && rhs.0 == lhs.0 {
        Ok(Broadcast::Col)
    } else {
        Err(Error::shape(op, lhs, rhs))
    }
}

#[inline]
fn broadcast_index(kind: Broadcast, cols: usize, r: usize, c: usize) -> usize {
    match kind {
        Broadcast::Same => r * cols + c,
        Broadcast::Row => c,
        Broadcast::Col => r,
        Broadcast::Scalar => 0,
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    SparseMatMul(Arc<CsrMatrix>, Var),
    Add(Var, Var, Broadcast),
    Sub(Var, Var, Broadcast),
    Mul(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Relu(Var),
    Abs(Var),
    Exp(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    GatherRows(Var, Vec<usize>),
    PairwiseSqDist(Var, Var),
    /// Row-wise soft minimum; holds the softmax weights for the backward pass.
    SoftminRows {
        cost: Var,
        potential: Var,
        weights: Tensor,
    },
    SoftminCols {
        cost: Var,
        potential: Var,
        weights: Tensor,
    },
    SinkhornPlan(Var, Box<SinkhornRecord>),
}

struct Node {
    value: Tensor,
    op: Op,
    tracks_grad: bool,
}

/// Recording of a forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to the parameters of a tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for a parameter leaf. `None` for constants and intermediates.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient for a parameter leaf, or zeros of the given shape when the
    /// loss does not depend on it.
    pub fn get_or_zeros(&self, var: Var, shape: (usize, usize)) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(shape.0, shape.1))
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> (usize, usize) {
        self.nodes[var.0].value.shape()
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, var: Var) -> Option<f64> {
        self.value(var).scalar_value()
    }

    /// A leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: Tensor, op: Op, tracks_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            tracks_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn tracks(&self, var: Var) -> bool {
        self.nodes[var.0].tracks_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let tracks = self.tracks(a) || self.tracks(b);
        Ok(self.push(value, Op::MatMul(a, b), tracks))
    }

    /// `adjacency * x` for a sparse, constant left operand.
    pub fn sparse_matmul(&mut self, adjacency: &Arc<CsrMatrix>, x: Var) -> Result<Var> {
        let value = adjacency.matmul_dense(self.value(x))?;
        let tracks = self.tracks(x);
        Ok(self.push(value, Op::SparseMatMul(Arc::clone(adjacency), x), tracks))
    }

    /// Elementwise `a + b`. `b` may be the same shape as `a`, a row vector, a
    /// column vector or a scalar; it is broadcast accordingly.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let kind = broadcast_kind("add", self.shape(a), self.shape(b))?;
        let value = self.broadcast_apply(a, b, kind, |x, y| x + y);
        let tracks = self.tracks(a) || self.tracks(b);
        Ok(self.push(value, Op::Add(a, b, kind), tracks))
    }

    /// Elementwise `a - b` with the same broadcasting rules as [`Tape::add`].
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let kind = broadcast_kind("sub", self.shape(a), self.shape(b))?;
        let value = self.broadcast_apply(a, b, kind, |x, y| x - y);
        let tracks = self.tracks(a) || self.tracks(b);
        Ok(self.push(value, Op::Sub(a, b, kind), tracks))
    }

    /// Adds a bias row vector to every row.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ar, ac) = self.shape(a);
        if self.shape(bias) != (1, ac) {
            return Err(Error::shape("add_bias", (ar, ac), self.shape(bias)));
        }
        self.add(a, bias)
    }

    fn broadcast_apply(&self, a: Var, b: Var, kind: Broadcast, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let av = self.value(a);
        let bv = self.value(b).data();
        let (rows, cols) = av.shape();
        let mut out = Tensor::zeros(rows, cols);
        let out_data = out.data_mut();
        for r in 0..rows {
            for c in 0..cols {
                let k = r * cols + c;
                out_data[k] = f(av.data()[k], bv[broadcast_index(kind, cols, r, c)]);
            }
        }
        out
    }

    /// Elementwise product of equally shaped operands.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("mul", self.shape(a), self.shape(b)));
        }
        let value = Tensor::from_vec(
            self.shape(a).0,
            self.shape(a).1,
            self.value(a)
                .data()
                .iter()
                .zip(self.value(b).data())
                .map(|(x, y)| x * y)
                .collect(),
        )?;
        let tracks = self.tracks(a) || self.tracks(b);
        Ok(self.push(value, Op::Mul(a, b), tracks))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|x| x * factor);
        let tracks = self.tracks(a);
        self.push(value, Op::Scale(a, factor), tracks)
    }

    pub fn add_const(&mut self, a: Var, offset: f64) -> Var {
        let value = self.value(a).map(|x| x + offset);
        let tracks = self.tracks(a);
        self.push(value, Op::AddConst(a), tracks)
    }

    /// `max(x, 0)`; the derivative at exactly zero is taken as zero.
    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let tracks = self.tracks(a);
        self.push(value, Op::Relu(a), tracks)
    }

    /// `|x|`; the derivative at exactly zero is taken as zero.
    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).map(math::abs);
        let tracks = self.tracks(a);
        self.push(value, Op::Abs(a), tracks)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(math::exp);
        let tracks = self.tracks(a);
        self.push(value, Op::Exp(a), tracks)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        let tracks = self.tracks(a);
        self.push(value, Op::Square(a), tracks)
    }

    /// Sum of all entries, as a `1 x 1` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let tracks = self.tracks(a);
        self.push(value, Op::Sum(a), tracks)
    }

    /// Mean of all entries, as a `1 x 1` tensor.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(Error::shape("mean", t.shape(), (1, 1)));
        }
        let value = Tensor::scalar(t.sum() / t.len() as f64);
        let tracks = self.tracks(a);
        Ok(self.push(value, Op::Mean(a), tracks))
    }

    /// Rows of `a` picked by `indices` (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let value = self.value(a).gather_rows(indices)?;
        let tracks = self.tracks(a);
        Ok(self.push(value, Op::GatherRows(a, indices.to_vec()), tracks))
    }

    /// `D[i][j] = ||a_i - b_j||^2` for row sets `a` (m x k) and `b` (p x k).
    pub fn pairwise_sq_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (p, kb) = self.shape(b);
        if k != kb {
            return Err(Error::shape("pairwise_sq_dist", (m, k), (p, kb)));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = Tensor::zeros(m, p);
        for i in 0..m {
            let ai = av.row_slice(i);
            for j in 0..p {
                let d: f64 = ai
                    .iter()
                    .zip(bv.row_slice(j))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                out.set(i, j, d);
            }
        }
        let tracks = self.tracks(a) || self.tracks(b);
        Ok(self.push(out, Op::PairwiseSqDist(a, b), tracks))
    }

    /// Entropic soft minimum over each row of `cost` against a column
    /// potential, under uniform weights on the columns:
    ///
    /// `out_i = -eps * ln( (1/p) * sum_j exp((g_j - C_ij) / eps) )`
    ///
    /// `cost` is `m x p`, `potential` is `1 x p`; the result is `m x 1`.
    /// The minimum is factored out in cost units, so a single column gives
    /// `out_i = C_i0 - g_0` exactly.
    pub fn softmin_rows(&mut self, cost: Var, potential: Var, eps: f64) -> Result<Var> {
        let (m, p) = self.shape(cost);
        if self.shape(potential) != (1, p) {
            return Err(Error::shape("softmin_rows", (m, p), self.shape(potential)));
        }
        if !(eps > 0.0) || p == 0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "softmin needs eps > 0 and a non-empty row, got eps={eps}, {p} columns"
            )));
        }
        let c = self.value(cost);
        let g = self.value(potential).data();
        let log_weight = -math::ln(p as f64);
        let inv_eps = 1.0 / eps;
        let mut out = Tensor::zeros(m, 1);
        let mut weights = Tensor::zeros(m, p);
        let mut shifted = vec![0.0; p];
        for i in 0..m {
            let row = c.row_slice(i);
            for (s, (&cij, &gj)) in shifted.iter_mut().zip(row.iter().zip(g)) {
                *s = cij - gj;
            }
            let lo = shifted.iter().copied().fold(f64::INFINITY, f64::min);
            let w_row = &mut weights.data_mut()[i * p..(i + 1) * p];
            let mut total = 0.0;
            for (w, &s) in w_row.iter_mut().zip(&shifted) {
                *w = math::exp((lo - s) * inv_eps);
                total += *w;
            }
            let inv_total = 1.0 / total;
            for w in w_row.iter_mut() {
                *w *= inv_total;
            }
            out.set(i, 0, lo - eps * (math::ln(total) + log_weight));
        }
        let tracks = self.tracks(cost) || self.tracks(potential);
        Ok(self.push(
            out,
            Op::SoftminRows {
                cost,
                potential,
                weights,
            },
            tracks,
        ))
    }

    /// Column counterpart of [`Tape::softmin_rows`]: `potential` is `m x 1`,
    /// uniform weights over rows, result is `1 x p`.
    pub fn softmin_cols(&mut self, cost: Var, potential: Var, eps: f64) -> Result<Var> {
        let (m, p) = self.shape(cost);
        if self.shape(potential) != (m, 1) {
            return Err(Error::shape("softmin_cols", (m, p), self.shape(potential)));
        }
        if !(eps > 0.0) || m == 0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "softmin needs eps > 0 and a non-empty column, got eps={eps}, {m} rows"
            )));
        }
        let c = self.value(cost);
        let f = self.value(potential).data();
        let log_weight = -math::ln(m as f64);
        let inv_eps = 1.0 / eps;
        let mut lo = vec![f64::INFINITY; p];
        for i in 0..m {
            for (l, &cij) in lo.iter_mut().zip(c.row_slice(i)) {
                *l = l.min(cij - f[i]);
            }
        }
        let mut weights = Tensor::zeros(m, p);
        let mut totals = vec![0.0; p];
        {
            let w = weights.data_mut();
            for i in 0..m {
                let row = c.row_slice(i);
                let w_row = &mut w[i * p..(i + 1) * p];
                for j in 0..p {
                    let e = math::exp((lo[j] - (row[j] - f[i])) * inv_eps);
                    w_row[j] = e;
                    totals[j] += e;
                }
            }
            let inv_totals: Vec<f64> = totals.iter().map(|t| 1.0 / t).collect();
            for w_row in w.chunks_exact_mut(p) {
                for (v, t) in w_row.iter_mut().zip(&inv_totals) {
                    *v *= t;
                }
            }
        }
        let mut out = Tensor::zeros(1, p);
        for j in 0..p {
            out.set(0, j, lo[j] - eps * (math::ln(totals[j]) + log_weight));
        }
        let tracks = self.tracks(cost) || self.tracks(potential);
        Ok(self.push(
            out,
            Op::SoftminCols {
                cost,
                potential,
                weights,
            },
            tracks,
        ))
    }

    /// Entropic transport plan between uniform measures for an `m x p`
    /// cost: `iterations` alternating soft-minimum updates of the potentials
    /// (see [`Tape::softmin_rows`] and [`Tape::softmin_cols`]) from `g = 0`,
    /// then `pi_ij = exp((f_i + g_j - C_ij) / eps) / (m p)`. Equivalent to
    /// chaining those ops, but runs each update as a kernel product.
    pub fn sinkhorn_plan(&mut self, cost: Var, eps: f64, iterations: usize) -> Result<Var> {
        self.sinkhorn_plan_scheduled(cost, &vec![eps; iterations])
    }

    /// As [`Tape::sinkhorn_plan`], with one iteration per entry of
    /// `schedule` run at that `eps`. The plan uses the last entry.
    pub fn sinkhorn_plan_scheduled(&mut self, cost: Var, schedule: &[f64]) -> Result<Var> {
        let (m, p) = self.shape(cost);
        let bad_eps = schedule.iter().any(|&e| !(e > 0.0 && e.is_finite()));
        if bad_eps || m == 0 || p == 0 || schedule.is_empty() {
            return Err(Error::InvalidConfig(alloc::format!(
                "sinkhorn needs finite eps > 0, a non-empty cost and at least one iteration, \
                 got {m}x{p} with {} iterations",
                schedule.len()
            )));
        }
        if !self.value(cost).is_finite() {
            return Err(Error::NonFinite("sinkhorn cost"));
        }
        let (plan, record) = sinkhorn::solve(self.value(cost), schedule);
        let tracks = self.tracks(cost);
        Ok(self.push(plan, Op::SinkhornPlan(cost, Box::new(record)), tracks))
    }

    /// Gradients of the scalar `loss` with respect to every parameter leaf.
    /// Intermediate gradient buffers are dropped as soon as they have been
    /// propagated.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let (rows, cols) = self.shape(loss);
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarLoss { rows, cols });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracks_grad {
                grads[idx] = None;
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &upstream, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], var: Var, delta: Tensor) -> Result<()> {
        if !self.tracks(var) {
            return Ok(());
        }
        match &mut grads[var.0] {
            Some(existing) => existing.add_assign(&delta),
            slot @ None => {
                *slot = Some(delta);
                Ok(())
            }
        }
    }

    fn propagate(&self, node: &Node, up: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match &node.op {
            Op::Leaf => Ok(()),
            Op::MatMul(a, b) => {
                if self.tracks(*a) {
                    let da = up.matmul(&self.value(*b).transpose())?;
                    self.accumulate(grads, *a, da)?;
                }
                if self.tracks(*b) {
                    let db = self.value(*a).transpose().matmul(up)?;
                    self.accumulate(grads, *b, db)?;
                }
                Ok(())
            }
            Op::SparseMatMul(adj, x) => {
                let dx = adj.transpose_matmul_dense(up)?;
                self.accumulate(grads, *x, dx)
            }
            Op::Add(a, b, kind) | Op::Sub(a, b, kind) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if self.tracks(*a) {
                    self.accumulate(grads, *a, up.clone())?;
                }
                if self.tracks(*b) {
                    let (br, bc) = self.shape(*b);
                    let mut db = Tensor::zeros(br, bc);
                    let (rows, cols) = up.shape();
                    for r in 0..rows {
                        for c in 0..cols {
                            db.data_mut()[broadcast_index(*kind, cols, r, c)] += sign * up.get(r, c);
                        }
                    }
                    self.accumulate(grads, *b, db)?;
                }
                Ok(())
            }
            Op::Mul(a, b) => {
                if self.tracks(*a) {
                    let bv = self.value(*b);
                    let da = elementwise(up, bv, |u, y| u * y);
                    self.accumulate(grads, *a, da)?;
                }
                if self.tracks(*b) {
                    let av = self.value(*a);
                    let db = elementwise(up, av, |u, x| u * x);
                    self.accumulate(grads, *b, db)?;
                }
                Ok(())
            }
            Op::Scale(a, factor) => self.accumulate(grads, *a, up.map(|u| u * factor)),
            Op::AddConst(a) => self.accumulate(grads, *a, up.clone()),
            Op::Relu(a) => {
                let da = elementwise(up, self.value(*a), |u, x| if x > 0.0 { u } else { 0.0 });
                self.accumulate(grads, *a, da)
            }
            Op::Abs(a) => {
                let da = elementwise(up, self.value(*a), |u, x| {
                    if x > 0.0 {
                        u
                    } else if x < 0.0 {
                        -u
                    } else {
                        0.0
                    }
                });
                self.accumulate(grads, *a, da)
            }
            Op::Exp(a) => {
                let da = elementwise(up, &node.value, |u, y| u * y);
                self.accumulate(grads, *a, da)
            }
            Op::Square(a) => {
                let da = elementwise(up, self.value(*a), |u, x| 2.0 * u * x);
                self.accumulate(grads, *a, da)
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(*a);
                self.accumulate(grads, *a, Tensor::filled(r, c, up.data()[0]))
            }
            Op::Mean(a) => {
                let (r, c) = self.shape(*a);
                let g = up.data()[0] / (r * c) as f64;
                self.accumulate(grads, *a, Tensor::filled(r, c, g))
            }
            Op::GatherRows(a, indices) => {
                let (r, c) = self.shape(*a);
                let mut da = Tensor::zeros(r, c);
                for (k, &i) in indices.iter().enumerate() {
                    let dst = &mut da.data_mut()[i * c..(i + 1) * c];
                    for (d, &u) in dst.iter_mut().zip(up.row_slice(k)) {
                        *d += u;
                    }
                }
                self.accumulate(grads, *a, da)
            }
            Op::PairwiseSqDist(a, b) => {
                // dA = 2 (diag(U 1) A - U B), dB = 2 (diag(U^T 1) B - U^T A)
                let av = self.value(*a);
                let bv = self.value(*b);
                if self.tracks(*a) {
                    let mut da = up.matmul(bv)?;
                    for i in 0..av.rows() {
                        let r: f64 = up.row_slice(i).iter().sum();
                        for (d, x) in da.data_mut()[i * av.cols()..(i + 1) * av.cols()]
                            .iter_mut()
                            .zip(av.row_slice(i))
                        {
                            *d = 2.0 * (r * x - *d);
                        }
                    }
                    self.accumulate(grads, *a, da)?;
                }
                if self.tracks(*b) {
                    let ut = up.transpose();
                    let mut db = ut.matmul(av)?;
                    for j in 0..bv.rows() {
                        let c: f64 = ut.row_slice(j).iter().sum();
                        for (d, y) in db.data_mut()[j * bv.cols()..(j + 1) * bv.cols()]
                            .iter_mut()
                            .zip(bv.row_slice(j))
                        {
                            *d = 2.0 * (c * y - *d);
                        }
                    }
                    self.accumulate(grads, *b, db)?;
                }
                Ok(())
            }
            Op::SoftminRows {
                cost,
                potential,
                weights,
            } => {
                // d out_i / d C_ij = P_ij, d out_i / d g_j = -P_ij
                let (m, p) = weights.shape();
                let mut dc = Tensor::zeros(m, p);
                let mut dg = Tensor::zeros(1, p);
                for i in 0..m {
                    let u = up.data()[i];
                    let w_row = weights.row_slice(i);
                    let dc_row = &mut dc.data_mut()[i * p..(i + 1) * p];
                    for (d, &w) in dc_row.iter_mut().zip(w_row) {
                        *d = u * w;
                    }
                    for (d, &w) in dg.data_mut().iter_mut().zip(w_row) {
                        *d -= u * w;
                    }
                }
                self.accumulate(grads, *cost, dc)?;
                self.accumulate(grads, *potential, dg)
            }
            Op::SinkhornPlan(cost, record) => {
                let dc = sinkhorn::backward(record, &node.value, up);
                self.accumulate(grads, *cost, dc)
            }
            Op::SoftminCols {
                cost,
                potential,
                weights,
            } => {
                let (m, p) = weights.shape();
                let mut dc = Tensor::zeros(m, p);
                let mut df = Tensor::zeros(m, 1);
                let u = up.data();
                for i in 0..m {
                    let w_row = weights.row_slice(i);
                    let dc_row = &mut dc.data_mut()[i * p..(i + 1) * p];
                    let mut acc = 0.0;
                    for j in 0..p {
                        let t = u[j] * w_row[j];
                        dc_row[j] = t;
                        acc += t;
                    }
                    df.data_mut()[i] = -acc;
                }
                self.accumulate(grads, *cost, dc)?;
                self.accumulate(grads, *potential, df)
            }
        }
    }
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let mut out = a.clone();
    for (o, &y) in out.data_mut().iter_mut().zip(b.data()) {
        *o = f(*o, y);
    }
    out
}
