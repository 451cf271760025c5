//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every operation appends a node holding its forward value and the indices
//! of its inputs. Because inputs always precede their consumers, the tape
//! order is a topological order and [`Tape::backward`] replays it in reverse,
//! visiting each node once. Parameter leaves remember which [`ParamId`] they
//! were read from so their gradients can be added back into the store; this
//! addition is what makes gradient accumulation across several tapes work.

use std::sync::Arc;

use super::matrix::{matmul_nt_into, matmul_tn_into, softmax_in_place};
use super::{Matrix, ParamId, ParamStore, SparseAdj};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Identity,
    Sigmoid,
    Tanh,
    Relu,
    LeakyRelu(f64),
    /// ELU with unit scale.
    Elu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
        }
    }

    /// Derivative given the input `x` and the output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Lower and upper clamp applied to probabilities before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy on plain numbers.
pub fn bce_loss(preds: &[f64], labels: &[f64]) -> Result<f64> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(Error::shape(format!(
            "bce over {} predictions and {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let sum: f64 = preds
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(sum / preds.len() as f64)
}

#[derive(Clone, Debug)]
enum Op {
    Leaf(Option<ParamId>),
    MatMul(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Act(usize, Activation),
    SoftmaxRows(usize),
    Transpose(usize),
    ConcatCols(usize, usize),
    MaxRows(usize, Vec<usize>),
    MeanRows(usize),
    Row(usize, usize),
    Mean(usize),
    SpMM(Arc<SparseAdj>, usize),
    EdgeScores { dst: usize, src: usize, adj: Arc<SparseAdj> },
    SegmentSoftmax(usize, Arc<SparseAdj>),
    EdgeAggregate { alpha: usize, h: usize, adj: Arc<SparseAdj> },
    Bce(usize, Vec<f64>),
}

impl Op {
    fn parents(&self) -> Vec<usize> {
        match *self {
            Op::Leaf(_) => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::AddRow(a, b)
            | Op::Mul(a, b)
            | Op::ConcatCols(a, b) => vec![a, b],
            Op::Scale(a, _)
            | Op::Act(a, _)
            | Op::SoftmaxRows(a)
            | Op::Transpose(a)
            | Op::MaxRows(a, _)
            | Op::MeanRows(a)
            | Op::Row(a, _)
            | Op::Mean(a)
            | Op::SpMM(_, a)
            | Op::SegmentSoftmax(a, _)
            | Op::Bce(a, _) => vec![a],
            Op::EdgeScores { dst, src, .. } => vec![dst, src],
            Op::EdgeAggregate { alpha, h, .. } => vec![alpha, h],
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Records a forward computation for later gradient replay.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Gradient of the last backward pass with respect to `v`, if reached.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, v: Var) -> Result<&Matrix> {
        self.nodes
            .get(v.0)
            .map(|n| &n.value)
            .ok_or_else(|| Error::shape(format!("variable {} is not on this tape", v.0)))
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf(None))
    }

    /// Reads a parameter onto the tape; its gradient flows back to the store.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Leaf(Some(id)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.check(a)?.matmul(self.check(b)?)?;
        Ok(self.push(value, Op::MatMul(a.0, b.0)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.check(a)?, self.check(b)?);
        if x.shape() != y.shape() {
            return Err(Error::shape(format!("add {:?} + {:?}", x.shape(), y.shape())));
        }
        let mut value = x.clone();
        value.add_assign(y);
        Ok(self.push(value, Op::Add(a.0, b.0)))
    }

    /// Adds the `1 × m` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.check(a)?, self.check(b)?);
        if y.rows() != 1 || y.cols() != x.cols() {
            return Err(Error::shape(format!(
                "row broadcast {:?} + {:?}",
                x.shape(),
                y.shape()
            )));
        }
        let mut value = x.clone();
        for r in 0..value.rows() {
            for (o, b) in value.row_mut(r).iter_mut().zip(y.data()) {
                *o += b;
            }
        }
        Ok(self.push(value, Op::AddRow(a.0, b.0)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.check(a)?, self.check(b)?);
        if x.shape() != y.shape() {
            return Err(Error::shape(format!("mul {:?} * {:?}", x.shape(), y.shape())));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let value = Matrix::from_raw(x.rows(), x.cols(), data);
        Ok(self.push(value, Op::Mul(a.0, b.0)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let value = self.check(a)?.scale(s);
        Ok(self.push(value, Op::Scale(a.0, s)))
    }

    pub fn activation(&mut self, a: Var, f: Activation) -> Result<Var> {
        if f == Activation::Identity {
            self.check(a)?;
            return Ok(a);
        }
        let value = self.check(a)?.map(|x| f.apply(x));
        Ok(self.push(value, Op::Act(a.0, f)))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let value = super::softmax_rows(self.check(a)?);
        Ok(self.push(value, Op::SoftmaxRows(a.0)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.check(a)?.transpose();
        Ok(self.push(value, Op::Transpose(a.0)))
    }

    /// Horizontal concatenation `[a | b]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.check(a)?, self.check(b)?);
        if x.rows() != y.rows() {
            return Err(Error::shape(format!("concat {:?} | {:?}", x.shape(), y.shape())));
        }
        let cols = x.cols() + y.cols();
        let mut data = Vec::with_capacity(x.rows() * cols);
        for r in 0..x.rows() {
            data.extend_from_slice(x.row(r));
            data.extend_from_slice(y.row(r));
        }
        let value = Matrix::from_raw(x.rows(), cols, data);
        Ok(self.push(value, Op::ConcatCols(a.0, b.0)))
    }

    /// Column-wise maximum over rows, a `1 × cols` result. Ties go to the
    /// lowest row.
    pub fn max_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.check(a)?;
        if x.rows() == 0 {
            return Err(Error::Empty("max over zero rows".into()));
        }
        let mut arg = vec![0usize; x.cols()];
        let mut best = x.row(0).to_vec();
        for r in 1..x.rows() {
            for (c, &v) in x.row(r).iter().enumerate() {
                if v > best[c] {
                    best[c] = v;
                    arg[c] = r;
                }
            }
        }
        let value = Matrix::from_raw(1, x.cols(), best);
        Ok(self.push(value, Op::MaxRows(a.0, arg)))
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.check(a)?;
        if x.rows() == 0 {
            return Err(Error::Empty("mean over zero rows".into()));
        }
        let value = x.column_means();
        Ok(self.push(value, Op::MeanRows(a.0)))
    }

    /// Row `idx` of `a` as a `1 × cols` matrix.
    pub fn row(&mut self, a: Var, idx: usize) -> Result<Var> {
        let x = self.check(a)?;
        if idx >= x.rows() {
            return Err(Error::shape(format!("row {idx} of {} rows", x.rows())));
        }
        let value = Matrix::from_raw(1, x.cols(), x.row(idx).to_vec());
        Ok(self.push(value, Op::Row(a.0, idx)))
    }

    /// Mean of all entries, as a `1 × 1` matrix.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.check(a)?;
        if x.is_empty() {
            return Err(Error::Empty("mean of empty matrix".into()));
        }
        let m = x.data().iter().sum::<f64>() / x.len() as f64;
        Ok(self.push(Matrix::from_raw(1, 1, vec![m]), Op::Mean(a.0)))
    }

    /// Constant sparse matrix times `h`.
    pub fn spmm(&mut self, adj: &Arc<SparseAdj>, h: Var) -> Result<Var> {
        let x = self.check(h)?;
        if x.rows() != adj.n() {
            return Err(Error::shape(format!("spmm n={} by {:?}", adj.n(), x.shape())));
        }
        let mut value = Matrix::zeros(adj.n(), x.cols());
        adj.spmm_into(x, &mut value);
        Ok(self.push(value, Op::SpMM(Arc::clone(adj), h.0)))
    }

    /// Per stored entry `k = (r, c)`: `dst[r] + src[c]`, as an `nnz × 1`
    /// column. `dst` and `src` are `n × 1`.
    pub fn edge_scores(&mut self, dst: Var, src: Var, adj: &Arc<SparseAdj>) -> Result<Var> {
        let (d, s) = (self.check(dst)?, self.check(src)?);
        if d.shape() != (adj.n(), 1) || s.shape() != (adj.n(), 1) {
            return Err(Error::shape(format!(
                "edge scores on n={} with {:?}, {:?}",
                adj.n(),
                d.shape(),
                s.shape()
            )));
        }
        let mut out = Vec::with_capacity(adj.nnz());
        for r in 0..adj.n() {
            for k in adj.row_range(r) {
                out.push(d.data()[r] + s.data()[adj.col(k)]);
            }
        }
        let value = Matrix::from_raw(adj.nnz(), 1, out);
        Ok(self.push(value, Op::EdgeScores { dst: dst.0, src: src.0, adj: Arc::clone(adj) }))
    }

    /// Softmax of an `nnz × 1` column within each row segment of `adj`.
    pub fn segment_softmax(&mut self, e: Var, adj: &Arc<SparseAdj>) -> Result<Var> {
        let x = self.check(e)?;
        if x.shape() != (adj.nnz(), 1) {
            return Err(Error::shape(format!("segment softmax {:?} on nnz={}", x.shape(), adj.nnz())));
        }
        let mut value = x.clone();
        for r in 0..adj.n() {
            let range = adj.row_range(r);
            if !range.is_empty() {
                softmax_in_place(&mut value.data_mut()[range]);
            }
        }
        Ok(self.push(value, Op::SegmentSoftmax(e.0, Arc::clone(adj))))
    }

    /// `out[r] = Σ_k alpha[k] · w[k] · h[col(k)]` over row `r` of `adj`.
    pub fn edge_aggregate(&mut self, alpha: Var, h: Var, adj: &Arc<SparseAdj>) -> Result<Var> {
        let (a, x) = (self.check(alpha)?, self.check(h)?);
        if a.shape() != (adj.nnz(), 1) || x.rows() != adj.n() {
            return Err(Error::shape(format!(
                "edge aggregate alpha {:?}, h {:?} on n={}",
                a.shape(),
                x.shape(),
                adj.n()
            )));
        }
        let d = x.cols();
        let mut value = Matrix::zeros(adj.n(), d);
        for r in 0..adj.n() {
            let orow = value.row_mut(r);
            for k in adj.row_range(r) {
                let c = a.data()[k] * adj.val(k);
                for (o, &v) in orow.iter_mut().zip(x.row(adj.col(k))) {
                    *o += c * v;
                }
            }
        }
        Ok(self.push(value, Op::EdgeAggregate { alpha: alpha.0, h: h.0, adj: Arc::clone(adj) }))
    }

    /// Mean binary cross-entropy of probabilities `pred` against `labels`,
    /// with probabilities clamped to `[1e-7, 1 - 1e-7]`.
    pub fn bce(&mut self, pred: Var, labels: &[f64]) -> Result<Var> {
        let loss = bce_loss(self.check(pred)?.data(), labels)?;
        Ok(self.push(Matrix::from_raw(1, 1, vec![loss]), Op::Bce(pred.0, labels.to_vec())))
    }

    /// Back-propagates from the scalar `loss` and adds parameter gradients
    /// into `store`. Calling this again without zeroing the store
    /// accumulates.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<()> {
        self.backward_impl(loss)?;
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Leaf(Some(id)), Some(g)) = (&node.op, &self.grads[i]) {
                store.get_mut(*id).grad.add_assign(g);
            }
        }
        Ok(())
    }

    /// Back-propagates without touching any parameter store; gradients are
    /// readable with [`Tape::grad`].
    pub fn backward_only(&mut self, loss: Var) -> Result<()> {
        self.backward_impl(loss)
    }

    fn backward_impl(&mut self, loss: Var) -> Result<()> {
        let lv = self.check(loss)?;
        if lv.shape() != (1, 1) {
            return Err(Error::shape(format!("loss must be scalar, got {:?}", lv.shape())));
        }
        lv.ensure_finite("loss")?;
        let n = self.nodes.len();
        let mut grads: Vec<Option<Matrix>> = vec![None; n];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            for p in node.op.parents() {
                if p >= i {
                    return Err(Error::Cycle(i));
                }
            }
            let nodes = &self.nodes;
            let mut acc = |j: usize, delta: Matrix| {
                match &mut grads[j] {
                    Some(existing) => existing.add_assign(&delta),
                    slot @ None => *slot = Some(delta),
                }
            };
            let val = |j: usize| &nodes[j].value;
            match &node.op {
                Op::Leaf(_) => {}
                Op::MatMul(a, b) => {
                    let mut ga = Matrix::zeros(val(*a).rows(), val(*a).cols());
                    matmul_nt_into(&g, val(*b), &mut ga);
                    let mut gb = Matrix::zeros(val(*b).rows(), val(*b).cols());
                    matmul_tn_into(val(*a), &g, &mut gb);
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.clone());
                }
                Op::AddRow(a, b) => {
                    let gb = g.column_means().scale(g.rows() as f64);
                    acc(*a, g.clone());
                    acc(*b, gb);
                }
                Op::Mul(a, b) => {
                    let ga = zip_map(&g, val(*b), |x, y| x * y);
                    let gb = zip_map(&g, val(*a), |x, y| x * y);
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::Scale(a, s) => acc(*a, g.scale(*s)),
                Op::Act(a, f) => {
                    let x = val(*a);
                    let y = &node.value;
                    let data = g
                        .data()
                        .iter()
                        .zip(x.data().iter().zip(y.data()))
                        .map(|(gv, (&xv, &yv))| gv * f.derivative(xv, yv))
                        .collect();
                    acc(*a, Matrix::from_raw(g.rows(), g.cols(), data));
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 = y.row(r).iter().zip(g.row(r)).map(|(p, q)| p * q).sum();
                        for c in 0..y.cols() {
                            ga.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                    acc(*a, ga);
                }
                Op::Transpose(a) => acc(*a, g.transpose()),
                Op::ConcatCols(a, b) => {
                    let ca = val(*a).cols();
                    let cb = val(*b).cols();
                    let mut ga = Matrix::zeros(g.rows(), ca);
                    let mut gb = Matrix::zeros(g.rows(), cb);
                    for r in 0..g.rows() {
                        ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                        gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                    }
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::MaxRows(a, arg) => {
                    let x = val(*a);
                    let mut ga = Matrix::zeros(x.rows(), x.cols());
                    for (c, &r) in arg.iter().enumerate() {
                        ga.set(r, c, g.data()[c]);
                    }
                    acc(*a, ga);
                }
                Op::MeanRows(a) => {
                    let x = val(*a);
                    let inv = 1.0 / x.rows() as f64;
                    let mut ga = Matrix::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        for (o, gv) in ga.row_mut(r).iter_mut().zip(g.data()) {
                            *o = gv * inv;
                        }
                    }
                    acc(*a, ga);
                }
                Op::Row(a, idx) => {
                    let x = val(*a);
                    let mut ga = Matrix::zeros(x.rows(), x.cols());
                    ga.row_mut(*idx).copy_from_slice(g.data());
                    acc(*a, ga);
                }
                Op::Mean(a) => {
                    let x = val(*a);
                    acc(*a, Matrix::filled(x.rows(), x.cols(), g.scalar() / x.len() as f64));
                }
                Op::SpMM(adj, h) => {
                    let mut gh = Matrix::zeros(val(*h).rows(), val(*h).cols());
                    adj.spmm_t_into(&g, &mut gh);
                    acc(*h, gh);
                }
                Op::EdgeScores { dst, src, adj } => {
                    let mut gd = Matrix::zeros(adj.n(), 1);
                    let mut gs = Matrix::zeros(adj.n(), 1);
                    for r in 0..adj.n() {
                        for k in adj.row_range(r) {
                            gd.data_mut()[r] += g.data()[k];
                            gs.data_mut()[adj.col(k)] += g.data()[k];
                        }
                    }
                    acc(*dst, gd);
                    acc(*src, gs);
                }
                Op::SegmentSoftmax(e, adj) => {
                    let y = &node.value;
                    let mut ge = Matrix::zeros(y.rows(), 1);
                    for r in 0..adj.n() {
                        let range = adj.row_range(r);
                        let dot: f64 = range.clone().map(|k| y.data()[k] * g.data()[k]).sum();
                        for k in range {
                            ge.data_mut()[k] = y.data()[k] * (g.data()[k] - dot);
                        }
                    }
                    acc(*e, ge);
                }
                Op::EdgeAggregate { alpha, h, adj } => {
                    let (a, x) = (val(*alpha), val(*h));
                    let mut galpha = Matrix::zeros(a.rows(), 1);
                    let mut gh = Matrix::zeros(x.rows(), x.cols());
                    for r in 0..adj.n() {
                        let grow = g.row(r);
                        for k in adj.row_range(r) {
                            let c = adj.col(k);
                            let w = adj.val(k);
                            let dot: f64 = grow.iter().zip(x.row(c)).map(|(p, q)| p * q).sum();
                            galpha.data_mut()[k] = w * dot;
                            let coef = a.data()[k] * w;
                            for (o, gv) in gh.row_mut(c).iter_mut().zip(grow) {
                                *o += coef * gv;
                            }
                        }
                    }
                    acc(*alpha, galpha);
                    acc(*h, gh);
                }
                Op::Bce(pred, labels) => {
                    let p = val(*pred);
                    let n = labels.len() as f64;
                    let scale = g.scalar() / n;
                    let data = p
                        .data()
                        .iter()
                        .zip(labels)
                        .map(|(&pv, &y)| {
                            if pv <= PROB_CLAMP || pv >= 1.0 - PROB_CLAMP {
                                0.0
                            } else {
                                scale * (-y / pv + (1.0 - y) / (1.0 - pv))
                            }
                        })
                        .collect();
                    acc(*pred, Matrix::from_raw(p.rows(), p.cols(), data));
                }
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_raw(a.rows(), a.cols(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ParamGroup;

    fn scalar_param(v: f64) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("p", ParamGroup::Mil, Matrix::filled(1, 1, v));
        (store, id)
    }

    #[test]
    fn identity_loss_has_unit_gradient() {
        let (mut store, id) = scalar_param(4.0);
        let mut tape = Tape::new();
        let p = tape.param(&store, id);
        tape.backward(p, &mut store).unwrap();
        assert_eq!(store.grad(id).scalar(), 1.0);
    }

    #[test]
    fn square_gradient_and_accumulation() {
        let (mut store, id) = scalar_param(3.0);
        for expected in [6.0, 12.0] {
            let mut tape = Tape::new();
            let p = tape.param(&store, id);
            let sq = tape.mul(p, p).unwrap();
            tape.backward(sq, &mut store).unwrap();
            assert_eq!(store.grad(id).scalar(), expected);
        }
    }

    #[test]
    fn activation_values() {
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert_eq!(Activation::LeakyRelu(0.2).apply(-1.0), -0.2);
        assert_eq!(Activation::Tanh.apply(0.0), 0.0);
        assert_eq!(Activation::Relu.apply(-3.0), 0.0);
        assert!((Activation::Elu.apply(-1.0) - (-1f64).exp_m1()).abs() < 1e-16);
    }

    #[test]
    fn bce_examples() {
        assert!((bce_loss(&[0.5], &[1.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((bce_loss(&[0.5, 0.5], &[0.0, 1.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        let perfect = bce_loss(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!(perfect > 0.0 && perfect < 2e-7);
        assert!(bce_loss(&[0.5], &[]).is_err());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let c = tape.constant(Matrix::zeros(2, 1));
        assert!(matches!(tape.backward_only(c), Err(Error::Shape(_))));
    }

    #[test]
    fn foreign_variable_rejected() {
        let mut other = Tape::new();
        let a = other.constant(Matrix::zeros(1, 1));
        let b = other.constant(Matrix::zeros(1, 1));
        let mut tape = Tape::new();
        let c = tape.constant(Matrix::zeros(1, 1));
        assert!(tape.add(c, b).is_err());
        let _ = a;
    }

    #[test]
    fn unreached_params_keep_zero_grad() {
        let mut store = ParamStore::new();
        let used = store.add("a", ParamGroup::Mil, Matrix::filled(1, 1, 2.0));
        let unused = store.add("b", ParamGroup::Mil, Matrix::filled(1, 1, 5.0));
        let mut tape = Tape::new();
        let a = tape.param(&store, used);
        let _b = tape.param(&store, unused);
        let loss = tape.scale(a, 3.0).unwrap();
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(used).scalar(), 3.0);
        assert_eq!(store.grad(unused).scalar(), 0.0);
    }
}
