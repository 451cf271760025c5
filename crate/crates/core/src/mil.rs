//! Multiple-instance pooling: attention-based (ABMIL) and dual-stream
//! (DSMIL) aggregation of instance features into a bag prediction.

use crate::error::{Error, Result};
use crate::numerics::{glorot_uniform, Activation, Matrix, ParamGroup, ParamId, ParamStore, Tape, Var};
use crate::rng::SeededRng;

/// Affine map to a single logit: `x w + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearHead {
    pub w: ParamId,
    pub b: ParamId,
}

impl LinearHead {
    pub fn new(store: &mut ParamStore, name: &str, group: ParamGroup, d_in: usize, rng: &mut SeededRng) -> Self {
        let w = store.add(format!("{name}.w"), group, glorot_uniform(d_in, 1, rng));
        let b = store.add(format!("{name}.b"), group, Matrix::zeros(1, 1));
        Self { w, b }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let xw = tape.matmul(x, w)?;
        tape.add_row(xw, b)
    }
}

/// Fully connected layer `act(x W + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub activation: Activation,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        group: ParamGroup,
        d_in: usize,
        d_out: usize,
        activation: Activation,
        rng: &mut SeededRng,
    ) -> Self {
        let w = store.add(format!("{name}.w"), group, glorot_uniform(d_in, d_out, rng));
        let b = store.add(format!("{name}.b"), group, Matrix::zeros(1, d_out));
        Self { w, b, activation }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let xw = tape.matmul(x, w)?;
        let z = tape.add_row(xw, b)?;
        tape.activation(z, self.activation)
    }
}

/// Result of pooling one bag.
#[derive(Clone, Copy, Debug)]
pub struct BagOutput {
    /// `1 × d_B` bag embedding.
    pub embedding: Var,
    /// `1 × 1` logit before the sigmoid.
    pub logit: Var,
    /// `1 × 1` probability.
    pub prob: Var,
    /// `1 × N` per-instance attention.
    pub attention: Var,
    /// DSMIL: index of the highest-scoring instance.
    pub critical: Option<usize>,
    /// DSMIL: `N × 1` instance scores.
    pub instance_scores: Option<Var>,
}

fn check_bag(tape: &Tape, h: Var, d: usize) -> Result<()> {
    let (n, cols) = tape.value(h).shape();
    if n == 0 {
        return Err(Error::Empty("bag without instances".into()));
    }
    if cols != d {
        return Err(Error::shape(format!("instances have width {cols}, pooling expects {d}")));
    }
    Ok(())
}

/// Non-gated attention pooling:
/// `a = softmax_k(wᵀ tanh(V h_k))`, `B = Σ a_k h_k`, `ŷ = sigmoid(g(B))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Abmil {
    pub v: ParamId,
    pub w: ParamId,
    pub head: LinearHead,
    pub dim: usize,
}

impl Abmil {
    pub fn new(store: &mut ParamStore, dim: usize, att_dim: usize, rng: &mut SeededRng) -> Self {
        let v = store.add("abmil.v", ParamGroup::Mil, glorot_uniform(dim, att_dim, rng));
        let w = store.add("abmil.w", ParamGroup::Mil, glorot_uniform(att_dim, 1, rng));
        let head = LinearHead::new(store, "abmil.head", ParamGroup::Mil, dim, rng);
        Self { v, w, head, dim }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, h: Var) -> Result<BagOutput> {
        check_bag(tape, h, self.dim)?;
        let v = tape.param(store, self.v);
        let w = tape.param(store, self.w);
        let hv = tape.matmul(h, v)?;
        let t = tape.activation(hv, Activation::Tanh)?;
        let scores = tape.matmul(t, w)?;
        let scores = tape.transpose(scores)?;
        let attention = tape.softmax_rows(scores)?;
        let embedding = tape.matmul(attention, h)?;
        let logit = self.head.forward(tape, store, embedding)?;
        let prob = tape.activation(logit, Activation::Sigmoid)?;
        Ok(BagOutput { embedding, logit, prob, attention, critical: None, instance_scores: None })
    }
}

/// Dual-stream pooling. Stream one scores instances and picks the critical
/// instance `m`; stream two attends from `q_m` over all queries and pools
/// the values. The two logits are averaged.
#[derive(Clone, Debug, PartialEq)]
pub struct Dsmil {
    pub w_ic: ParamId,
    pub w_q: ParamId,
    pub w_v: ParamId,
    pub head: LinearHead,
    pub dim: usize,
    pub value_dim: usize,
}

impl Dsmil {
    pub fn new(store: &mut ParamStore, dim: usize, query_dim: usize, value_dim: usize, rng: &mut SeededRng) -> Self {
        let w_ic = store.add("dsmil.w_ic", ParamGroup::Mil, glorot_uniform(dim, 1, rng));
        let w_q = store.add("dsmil.w_q", ParamGroup::Mil, glorot_uniform(dim, query_dim, rng));
        let w_v = store.add("dsmil.w_v", ParamGroup::Mil, glorot_uniform(dim, value_dim, rng));
        let head = LinearHead::new(store, "dsmil.head", ParamGroup::Mil, value_dim, rng);
        Self { w_ic, w_q, w_v, head, dim, value_dim }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, h: Var) -> Result<BagOutput> {
        check_bag(tape, h, self.dim)?;
        let w_ic = tape.param(store, self.w_ic);
        let scores = tape.matmul(h, w_ic)?;
        let m = argmax_first(tape.value(scores).data());
        let s_m = tape.row(scores, m)?;

        let w_q = tape.param(store, self.w_q);
        let w_v = tape.param(store, self.w_v);
        let q = tape.matmul(h, w_q)?;
        let q_m = tape.row(q, m)?;
        let qt = tape.transpose(q)?;
        let logits = tape.matmul(q_m, qt)?;
        let attention = tape.softmax_rows(logits)?;
        let values = tape.matmul(h, w_v)?;
        let embedding = tape.matmul(attention, values)?;
        let bag_logit = self.head.forward(tape, store, embedding)?;
        let sum = tape.add(s_m, bag_logit)?;
        let logit = tape.scale(sum, 0.5)?;
        let prob = tape.activation(logit, Activation::Sigmoid)?;
        Ok(BagOutput { embedding, logit, prob, attention, critical: Some(m), instance_scores: Some(scores) })
    }
}

/// Index of the largest value, ties to the lowest index.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
