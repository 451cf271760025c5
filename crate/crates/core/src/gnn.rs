//! Graph convolution and graph attention layers and an `L`-layer stack.
//!
//! Message passing runs over sparse adjacency (row = receiving node,
//! column = sending node) with self-loops included.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::WsiGraph;
use crate::numerics::{glorot_uniform, Activation, Matrix, ParamGroup, ParamId, ParamStore, SparseAdj, Tape, Var};
use crate::rng::SeededRng;

pub const GAT_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GnnKind {
    Gcn,
    Gat,
}

impl GnnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GnnKind::Gcn => "gcn",
            GnnKind::Gat => "gat",
        }
    }
}

impl fmt::Display for GnnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GnnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(GnnKind::Gcn),
            "gat" => Ok(GnnKind::Gat),
            other => Err(Error::Config(format!("unknown gnn kind {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Readout {
    Max,
    Mean,
    None,
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` as a dense matrix; edge weights fill `A`.
pub fn normalize_adjacency(graph: &WsiGraph) -> Matrix {
    let n = graph.n_nodes();
    let mut a = Matrix::identity(n);
    for (k, &(i, j)) in graph.edges().iter().enumerate() {
        let w = graph.weight(k);
        a.set(i, j, w);
        a.set(j, i, w);
    }
    let deg: Vec<f64> = a.iter_rows().map(|r| r.iter().sum::<f64>()).collect();
    for i in 0..n {
        for j in 0..n {
            let v = a.get(i, j);
            a.set(i, j, v / (deg[i] * deg[j]).sqrt());
        }
    }
    a
}

/// Sparse form of [`normalize_adjacency`], entry for entry identical.
pub fn normalize_adjacency_sparse(graph: &WsiGraph) -> SparseAdj {
    let raw = self_looped(graph);
    let deg: Vec<f64> = (0..raw.n())
        .map(|r| raw.row_range(r).map(|k| raw.val(k)).sum::<f64>())
        .collect();
    let triplets = (0..raw.n())
        .flat_map(|r| raw.row_range(r).map(move |k| (r, k)))
        .map(|(r, k)| {
            let c = raw.col(k);
            (r, c, raw.val(k) / (deg[r] * deg[c]).sqrt())
        })
        .collect();
    SparseAdj::from_triplets(raw.n(), triplets)
}

/// `A + I` in both directions, with edge weights as entries.
fn self_looped(graph: &WsiGraph) -> SparseAdj {
    let n = graph.n_nodes();
    let mut triplets = Vec::with_capacity(n + 2 * graph.edges().len());
    triplets.extend((0..n).map(|i| (i, i, 1.0)));
    for (k, &(i, j)) in graph.edges().iter().enumerate() {
        let w = graph.weight(k);
        triplets.push((i, j, w));
        triplets.push((j, i, w));
    }
    SparseAdj::from_triplets(n, triplets)
}

/// Per-graph message-passing structures, built once and reused across
/// epochs.
#[derive(Clone, Debug)]
pub struct PreparedGraph {
    pub features: Matrix,
    /// Symmetric-normalized adjacency for GCN layers.
    pub gcn_adj: Arc<SparseAdj>,
    /// Self-looped adjacency for GAT layers; entries are edge weights.
    pub gat_adj: Arc<SparseAdj>,
    pub node_to_patches: Vec<Vec<usize>>,
}

impl PreparedGraph {
    pub fn new(graph: &WsiGraph) -> Self {
        Self {
            features: graph.node_features().clone(),
            gcn_adj: Arc::new(normalize_adjacency_sparse(graph)),
            gat_adj: Arc::new(self_looped(graph)),
            node_to_patches: graph.node_to_patches().to_vec(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.features.rows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnLayer {
    pub w: ParamId,
    pub activation: Activation,
}

impl GcnLayer {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, act: Activation, rng: &mut SeededRng) -> Self {
        let w = store.add(format!("{name}.w"), ParamGroup::Gnn, glorot_uniform(d_in, d_out, rng));
        Self { w, activation: act }
    }

    /// `act(Â H W)`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, h: Var, adj: &Arc<SparseAdj>) -> Result<Var> {
        let w = tape.param(store, self.w);
        let hw = tape.matmul(h, w)?;
        let agg = tape.spmm(adj, hw)?;
        tape.activation(agg, self.activation)
    }
}

/// Single-head graph attention; the attention vector is kept as its two
/// halves, one applied to the receiving node and one to the sender.
#[derive(Clone, Debug, PartialEq)]
pub struct GatLayer {
    pub w: ParamId,
    pub a_dst: ParamId,
    pub a_src: ParamId,
    pub activation: Activation,
}

impl GatLayer {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, act: Activation, rng: &mut SeededRng) -> Self {
        let w = store.add(format!("{name}.w"), ParamGroup::Gnn, glorot_uniform(d_in, d_out, rng));
        let a = glorot_uniform(2 * d_out, 1, rng);
        let (dst, src) = a.data().split_at(d_out);
        let a_dst = store.add(format!("{name}.a_dst"), ParamGroup::Gnn, Matrix::column_vector(dst).expect("finite"));
        let a_src = store.add(format!("{name}.a_src"), ParamGroup::Gnn, Matrix::column_vector(src).expect("finite"));
        Self { w, a_dst, a_src, activation: act }
    }

    /// Projected features `W h` and attention coefficients, one per stored
    /// adjacency entry.
    pub fn attention(&self, tape: &mut Tape, store: &ParamStore, h: Var, adj: &Arc<SparseAdj>) -> Result<(Var, Var)> {
        let w = tape.param(store, self.w);
        let z = tape.matmul(h, w)?;
        let a_dst = tape.param(store, self.a_dst);
        let a_src = tape.param(store, self.a_src);
        let sd = tape.matmul(z, a_dst)?;
        let ss = tape.matmul(z, a_src)?;
        let e = tape.edge_scores(sd, ss, adj)?;
        let e = tape.activation(e, Activation::LeakyRelu(GAT_SLOPE))?;
        Ok((z, tape.segment_softmax(e, adj)?))
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, h: Var, adj: &Arc<SparseAdj>) -> Result<Var> {
        let (z, alpha) = self.attention(tape, store, h, adj)?;
        let agg = tape.edge_aggregate(alpha, z, adj)?;
        tape.activation(agg, self.activation)
    }

    /// Dense `N × N` attention matrix (`α[v][u]`) without recording
    /// gradients.
    pub fn attention_matrix(&self, store: &ParamStore, h: &Matrix, adj: &Arc<SparseAdj>) -> Result<Matrix> {
        let mut tape = Tape::new();
        let hv = tape.constant(h.clone());
        let (_, alpha) = self.attention(&mut tape, store, hv, adj)?;
        let values = tape.value(alpha);
        let mut out = Matrix::zeros(adj.n(), adj.n());
        for r in 0..adj.n() {
            for k in adj.row_range(r) {
                out.set(r, adj.col(k), values.data()[k]);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GnnLayer {
    Gcn(GcnLayer),
    Gat(GatLayer),
}

/// `L` message-passing layers of one kind, then an optional readout.
///
/// GCN layers all use ReLU. GAT hidden layers use ELU and the last layer a
/// sigmoid.
#[derive(Clone, Debug, PartialEq)]
pub struct GnnStack {
    pub kind: GnnKind,
    pub layers: Vec<GnnLayer>,
    pub readout: Readout,
    pub in_dim: usize,
    pub hidden: usize,
}

impl GnnStack {
    pub fn new(
        store: &mut ParamStore,
        kind: GnnKind,
        in_dim: usize,
        hidden: usize,
        n_layers: usize,
        readout: Readout,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if n_layers == 0 || in_dim == 0 || hidden == 0 {
            return Err(Error::Config("gnn needs at least one layer and positive widths".into()));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let d_in = if l == 0 { in_dim } else { hidden };
            let last = l + 1 == n_layers;
            let name = format!("gnn.{l}");
            layers.push(match kind {
                GnnKind::Gcn => GnnLayer::Gcn(GcnLayer::new(store, &name, d_in, hidden, Activation::Relu, rng)),
                GnnKind::Gat => {
                    let act = if last { Activation::Sigmoid } else { Activation::Elu };
                    GnnLayer::Gat(GatLayer::new(store, &name, d_in, hidden, act, rng))
                }
            });
        }
        Ok(Self { kind, layers, readout, in_dim, hidden })
    }

    /// Node features after all layers (`N × D`), or the `1 × D` readout.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, graph: &PreparedGraph, x: Var) -> Result<Var> {
        if tape.value(x).cols() != self.in_dim {
            return Err(Error::shape(format!(
                "graph features have width {}, gnn expects {}",
                tape.value(x).cols(),
                self.in_dim
            )));
        }
        let mut h = x;
        for layer in &self.layers {
            h = match layer {
                GnnLayer::Gcn(l) => l.forward(tape, store, h, &graph.gcn_adj)?,
                GnnLayer::Gat(l) => l.forward(tape, store, h, &graph.gat_adj)?,
            };
        }
        match self.readout {
            Readout::Max => tape.max_rows(h),
            Readout::Mean => tape.mean_rows(h),
            Readout::None => Ok(h),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::check_gradients;
    use crate::rng;

    fn graph(n: usize, edges: Vec<(usize, usize)>, weights: Option<Vec<f64>>, feats: Matrix) -> WsiGraph {
        assert_eq!(feats.rows(), n);
        WsiGraph::new("g", feats, edges, weights, (0..n).map(|i| vec![i]).collect()).unwrap()
    }

    #[test]
    fn two_node_normalization() {
        let g = graph(2, vec![(0, 1)], None, Matrix::zeros(2, 1));
        let a = normalize_adjacency(&g);
        assert_eq!(a.data(), &[0.5, 0.5, 0.5, 0.5]);
        let iso = graph(1, vec![], None, Matrix::zeros(1, 1));
        assert_eq!(normalize_adjacency(&iso).data(), &[1.0]);
    }

    #[test]
    fn sparse_normalization_matches_dense_exactly() {
        let g = graph(4, vec![(0, 1), (1, 2), (0, 3)], Some(vec![0.5, 2.0, 1.0]), Matrix::zeros(4, 1));
        assert_eq!(normalize_adjacency_sparse(&g).to_dense(), normalize_adjacency(&g));
    }

    #[test]
    fn regular_graph_rows_sum_to_one() {
        let g = graph(4, vec![(0, 1), (1, 2), (2, 3), (0, 3)], None, Matrix::zeros(4, 1));
        for r in normalize_adjacency(&g).iter_rows() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gcn_hand_example() {
        let g = graph(2, vec![(0, 1)], None, Matrix::from_rows(&[[1.0], [3.0]]).unwrap());
        let p = PreparedGraph::new(&g);
        let mut store = ParamStore::new();
        let w = store.add("w", ParamGroup::Gnn, Matrix::identity(1));
        let layer = GcnLayer { w, activation: Activation::Identity };
        let mut tape = Tape::new();
        let x = tape.constant(p.features.clone());
        let out = layer.forward(&mut tape, &store, x, &p.gcn_adj).unwrap();
        assert_eq!(tape.value(out).data(), &[2.0, 2.0]);
    }

    fn hand_gat() -> (ParamStore, GatLayer) {
        let mut store = ParamStore::new();
        let w = store.add("w", ParamGroup::Gnn, Matrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]).unwrap());
        let a_dst = store.add("ad", ParamGroup::Gnn, Matrix::column_vector(&[0.5, -1.0]).unwrap());
        let a_src = store.add("as", ParamGroup::Gnn, Matrix::column_vector(&[1.0, 0.25]).unwrap());
        (store, GatLayer { w, a_dst, a_src, activation: Activation::Identity })
    }

    #[test]
    fn gat_two_node_hand_example() {
        let feats = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let g = graph(2, vec![(0, 1)], None, feats.clone());
        let p = PreparedGraph::new(&g);
        let (store, layer) = hand_gat();
        // z0 = [1, 0], z1 = [0, 2]
        let lrelu = |x: f64| if x > 0.0 { x } else { 0.2 * x };
        let sd = [0.5, -2.0];
        let ss = [1.0, 0.5];
        let e00 = lrelu(sd[0] + ss[0]);
        let e01 = lrelu(sd[0] + ss[1]);
        let a00 = e00.exp() / (e00.exp() + e01.exp());
        let att = layer.attention_matrix(&store, &feats, &p.gat_adj).unwrap();
        assert!((att.get(0, 0) - a00).abs() < 1e-12);
        assert!((att.get(0, 1) - (1.0 - a00)).abs() < 1e-12);

        let mut tape = Tape::new();
        let x = tape.constant(feats);
        let out = layer.forward(&mut tape, &store, x, &p.gat_adj).unwrap();
        let o = tape.value(out);
        assert!((o.get(0, 0) - a00).abs() < 1e-12);
        assert!((o.get(0, 1) - 2.0 * (1.0 - a00)).abs() < 1e-12);
    }

    #[test]
    fn gat_isolated_and_uniform() {
        let (store, layer) = hand_gat();
        let iso = graph(1, vec![], None, Matrix::from_rows(&[[0.3, -0.7]]).unwrap());
        let p = PreparedGraph::new(&iso);
        assert_eq!(layer.attention_matrix(&store, &p.features, &p.gat_adj).unwrap().data(), &[1.0]);

        let same = graph(3, vec![(0, 1), (1, 2)], None, Matrix::filled(3, 2, 0.4));
        let p = PreparedGraph::new(&same);
        let att = layer.attention_matrix(&store, &p.features, &p.gat_adj).unwrap();
        assert!((att.get(1, 0) - 1.0 / 3.0).abs() < 1e-12);
        assert!((att.get(0, 1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn stack_shapes_and_single_node_readout() {
        let mut store = ParamStore::new();
        let mut r = rng::seeded(1);
        let stack = GnnStack::new(&mut store, GnnKind::Gat, 3, 4, 3, Readout::Max, &mut r).unwrap();
        let g = graph(1, vec![], None, Matrix::from_rows(&[[0.1, 0.2, 0.3]]).unwrap());
        let p = PreparedGraph::new(&g);
        let mut tape = Tape::new();
        let x = tape.constant(p.features.clone());
        let out = stack.forward(&mut tape, &store, &p, x).unwrap();
        assert_eq!(tape.value(out).shape(), (1, 4));

        let none = GnnStack { readout: Readout::None, ..stack.clone() };
        let g3 = graph(3, vec![(0, 1)], None, Matrix::filled(3, 3, 1.0));
        let p3 = PreparedGraph::new(&g3);
        let mut tape = Tape::new();
        let x = tape.constant(p3.features.clone());
        let h = none.forward(&mut tape, &store, &p3, x).unwrap();
        assert_eq!(tape.value(h).shape(), (3, 4));
        let bad = tape.constant(Matrix::zeros(3, 2));
        assert!(none.forward(&mut tape, &store, &p3, bad).is_err());
    }

    #[test]
    fn stack_gradients() {
        for kind in [GnnKind::Gcn, GnnKind::Gat] {
            let mut store = ParamStore::new();
            let mut r = rng::seeded(5);
            let stack = GnnStack::new(&mut store, kind, 3, 3, 2, Readout::Mean, &mut r).unwrap();
            let feats = glorot_uniform(4, 3, &mut r);
            let g = graph(4, vec![(0, 1), (1, 2), (2, 3)], Some(vec![0.5, 1.0, 1.5]), feats);
            let p = PreparedGraph::new(&g);
            let report = check_gradients(&mut store, 1e-5, |t, s| {
                let x = t.constant(p.features.clone());
                let out = stack.forward(t, s, &p, x)?;
                t.mean(out)
            })
            .unwrap();
            assert!(report.max_rel_error < 1e-4, "{kind}: {report:?}");
        }
    }
}
