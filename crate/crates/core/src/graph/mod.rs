//! Graph views of a slide: patch graphs, region adjacency graphs (per-slide
//! or dataset-level clustering) and centroid graphs.

mod build;
mod dump;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

pub use build::{
    build_bag, build_centroid_graph, build_graph, build_patch_graph, build_region_graph_global,
    build_region_graph_local, fit_global_regions, region_graph_from_labels, GlobalRegions,
    GraphOptions, DEFAULT_CENTROIDS, DEFAULT_CHUNK, DEFAULT_REGIONS,
};
pub use dump::{read_edge_list, EdgeList, read_feature_sidecar, write_edge_list, write_feature_sidecar, FEATURE_MAGIC};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// How a slide is turned into a graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GraphKind {
    /// Patches as isolated nodes (plain MIL).
    Bag,
    Patch,
    RegionLocal,
    RegionGlobal,
    Centroid,
}

impl GraphKind {
    pub const ALL: [GraphKind; 5] =
        [GraphKind::Bag, GraphKind::Patch, GraphKind::RegionLocal, GraphKind::RegionGlobal, GraphKind::Centroid];

    pub fn as_str(self) -> &'static str {
        match self {
            GraphKind::Bag => "bag",
            GraphKind::Patch => "patch",
            GraphKind::RegionLocal => "region-local",
            GraphKind::RegionGlobal => "region-global",
            GraphKind::Centroid => "centroid",
        }
    }
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GraphKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GraphKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown graph kind {s:?}")))
    }
}

/// Node features, undirected edges and the node-to-patch mapping of one slide.
///
/// Edges are stored once as `(i, j)` with `i < j`, sorted; self-loops are
/// never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct WsiGraph {
    pub slide_id: String,
    node_features: Matrix,
    edges: Vec<(usize, usize)>,
    edge_weights: Option<Vec<f64>>,
    node_to_patches: Vec<Vec<usize>>,
}

impl WsiGraph {
    pub fn new(
        slide_id: impl Into<String>,
        node_features: Matrix,
        edges: Vec<(usize, usize)>,
        edge_weights: Option<Vec<f64>>,
        node_to_patches: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let n = node_features.rows();
        if n == 0 {
            return Err(Error::Empty("graph without nodes".into()));
        }
        if node_to_patches.len() != n {
            return Err(Error::Malformed(format!(
                "{} node-to-patch lists for {n} nodes",
                node_to_patches.len()
            )));
        }
        if let Some(w) = &edge_weights {
            if w.len() != edges.len() {
                return Err(Error::Malformed(format!("{} weights for {} edges", w.len(), edges.len())));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("edge weight".into()));
            }
        }
        let mut tagged: Vec<((usize, usize), f64)> = Vec::with_capacity(edges.len());
        let mut seen = HashSet::with_capacity(edges.len());
        for (k, &(a, b)) in edges.iter().enumerate() {
            if a >= n || b >= n {
                return Err(Error::Malformed(format!("edge ({a}, {b}) out of range for {n} nodes")));
            }
            if a == b {
                return Err(Error::Malformed(format!("self-loop on node {a}")));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::Malformed(format!("duplicate edge ({}, {})", e.0, e.1)));
            }
            tagged.push((e, edge_weights.as_ref().map_or(0.0, |w| w[k])));
        }
        tagged.sort_by_key(|t| t.0);
        let total: usize = node_to_patches.iter().map(Vec::len).sum();
        let mut hit = vec![false; total];
        for members in &node_to_patches {
            if members.is_empty() {
                return Err(Error::Malformed("node without patches".into()));
            }
            for &p in members {
                if p >= total || std::mem::replace(&mut hit[p], true) {
                    return Err(Error::Malformed("node_to_patches is not a partition".into()));
                }
            }
        }
        let edge_weights = edge_weights.map(|_| tagged.iter().map(|t| t.1).collect());
        Ok(Self {
            slide_id: slide_id.into(),
            node_features,
            edges: tagged.into_iter().map(|t| t.0).collect(),
            edge_weights,
            node_to_patches,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_features.rows()
    }

    pub fn n_patches(&self) -> usize {
        self.node_to_patches.iter().map(Vec::len).sum()
    }

    pub fn feature_dim(&self) -> usize {
        self.node_features.cols()
    }

    pub fn node_features(&self) -> &Matrix {
        &self.node_features
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_weights(&self) -> Option<&[f64]> {
        self.edge_weights.as_deref()
    }

    pub fn node_to_patches(&self) -> &[Vec<usize>] {
        &self.node_to_patches
    }

    /// Weight of edge `k` (1 for unweighted graphs).
    pub fn weight(&self, k: usize) -> f64 {
        self.edge_weights.as_ref().map_or(1.0, |w| w[k])
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n_nodes()];
        for &(a, b) in &self.edges {
            d[a] += 1;
            d[b] += 1;
        }
        d
    }

    /// Relabels nodes so that new node `i` is old node `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let n = self.n_nodes();
        let mut inverse = vec![usize::MAX; n];
        for (new, &old) in order.iter().enumerate() {
            if old >= n || inverse[old] != usize::MAX {
                return Err(Error::invalid("node order is not a permutation"));
            }
            inverse[old] = new;
        }
        if order.len() != n {
            return Err(Error::invalid("node order is not a permutation"));
        }
        let edges = self.edges.iter().map(|&(a, b)| (inverse[a], inverse[b])).collect();
        Self::new(
            self.slide_id.clone(),
            self.node_features.select_rows(order),
            edges,
            self.edge_weights.clone(),
            order.iter().map(|&o| self.node_to_patches[o].clone()).collect(),
        )
    }
}
