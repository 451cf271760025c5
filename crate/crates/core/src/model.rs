//! Complete bag classifiers (graph construction choice, optional GNN,
//! pooling) and their binary checkpoints.
//!
//! Model keys:
//!
//! * `abmil`, `dsmil`, `max`, `mean`: plain MIL on the patch bag, with a
//!   dense ReLU instance encoder in front of the pooling.
//! * `<graph>-<gnn>-<pool>`: `graph` is one of `patch`, `region-local`,
//!   `region-global`, `centroid`; `gnn` is `gcn` or `gat`; `pool` is
//!   `abmil`, `dsmil`, `max` or `mean` (the last two are graph readouts).

use std::fmt;
use std::fs;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::clustering::{Connectivity, MiniBatchKMeans};
use crate::data::{check_magic, read_array};
use crate::error::{Error, Result};
use crate::gnn::{GnnKind, GnnStack, PreparedGraph, Readout};
use crate::graph::{GlobalRegions, GraphKind, GraphOptions, DEFAULT_CENTROIDS, DEFAULT_CHUNK, DEFAULT_REGIONS};
use crate::mil::{Abmil, Dense, Dsmil, LinearHead};
use crate::numerics::{Activation, Matrix, ParamGroup, ParamStore, Tape, Var};
use crate::rng::{self, stream};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GMIP";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Aggregator {
    Abmil,
    Dsmil,
    Max,
    Mean,
}

impl Aggregator {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregator::Abmil => "abmil",
            Aggregator::Dsmil => "dsmil",
            Aggregator::Max => "max",
            Aggregator::Mean => "mean",
        }
    }

    pub fn has_attention(self) -> bool {
        matches!(self, Aggregator::Abmil | Aggregator::Dsmil)
    }
}

impl FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abmil" => Ok(Aggregator::Abmil),
            "dsmil" => Ok(Aggregator::Dsmil),
            "max" => Ok(Aggregator::Max),
            "mean" => Ok(Aggregator::Mean),
            other => Err(Error::Config(format!("unknown aggregator {other:?}"))),
        }
    }
}

/// Graph kind, GNN and pooling, as named by a model key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModelKind {
    pub graph: GraphKind,
    pub gnn: Option<GnnKind>,
    pub aggregator: Aggregator,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.gnn {
            None => f.write_str(self.aggregator.as_str()),
            Some(g) => write!(f, "{}-{}-{}", self.graph, g, self.aggregator.as_str()),
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Ok(aggregator) = s.parse::<Aggregator>() {
            return Ok(ModelKind { graph: GraphKind::Bag, gnn: None, aggregator });
        }
        let bad = || Error::Config(format!("unknown model {s:?}"));
        let (rest, agg) = s.rsplit_once('-').ok_or_else(bad)?;
        let (graph, gnn) = rest.rsplit_once('-').ok_or_else(bad)?;
        let graph: GraphKind = graph.parse().map_err(|_| bad())?;
        if graph == GraphKind::Bag {
            return Err(bad());
        }
        Ok(ModelKind { graph, gnn: Some(gnn.parse().map_err(|_| bad())?), aggregator: agg.parse().map_err(|_| bad())? })
    }
}

/// Everything needed to rebuild a model's architecture.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub in_dim: usize,
    /// Hidden width `D`.
    pub hidden: usize,
    /// GNN depth `L`.
    pub layers: usize,
    /// Attention (ABMIL) and query (DSMIL) width.
    pub att_dim: usize,
    pub patch_connectivity: Connectivity,
    pub k_regions: usize,
    pub k_centroids: usize,
    pub chunk: usize,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, in_dim: usize) -> Self {
        Self {
            kind,
            in_dim,
            hidden: 256,
            layers: 3,
            att_dim: 128,
            patch_connectivity: Connectivity::Eight,
            k_regions: DEFAULT_REGIONS,
            k_centroids: DEFAULT_CENTROIDS,
            chunk: DEFAULT_CHUNK,
        }
    }

    pub fn graph_options(&self, seed: u64) -> GraphOptions {
        GraphOptions {
            kind: self.kind.graph,
            patch_connectivity: self.patch_connectivity,
            k_regions: self.k_regions,
            k_centroids: self.k_centroids,
            chunk: self.chunk,
            seed,
        }
    }

    /// Width of the bag embedding.
    pub fn embedding_dim(&self) -> usize {
        self.hidden
    }

    pub fn encode(&self) -> String {
        let conn = match self.patch_connectivity {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        };
        format!(
            "model={};in_dim={};hidden={};layers={};att_dim={};connectivity={conn};k_regions={};k_centroids={};chunk={}",
            self.kind, self.in_dim, self.hidden, self.layers, self.att_dim, self.k_regions, self.k_centroids, self.chunk
        )
    }

    pub fn decode(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut nums = std::collections::BTreeMap::new();
        for part in text.split(';') {
            let (k, v) = part.split_once('=').ok_or_else(|| Error::Malformed(format!("bad spec field {part:?}")))?;
            if k == "model" {
                kind = Some(v.parse::<ModelKind>().map_err(|e| Error::Malformed(e.to_string()))?);
            } else {
                let n: usize = v.parse().map_err(|_| Error::Malformed(format!("bad spec value {part:?}")))?;
                nums.insert(k.to_string(), n);
            }
        }
        let get = |k: &str| nums.get(k).copied().ok_or_else(|| Error::Malformed(format!("spec lacks {k}")));
        let kind = kind.ok_or_else(|| Error::Malformed("spec lacks model".into()))?;
        let patch_connectivity = Connectivity::from_number(get("connectivity")? as u32)
            .ok_or_else(|| Error::Malformed("connectivity must be 4 or 8".into()))?;
        Ok(Self {
            kind,
            in_dim: get("in_dim")?,
            hidden: get("hidden")?,
            layers: get("layers")?,
            att_dim: get("att_dim")?,
            patch_connectivity,
            k_regions: get("k_regions")?,
            k_centroids: get("k_centroids")?,
            chunk: get("chunk")?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Pool {
    Abmil(Abmil),
    Dsmil(Dsmil),
    Readout(LinearHead),
}

/// Forward-pass handles for one bag.
#[derive(Clone, Copy, Debug)]
pub struct ModelOutput {
    pub prob: Var,
    pub embedding: Var,
    /// `1 × N` node attention, when the pooling has one.
    pub attention: Option<Var>,
    pub critical: Option<usize>,
}

/// Plain values from an inference pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub prob: f64,
    pub embedding: Vec<f64>,
    pub attention: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub store: ParamStore,
    encoder: Option<Dense>,
    gnn: Option<GnnStack>,
    pool: Pool,
    /// Fitted dataset-level clustering for region-global graphs.
    pub regions: Option<GlobalRegions>,
}

impl Model {
    /// Fresh model with Glorot-initialised weights drawn from `seed`.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        if spec.in_dim == 0 || spec.hidden == 0 || spec.att_dim == 0 || spec.layers == 0 {
            return Err(Error::Config("model widths and depth must be positive".into()));
        }
        let mut r = rng::seeded(rng::derive(seed, stream::INIT));
        let mut store = ParamStore::new();
        let d = spec.hidden;
        let encoder = match spec.kind.gnn {
            None => Some(Dense::new(&mut store, "encoder", ParamGroup::Mil, spec.in_dim, d, Activation::Relu, &mut r)),
            Some(_) => None,
        };
        let readout = match spec.kind.aggregator {
            Aggregator::Max => Readout::Max,
            Aggregator::Mean => Readout::Mean,
            _ => Readout::None,
        };
        let gnn = match spec.kind.gnn {
            Some(kind) => Some(GnnStack::new(&mut store, kind, spec.in_dim, d, spec.layers, readout, &mut r)?),
            None => None,
        };
        let pool = match spec.kind.aggregator {
            Aggregator::Abmil => Pool::Abmil(Abmil::new(&mut store, d, spec.att_dim, &mut r)),
            Aggregator::Dsmil => Pool::Dsmil(Dsmil::new(&mut store, d, spec.att_dim, d, &mut r)),
            Aggregator::Max | Aggregator::Mean => {
                Pool::Readout(LinearHead::new(&mut store, "head", ParamGroup::Mil, d, &mut r))
            }
        };
        Ok(Self { spec, store, encoder, gnn, pool, regions: None })
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    /// Records the forward pass of one bag on `tape`.
    pub fn forward(&self, tape: &mut Tape, graph: &PreparedGraph) -> Result<ModelOutput> {
        self.forward_with(tape, &self.store, graph)
    }

    /// As [`Model::forward`], reading parameter values from `store`.
    pub fn forward_with(&self, tape: &mut Tape, store: &ParamStore, graph: &PreparedGraph) -> Result<ModelOutput> {
        if graph.features.cols() != self.spec.in_dim {
            return Err(Error::Malformed(format!(
                "graph features have width {}, model expects {}",
                graph.features.cols(),
                self.spec.in_dim
            )));
        }
        let x = tape.constant(graph.features.clone());
        let h = match (&self.encoder, &self.gnn) {
            (Some(enc), _) => enc.forward(tape, store, x)?,
            (None, Some(gnn)) => gnn.forward(tape, store, graph, x)?,
            (None, None) => unreachable!("every model has an encoder or a gnn"),
        };
        match &self.pool {
            Pool::Abmil(p) => {
                let o = p.forward(tape, store, h)?;
                Ok(ModelOutput { prob: o.prob, embedding: o.embedding, attention: Some(o.attention), critical: None })
            }
            Pool::Dsmil(p) => {
                let o = p.forward(tape, store, h)?;
                Ok(ModelOutput { prob: o.prob, embedding: o.embedding, attention: Some(o.attention), critical: o.critical })
            }
            Pool::Readout(head) => {
                let embedding = match (&self.gnn, self.spec.kind.aggregator) {
                    (Some(_), _) => h,
                    (None, Aggregator::Max) => tape.max_rows(h)?,
                    (None, _) => tape.mean_rows(h)?,
                };
                let logit = head.forward(tape, store, embedding)?;
                let prob = tape.activation(logit, Activation::Sigmoid)?;
                Ok(ModelOutput { prob, embedding, attention: None, critical: None })
            }
        }
    }

    pub fn predict(&self, graph: &PreparedGraph) -> Result<Prediction> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, graph)?;
        Ok(Prediction {
            prob: tape.value(out.prob).scalar(),
            embedding: tape.value(out.embedding).data().to_vec(),
            attention: out.attention.map(|a| tape.value(a).data().to_vec()),
        })
    }

    /// SHA-256 over the architecture string and every parameter tensor.
    pub fn hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.spec.encode().as_bytes());
        for p in self.store.iter() {
            h.update(p.name.as_bytes());
            h.update((p.value.rows() as u64).to_le_bytes());
            h.update((p.value.cols() as u64).to_le_bytes());
            for v in p.value.data() {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().into()
    }

    /// Named tensors in checkpoint order: parameters, then fitted region
    /// centroids and counts.
    fn tensors(&self) -> Vec<(String, Matrix)> {
        let mut out: Vec<(String, Matrix)> = self.store.iter().map(|p| (p.name.clone(), p.value.clone())).collect();
        if let Some(r) = &self.regions {
            out.push(("graph.centroids".into(), r.centroids().clone()));
            let counts: Vec<f64> = r.model().counts().iter().map(|&c| c as f64).collect();
            out.push(("graph.counts".into(), Matrix::row_vector(&counts).expect("finite counts")));
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let spec = self.spec.encode();
        let tensors = self.tensors();
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
        out.extend_from_slice(spec.as_bytes());
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, m) in &tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(mut r: impl Read) -> Result<Self> {
        check_magic(CHECKPOINT_MAGIC, &read_array(&mut r)?)?;
        let version = u16::from_le_bytes(read_array(&mut r)?);
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch { expected: CHECKPOINT_VERSION, found: version });
        }
        let len = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let spec = read_string(&mut r, len)?;
        let spec = ModelSpec::decode(&spec)?;
        let mut model = Model::new(spec, 0).map_err(|e| Error::Malformed(e.to_string()))?;
        let count = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let mut loaded = vec![false; model.store.len()];
        let mut centroids = None;
        let mut counts = None;
        for _ in 0..count {
            let len = u16::from_le_bytes(read_array(&mut r)?) as usize;
            let name = read_string(&mut r, len)?;
            let rows = u32::from_le_bytes(read_array(&mut r)?) as usize;
            let cols = u32::from_le_bytes(read_array(&mut r)?) as usize;
            let mut buf = vec![0u8; rows * cols * 8];
            r.read_exact(&mut buf)?;
            let data = buf.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
            let m = Matrix::from_vec(rows, cols, data).map_err(|e| Error::Malformed(e.to_string()))?;
            match name.as_str() {
                "graph.centroids" => centroids = Some(m),
                "graph.counts" => counts = Some(m),
                _ => {
                    let id = model
                        .store
                        .find(&name)
                        .ok_or_else(|| Error::Malformed(format!("unexpected tensor {name:?}")))?;
                    model.store.set_value(id, m).map_err(|e| Error::Malformed(e.to_string()))?;
                    loaded[id.index()] = true;
                }
            }
        }
        if let Some(missing) = loaded.iter().position(|&l| !l) {
            let name = model.store.iter().nth(missing).map(|p| p.name.clone()).unwrap_or_default();
            return Err(Error::Malformed(format!("checkpoint lacks tensor {name:?}")));
        }
        if let Some(c) = centroids {
            let counts = counts.ok_or_else(|| Error::Malformed("region centroids without counts".into()))?;
            let counts = counts.data().iter().map(|&v| v as u64).collect();
            let km = MiniBatchKMeans::from_centroids(c, counts, 0).map_err(|e| Error::Malformed(e.to_string()))?;
            model.regions = Some(GlobalRegions::from_model(km)?);
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(fs::read(path)?.as_slice())
    }
}

fn read_string(r: &mut impl Read, len: usize) -> Result<String> {
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Malformed("string is not UTF-8".into()))
}
