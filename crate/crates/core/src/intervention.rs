//! Backdoor adjustment over a dictionary of confounder strata.
//!
//! Training bag embeddings are clustered (after a PCA reduction) into `K`
//! strata; each stratum is the mean of its members' original embeddings and
//! carries a prior. A classifier head then attends from a bag embedding to
//! the strata and classifies `B ⊕ Σ α_i P(c_i) c_i`.

use std::fs;
use std::io::Read;
use std::path::Path;

use crate::clustering::{kmeans, pca_fit_transform, PcaBasis};
use crate::data::{check_magic, read_array};
use crate::error::{Error, Result};
use crate::mil::{Dense, LinearHead};
use crate::numerics::{glorot_uniform, Activation, Matrix, ParamGroup, ParamId, ParamStore, Tape, Var};
use crate::rng::{self, stream};

pub const DICTIONARY_MAGIC: &[u8; 4] = b"GMIC";
pub const DICTIONARY_VERSION: u16 = 1;
pub const DEFAULT_STRATA: usize = 8;
pub const DEFAULT_PCA_DIM: usize = 64;
pub const DEFAULT_PROJECTION: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorMode {
    /// Cluster size over the number of embeddings.
    Proportional,
    Uniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfounderDictionary {
    /// `K × d_B`.
    pub strata: Matrix,
    pub priors: Vec<f64>,
    pub pca: PcaBasis,
    /// Hash of the model whose embeddings built the dictionary.
    pub model_hash: [u8; 32],
}

impl ConfounderDictionary {
    /// Clusters `embeddings` (`N_t × d_B`) into `k` strata in a
    /// `pca_dim`-dimensional PCA space.
    pub fn build(
        embeddings: &Matrix,
        k: usize,
        pca_dim: usize,
        priors: PriorMode,
        seed: u64,
        model_hash: [u8; 32],
    ) -> Result<Self> {
        let (n, d) = embeddings.shape();
        if k == 0 || n < k {
            return Err(Error::invalid(format!("{n} embeddings cannot form {k} strata")));
        }
        if pca_dim == 0 || pca_dim > n.min(d) {
            return Err(Error::invalid(format!("pca dimension {pca_dim} outside 1..={}", n.min(d))));
        }
        let (pca, reduced) = pca_fit_transform(embeddings, pca_dim)?;
        let fit = kmeans(&reduced, k, rng::derive(seed, stream::DICTIONARY))?;
        let mut strata = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (row, &c) in embeddings.iter_rows().zip(&fit.assignments) {
            counts[c] += 1;
            for (s, v) in strata.row_mut(c).iter_mut().zip(row) {
                *s += v;
            }
        }
        for (c, &count) in counts.iter().enumerate() {
            let inv = count.max(1) as f64;
            strata.row_mut(c).iter_mut().for_each(|v| *v /= inv);
        }
        let priors = match priors {
            PriorMode::Proportional => counts.iter().map(|&c| c as f64 / n as f64).collect(),
            PriorMode::Uniform => vec![1.0 / k as f64; k],
        };
        Ok(Self { strata, priors, pca, model_hash })
    }

    /// Default PCA width: `min(64, N_t, d_B)`.
    pub fn default_pca_dim(n: usize, d: usize) -> usize {
        DEFAULT_PCA_DIM.min(n).min(d)
    }

    pub fn k(&self) -> usize {
        self.strata.rows()
    }

    pub fn dim(&self) -> usize {
        self.strata.cols()
    }

    pub fn check_model(&self, hash: &[u8; 32]) -> Result<()> {
        if &self.model_hash != hash {
            return Err(Error::ModelHashMismatch);
        }
        Ok(())
    }

    /// Magic, version, `K u32`, `d_B u32`, strata f64, priors f64, model
    /// hash, then the PCA basis (`d u32`, `d' u32`, mean, components,
    /// explained variance ratios, all f64).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(DICTIONARY_MAGIC);
        out.extend_from_slice(&DICTIONARY_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.k() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        let f64s = |out: &mut Vec<u8>, xs: &[f64]| xs.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        f64s(&mut out, self.strata.data());
        f64s(&mut out, &self.priors);
        out.extend_from_slice(&self.model_hash);
        out.extend_from_slice(&(self.pca.input_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(self.pca.output_dim() as u32).to_le_bytes());
        f64s(&mut out, &self.pca.mean);
        f64s(&mut out, self.pca.components.data());
        f64s(&mut out, &self.pca.explained_variance_ratio);
        out
    }

    pub fn from_bytes(mut r: impl Read) -> Result<Self> {
        check_magic(DICTIONARY_MAGIC, &read_array(&mut r)?)?;
        let version = u16::from_le_bytes(read_array(&mut r)?);
        if version != DICTIONARY_VERSION {
            return Err(Error::VersionMismatch { expected: DICTIONARY_VERSION, found: version });
        }
        let k = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let d = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let strata = Matrix::from_vec(k, d, read_f64s(&mut r, k * d)?)?;
        let priors = read_f64s(&mut r, k)?;
        let model_hash: [u8; 32] = read_array(&mut r)?;
        let pd = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let po = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let mean = read_f64s(&mut r, pd)?;
        let components = Matrix::from_vec(pd, po, read_f64s(&mut r, pd * po)?)?;
        let explained_variance_ratio = read_f64s(&mut r, po)?;
        let total: f64 = priors.iter().sum();
        if k == 0 || priors.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Malformed("dictionary priors are not a distribution".into()));
        }
        Ok(Self { strata, priors, pca: PcaBasis { mean, components, explained_variance_ratio }, model_hash })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(fs::read(path)?.as_slice())
    }
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect())
}

/// Attention over strata plus a one-hidden-layer classifier on
/// `B ⊕ Σ α_i P(c_i) c_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct InterventionHead {
    pub store: ParamStore,
    pub w1: ParamId,
    pub w2: ParamId,
    pub hidden: Dense,
    pub out: LinearHead,
    pub dim: usize,
    pub projection: usize,
}

/// Forward-pass handles of the intervention head.
#[derive(Clone, Copy, Debug)]
pub struct InterventionOutput {
    /// `1 × K` attention over strata.
    pub attention: Var,
    /// `1 × 2·d_B` classifier input.
    pub z: Var,
    pub prob: Var,
}

impl InterventionHead {
    pub fn new(dim: usize, projection: usize, seed: u64) -> Result<Self> {
        if dim == 0 || projection == 0 {
            return Err(Error::Config("intervention widths must be positive".into()));
        }
        let mut r = rng::seeded(rng::derive(seed, stream::HEAD_INIT));
        let mut store = ParamStore::new();
        let g = ParamGroup::Intervention;
        let w1 = store.add("it.w1", g, glorot_uniform(dim, projection, &mut r));
        let w2 = store.add("it.w2", g, glorot_uniform(dim, projection, &mut r));
        let hidden = Dense::new(&mut store, "it.hidden", g, 2 * dim, dim, Activation::Relu, &mut r);
        let out = LinearHead::new(&mut store, "it.out", g, dim, &mut r);
        Ok(Self { store, w1, w2, hidden, out, dim, projection })
    }

    /// `softmax((B W1)(C W2)ᵀ / √l)` with `l` the projection width.
    pub fn attention(&self, tape: &mut Tape, store: &ParamStore, b: Var, strata: Var) -> Result<Var> {
        let w1 = tape.param(store, self.w1);
        let w2 = tape.param(store, self.w2);
        let q = tape.matmul(b, w1)?;
        let k = tape.matmul(strata, w2)?;
        let kt = tape.transpose(k)?;
        let logits = tape.matmul(q, kt)?;
        let logits = tape.scale(logits, 1.0 / (self.projection as f64).sqrt())?;
        tape.softmax_rows(logits)
    }

    pub fn forward(&self, tape: &mut Tape, embedding: &[f64], dict: &ConfounderDictionary) -> Result<InterventionOutput> {
        self.forward_with(tape, &self.store, embedding, dict)
    }

    /// As [`InterventionHead::forward`], reading parameters from `store`.
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        embedding: &[f64],
        dict: &ConfounderDictionary,
    ) -> Result<InterventionOutput> {
        if embedding.len() != self.dim || dict.dim() != self.dim {
            return Err(Error::shape(format!(
                "intervention head of width {} given embedding {} and strata {}",
                self.dim,
                embedding.len(),
                dict.dim()
            )));
        }
        let b = tape.constant(Matrix::row_vector(embedding)?);
        let c = tape.constant(dict.strata.clone());
        let p = tape.constant(Matrix::row_vector(&dict.priors)?);
        let attention = self.attention(tape, store, b, c)?;
        let weights = tape.mul(attention, p)?;
        let confounder = tape.matmul(weights, c)?;
        let z = tape.concat_cols(b, confounder)?;
        let h = self.hidden.forward(tape, store, z)?;
        let logit = self.out.forward(tape, store, h)?;
        let prob = tape.activation(logit, Activation::Sigmoid)?;
        Ok(InterventionOutput { attention, z, prob })
    }

    pub fn predict(&self, embedding: &[f64], dict: &ConfounderDictionary) -> Result<f64> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, embedding, dict)?;
        Ok(tape.value(out.prob).scalar())
    }
}
