//! Flat `key = value` run configuration.
//!
//! One setting per line; blank lines and lines starting with `#` are
//! ignored. Unknown or repeated keys are errors. Only `seed` is required.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::clustering::Connectivity;
use crate::data::FoldMode;
use crate::error::{Error, Result};
use crate::graph::{DEFAULT_CENTROIDS, DEFAULT_CHUNK, DEFAULT_REGIONS};
use crate::intervention::{PriorMode, DEFAULT_PROJECTION, DEFAULT_STRATA};
use crate::model::{ModelKind, ModelSpec};
use crate::pipeline::{CvConfig, InterventionConfig, TrainConfig};
use crate::synth::{SynthConfig, SynthTask};

/// Recognised keys with their defaults and meaning.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "(required)", "master seed for every random choice"),
    ("synth.n_centers", "3", "number of synthetic centers"),
    ("synth.slides_per_center", "20", "slides generated per center"),
    ("synth.height", "12", "patch grid rows"),
    ("synth.width", "12", "patch grid columns"),
    ("synth.feature_dim", "16", "patch feature width F"),
    ("synth.radius", "2", "tumor disc radius in grid cells"),
    ("synth.shift", "1.0", "norm of each center's feature shift"),
    ("synth.rho", "0.0", "label/center correlation in [0, 1]"),
    ("synth.task", "presence", "presence | contiguity"),
    ("synth.noise_std", "0.5", "patch feature noise standard deviation"),
    ("model", "patch-gcn-abmil", "abmil | dsmil | max | mean | <graph>-<gcn|gat>-<abmil|dsmil|max|mean>"),
    ("model.hidden", "256", "hidden width D (also the bag embedding width)"),
    ("model.layers", "3", "GNN depth L"),
    ("model.att_dim", "128", "ABMIL attention / DSMIL query width"),
    ("graph.connectivity", "8", "patch-graph neighbourhood, 4 or 8"),
    ("graph.k_regions", "10", "k-means clusters for region graphs"),
    ("graph.k_centroids", "9", "k-means clusters for centroid graphs"),
    ("graph.chunk", "50", "slides per mini-batch k-means update"),
    ("train.epochs", "50", "training epochs"),
    ("train.accumulation", "8", "slides per optimizer step"),
    ("train.lr_mil", "1e-4", "learning rate of MIL and intervention parameters"),
    ("train.lr_gnn", "1e-3", "learning rate of GNN parameters"),
    ("train.wd_mil", "1e-4", "weight decay of MIL and intervention parameters"),
    ("train.wd_gnn", "5e-4", "weight decay of GNN parameters"),
    ("cv.folds", "5", "fold count for shuffled folds (by-center uses one fold per center)"),
    ("cv.mode", "shuffled", "shuffled | by-center"),
    ("cv.allow_global_fit", "false", "fit region-global clustering on all slides"),
    ("it.enabled", "false", "run interventional training after each fold"),
    ("it.strata", "8", "confounder strata K"),
    ("it.pca_dim", "auto", "PCA width before clustering; auto = min(64, N, D)"),
    ("it.projection", "128", "attention projection width"),
    ("it.priors", "proportional", "proportional | uniform"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub model: ModelKind,
    pub hidden: usize,
    pub layers: usize,
    pub att_dim: usize,
    pub connectivity: Connectivity,
    pub k_regions: usize,
    pub k_centroids: usize,
    pub chunk: usize,
    pub train: TrainConfig,
    pub folds: usize,
    pub fold_mode: FoldMode,
    pub allow_global_fit: bool,
    pub with_intervention: bool,
    pub intervention: InterventionConfig,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("invalid value {value:?} for key `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid value {value:?} for key `{key}`"))),
    }
}

pub fn parse_fold_mode(value: &str) -> Result<FoldMode> {
    match value {
        "shuffled" => Ok(FoldMode::Shuffled),
        "by-center" => Ok(FoldMode::ByCenter),
        _ => Err(Error::Config(format!("unknown fold mode {value:?}"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.iter().any(|(name, _, _)| *name == k) {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("key `{k}` given twice")));
            }
        }
        Self::from_map(&map)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let seed: u64 = match map.get("seed") {
            Some(v) => parse_value("seed", v)?,
            None => return Err(Error::Config("missing required key `seed`".into())),
        };
        let get = |k: &str| map.get(k).map(String::as_str);
        fn or<T: FromStr>(map: &BTreeMap<String, String>, k: &str, default: T) -> Result<T> {
            map.get(k).map_or(Ok(default), |v| parse_value(k, v))
        }
        let d = SynthConfig::default();
        let synth = SynthConfig {
            n_centers: or(map, "synth.n_centers", d.n_centers)?,
            slides_per_center: or(map, "synth.slides_per_center", d.slides_per_center)?,
            height: or(map, "synth.height", d.height)?,
            width: or(map, "synth.width", d.width)?,
            feature_dim: or(map, "synth.feature_dim", d.feature_dim)?,
            radius: or(map, "synth.radius", d.radius)?,
            shift: or(map, "synth.shift", d.shift)?,
            rho: or(map, "synth.rho", d.rho)?,
            task: get("synth.task").map_or(Ok(d.task), SynthTask::from_str)?,
            noise_std: or(map, "synth.noise_std", d.noise_std)?,
            seed,
        };
        let model = get("model").unwrap_or("patch-gcn-abmil").parse::<ModelKind>().map_err(|e| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        })?;
        let connectivity = Connectivity::from_number(or(map, "graph.connectivity", 8u32)?)
            .ok_or_else(|| Error::Config("graph.connectivity must be 4 or 8".into()))?;
        let t = TrainConfig::new(seed);
        let train = TrainConfig {
            epochs: or(map, "train.epochs", t.epochs)?,
            accumulation: or(map, "train.accumulation", t.accumulation)?,
            lr_mil: or(map, "train.lr_mil", t.lr_mil)?,
            lr_gnn: or(map, "train.lr_gnn", t.lr_gnn)?,
            wd_mil: or(map, "train.wd_mil", t.wd_mil)?,
            wd_gnn: or(map, "train.wd_gnn", t.wd_gnn)?,
            seed,
        };
        train.validate()?;
        let priors = match get("it.priors").unwrap_or("proportional") {
            "proportional" => PriorMode::Proportional,
            "uniform" => PriorMode::Uniform,
            other => return Err(Error::Config(format!("invalid value {other:?} for key `it.priors`"))),
        };
        let pca_dim = match get("it.pca_dim") {
            None | Some("auto") => None,
            Some(v) => Some(parse_value("it.pca_dim", v)?),
        };
        let cfg = Self {
            seed,
            synth,
            model,
            hidden: or(map, "model.hidden", 256)?,
            layers: or(map, "model.layers", 3)?,
            att_dim: or(map, "model.att_dim", 128)?,
            connectivity,
            k_regions: or(map, "graph.k_regions", DEFAULT_REGIONS)?,
            k_centroids: or(map, "graph.k_centroids", DEFAULT_CENTROIDS)?,
            chunk: or(map, "graph.chunk", DEFAULT_CHUNK)?,
            train,
            folds: or(map, "cv.folds", 5)?,
            fold_mode: get("cv.mode").map_or(Ok(FoldMode::Shuffled), parse_fold_mode)?,
            allow_global_fit: get("cv.allow_global_fit").map_or(Ok(false), |v| parse_bool("cv.allow_global_fit", v))?,
            with_intervention: get("it.enabled").map_or(Ok(false), |v| parse_bool("it.enabled", v))?,
            intervention: InterventionConfig {
                strata: or(map, "it.strata", DEFAULT_STRATA)?,
                pca_dim,
                projection: or(map, "it.projection", DEFAULT_PROJECTION)?,
                priors,
            },
        };
        if cfg.hidden == 0 || cfg.layers == 0 || cfg.att_dim == 0 {
            return Err(Error::Config("model widths and depth must be positive".into()));
        }
        if cfg.k_regions == 0 || cfg.k_centroids == 0 || cfg.chunk == 0 {
            return Err(Error::Config("graph cluster counts and chunk must be positive".into()));
        }
        if cfg.folds < 2 {
            return Err(Error::Config("cv.folds must be at least 2".into()));
        }
        if cfg.intervention.strata == 0 || cfg.intervention.projection == 0 {
            return Err(Error::Config("it.strata and it.projection must be positive".into()));
        }
        Ok(cfg)
    }

    /// Model architecture for inputs of width `in_dim`.
    pub fn model_spec(&self, in_dim: usize) -> ModelSpec {
        ModelSpec {
            hidden: self.hidden,
            layers: self.layers,
            att_dim: self.att_dim,
            patch_connectivity: self.connectivity,
            k_regions: self.k_regions,
            k_centroids: self.k_centroids,
            chunk: self.chunk,
            ..ModelSpec::new(self.model, in_dim)
        }
    }

    pub fn cv_config(&self, in_dim: usize) -> CvConfig {
        CvConfig {
            fold_mode: self.fold_mode,
            folds: self.folds,
            with_intervention: self.with_intervention,
            allow_global_fit: self.allow_global_fit,
            intervention: self.intervention,
            ..CvConfig::new(self.model_spec(in_dim), self.train)
        }
    }

    /// Markdown table of every key, its default and meaning.
    pub fn reference() -> String {
        let mut out = String::from("| key | default | meaning |\n|---|---|---|\n");
        for (k, d, m) in KEYS {
            let _ = writeln!(out, "| `{k}` | `{d}` | {} |", m.replace('|', "\\|"));
        }
        out
    }
}
