use std::fmt::Write as _;

use super::metrics::{aggregate, mean_std, MetricsReport, METRIC_NAMES, THRESHOLD};
use super::train::{extract_bag_embeddings, train_stage2, train_stage3, TrainConfig, TrainHistory};
use crate::data::{plan_folds, Fold, FoldMode, FoldPlan, Label, SlideRecord};
use crate::error::{Error, Result};
use crate::gnn::PreparedGraph;
use crate::graph::{build_graph, fit_global_regions, GlobalRegions, GraphKind};
use crate::intervention::{ConfounderDictionary, InterventionHead, PriorMode, DEFAULT_PROJECTION, DEFAULT_STRATA};
use crate::model::{Model, ModelSpec};
use crate::rng::{self, stream};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterventionConfig {
    /// Number of confounder strata `K`.
    pub strata: usize,
    /// PCA width; `None` means `min(64, N_t, d_B)`.
    pub pca_dim: Option<usize>,
    pub projection: usize,
    pub priors: PriorMode,
}

impl Default for InterventionConfig {
    fn default() -> Self {
        Self { strata: DEFAULT_STRATA, pca_dim: None, projection: DEFAULT_PROJECTION, priors: PriorMode::Proportional }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvConfig {
    /// Label written in the `config` column of reports.
    pub name: String,
    pub spec: ModelSpec,
    pub train: TrainConfig,
    pub fold_mode: FoldMode,
    /// Fold count for shuffled folds; by-center folds hold out each center
    /// once.
    pub folds: usize,
    pub with_intervention: bool,
    /// Fit dataset-level regions on every slide, test folds included.
    pub allow_global_fit: bool,
    pub intervention: InterventionConfig,
}

impl CvConfig {
    pub fn new(spec: ModelSpec, train: TrainConfig) -> Self {
        Self {
            name: spec.kind.to_string(),
            spec,
            train,
            fold_mode: FoldMode::Shuffled,
            folds: 5,
            with_intervention: false,
            allow_global_fit: false,
            intervention: InterventionConfig::default(),
        }
    }
}

/// Everything produced for one fold.
#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub index: usize,
    pub test_center: Option<String>,
    pub test_ids: Vec<String>,
    /// Stage-two test probabilities, in test order.
    pub test_scores: Vec<f64>,
    pub without: MetricsReport,
    pub history: TrainHistory,
    pub model: Model,
    pub intervention: Option<InterventionOutcome>,
}

#[derive(Clone, Debug)]
pub struct InterventionOutcome {
    pub metrics: MetricsReport,
    pub test_scores: Vec<f64>,
    pub dictionary: ConfounderDictionary,
    pub head: InterventionHead,
    pub history: TrainHistory,
}

#[derive(Clone, Debug)]
pub struct CvReport {
    pub name: String,
    pub plan: FoldPlan,
    pub folds: Vec<FoldOutcome>,
}

/// Builds graphs for every slide in dataset order.
pub fn prepare_graphs(slides: &[SlideRecord], spec: &ModelSpec, seed: u64, regions: Option<&GlobalRegions>) -> Result<Vec<PreparedGraph>> {
    let opts = spec.graph_options(seed);
    slides.iter().map(|s| build_graph(s, &opts, regions).map(|g| PreparedGraph::new(&g))).collect()
}

pub fn fit_regions_on(slides: &[SlideRecord], idx: &[usize], spec: &ModelSpec, seed: u64) -> Result<GlobalRegions> {
    fit_global_regions(idx.iter().map(|&i| &slides[i]), spec.k_regions, spec.chunk, rng::derive(seed, stream::GRAPH))
}

/// k-fold training and evaluation, optionally followed by interventional
/// training of each fold's model.
pub fn cross_validate(cfg: &CvConfig, slides: &[SlideRecord]) -> Result<CvReport> {
    if slides.is_empty() {
        return Err(Error::Empty("no slides to cross-validate".into()));
    }
    let labels: Vec<Label> = slides.iter().map(|s| s.label).collect();
    let centers: Vec<String> = slides.iter().map(|s| s.center_id.clone()).collect();
    let k = match cfg.fold_mode {
        FoldMode::Shuffled => cfg.folds,
        FoldMode::ByCenter => centers.iter().collect::<std::collections::BTreeSet<_>>().len(),
    };
    let plan = plan_folds(&labels, &centers, cfg.fold_mode, k, rng::derive(cfg.train.seed, stream::FOLDS))?;

    let global = cfg.spec.kind.graph == GraphKind::RegionGlobal;
    let shared_regions = if global && cfg.allow_global_fit {
        let all: Vec<usize> = (0..slides.len()).collect();
        Some(fit_regions_on(slides, &all, &cfg.spec, cfg.train.seed)?)
    } else {
        None
    };
    let shared_graphs = if !global || shared_regions.is_some() {
        Some(prepare_graphs(slides, &cfg.spec, cfg.train.seed, shared_regions.as_ref())?)
    } else {
        None
    };

    let run = |(i, fold): (usize, &Fold)| {
        run_fold(cfg, slides, i, fold, shared_graphs.as_deref(), shared_regions.as_ref())
    };
    #[cfg(feature = "parallel")]
    let folds: Result<Vec<FoldOutcome>> = {
        use rayon::prelude::*;
        plan.folds.par_iter().enumerate().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let folds: Result<Vec<FoldOutcome>> = plan.folds.iter().enumerate().map(run).collect();

    Ok(CvReport { name: cfg.name.clone(), plan, folds: folds? })
}

fn run_fold(
    cfg: &CvConfig,
    slides: &[SlideRecord],
    index: usize,
    fold: &Fold,
    shared_graphs: Option<&[PreparedGraph]>,
    shared_regions: Option<&GlobalRegions>,
) -> Result<FoldOutcome> {
    let seed = rng::derive(cfg.train.seed, stream::FOLD_BASE + index as u64);
    let (owned, regions) = match shared_graphs {
        Some(_) => (None, shared_regions.cloned()),
        None => {
            let regions = fit_regions_on(slides, &fold.train, &cfg.spec, seed)?;
            (Some(prepare_graphs(slides, &cfg.spec, cfg.train.seed, Some(&regions))?), Some(regions))
        }
    };
    let graphs = shared_graphs.or(owned.as_deref()).expect("graphs prepared above");
    let pick = |idx: &[usize]| idx.iter().map(|&i| graphs[i].clone()).collect::<Vec<_>>();
    let train_graphs = pick(&fold.train);
    let test_graphs = pick(&fold.test);
    let train_y: Vec<f64> = fold.train.iter().map(|&i| slides[i].label.as_f64()).collect();
    let test_y: Vec<bool> = fold.test.iter().map(|&i| slides[i].label.is_positive()).collect();

    let train_cfg = TrainConfig { seed, ..cfg.train };
    let mut model = Model::new(cfg.spec, seed)?;
    model.regions = regions;
    let history = train_stage2(&mut model, &train_graphs, &train_y, &train_cfg)?;
    let test_scores = test_graphs.iter().map(|g| model.predict(g).map(|p| p.prob)).collect::<Result<Vec<_>>>()?;
    let without = MetricsReport::compute(&test_scores, &test_y, THRESHOLD)?;

    let intervention = if cfg.with_intervention {
        Some(run_intervention(cfg, &model, &train_graphs, &train_y, &test_graphs, &test_y, &train_cfg)?)
    } else {
        None
    };
    Ok(FoldOutcome {
        index,
        test_center: fold.test_center.clone(),
        test_ids: fold.test.iter().map(|&i| slides[i].slide_id.clone()).collect(),
        test_scores,
        without,
        history,
        model,
        intervention,
    })
}

fn run_intervention(
    cfg: &CvConfig,
    model: &Model,
    train_graphs: &[PreparedGraph],
    train_y: &[f64],
    test_graphs: &[PreparedGraph],
    test_y: &[bool],
    train_cfg: &TrainConfig,
) -> Result<InterventionOutcome> {
    let it = &cfg.intervention;
    let embeddings = extract_bag_embeddings(model, train_graphs)?;
    let (n, d) = embeddings.shape();
    let pca_dim = it.pca_dim.unwrap_or_else(|| ConfounderDictionary::default_pca_dim(n, d));
    let hash = model.hash();
    let dictionary = ConfounderDictionary::build(&embeddings, it.strata, pca_dim, it.priors, train_cfg.seed, hash)?;
    dictionary.check_model(&model.hash())?;
    let mut head = InterventionHead::new(d, it.projection, train_cfg.seed)?;
    let history = train_stage3(&mut head, &dictionary, &embeddings, train_y, train_cfg)?;
    let test_emb = extract_bag_embeddings(model, test_graphs)?;
    let test_scores = test_emb.iter_rows().map(|e| head.predict(e, &dictionary)).collect::<Result<Vec<_>>>()?;
    let metrics = MetricsReport::compute(&test_scores, test_y, THRESHOLD)?;
    Ok(InterventionOutcome { metrics, test_scores, dictionary, head, history })
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

/// Columns of the metrics CSV.
pub const METRICS_HEADER: &str = "config,fold,auc,ba,f1,precision,recall";

impl CvReport {
    pub fn without(&self) -> Vec<MetricsReport> {
        self.folds.iter().map(|f| f.without).collect()
    }

    pub fn with(&self) -> Option<Vec<MetricsReport>> {
        self.folds.iter().map(|f| f.intervention.as_ref().map(|i| i.metrics)).collect()
    }

    /// Per-fold `with − without` for each metric, as mean ± std.
    pub fn delta(&self) -> Option<[Option<(f64, f64)>; 6]> {
        let with = self.with()?;
        let mut out = [None; 6];
        for (m, slot) in out.iter_mut().enumerate() {
            let d: Vec<f64> = with
                .iter()
                .zip(self.without())
                .filter_map(|(w, wo)| Some(w.values()[m]? - wo.values()[m]?))
                .collect();
            *slot = mean_std(&d);
        }
        Some(out)
    }

    fn csv_rows(out: &mut String, name: &str, reports: &[MetricsReport]) {
        let cols = [0, 1, 3, 4, 5];
        for (i, r) in reports.iter().enumerate() {
            let v = r.values();
            let fields: Vec<String> = cols.iter().map(|&c| fmt_metric(v[c])).collect();
            let _ = writeln!(out, "{name},{i},{}", fields.join(","));
        }
        let agg = aggregate(reports);
        for (label, pick) in [("mean", 0usize), ("std", 1)] {
            let fields: Vec<String> = cols
                .iter()
                .map(|&c| fmt_metric(agg[c].map(|(m, s)| if pick == 0 { m } else { s })))
                .collect();
            let _ = writeln!(out, "{name},{label},{}", fields.join(","));
        }
    }

    /// `config,fold,auc,ba,f1,precision,recall`, one row per fold plus mean
    /// and std rows; interventional results use the `<name>+it` label.
    pub fn metrics_csv(&self) -> String {
        let mut out = format!("{METRICS_HEADER}\n");
        Self::csv_rows(&mut out, &self.name, &self.without());
        if let Some(with) = self.with() {
            Self::csv_rows(&mut out, &format!("{}+it", self.name), &with);
        }
        out
    }

    /// Human-readable table with accuracy alongside balanced accuracy, and
    /// the with/without intervention deltas when available.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let header = format!("{:<28} {:>6} {:>15} {:>15} {:>15} {:>15} {:>15} {:>15}", "configuration", "fold", "AUC", "BA", "Acc", "F1", "Precision", "Recall");
        let _ = writeln!(out, "{header}");
        let _ = writeln!(out, "{}", "-".repeat(header.len()));
        let mut block = |name: &str, reports: &[MetricsReport], folds: &[FoldOutcome]| {
            for (r, f) in reports.iter().zip(folds) {
                let fold = f.test_center.clone().unwrap_or_else(|| f.index.to_string());
                let cells: Vec<String> = r.values().iter().map(|v| format!("{:>15}", v.map_or("-".into(), |x| format!("{x:.3}")))).collect();
                let _ = writeln!(out, "{name:<28} {fold:>6} {}", cells.join(" "));
            }
            let cells: Vec<String> = aggregate(reports)
                .iter()
                .map(|v| format!("{:>15}", v.map_or("-".into(), |(m, s)| format!("{m:.3} ± {s:.3}"))))
                .collect();
            let _ = writeln!(out, "{name:<28} {:>6} {}", "all", cells.join(" "));
        };
        block(&self.name, &self.without(), &self.folds);
        if let Some(with) = self.with() {
            block(&format!("{} + IT", self.name), &with, &self.folds);
        }
        if let Some(delta) = self.delta() {
            let cells: Vec<String> = delta
                .iter()
                .map(|v| format!("{:>15}", v.map_or("-".into(), |(m, s)| format!("{m:+.3} ± {s:.3}"))))
                .collect();
            let _ = writeln!(out, "{:<28} {:>6} {}", "Δ (with − without IT)", "", cells.join(" "));
        }
        out
    }
}

/// Metric name lookup for callers formatting their own reports.
pub fn metric_index(name: &str) -> Option<usize> {
    METRIC_NAMES.iter().position(|&m| m == name)
}
