//! Batch entry points: each reads its inputs from disk, runs one stage and
//! writes its outputs.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::data::{load_slide, Manifest, SlideRecord};
use crate::error::{Error, Result};
use crate::graph::{build_graph, fit_global_regions, write_edge_list, write_feature_sidecar, GraphKind, GraphOptions};
use crate::model::Model;
use crate::pipeline::{
    attention_heatmap, cross_validate, embeddings_csv, extract_bag_embeddings, prepare_graphs, purity_report, CvReport,
    Heatmap, PurityReport,
};
use crate::rng::{self, stream};
use crate::synth;

fn load_slides(manifest: &Path) -> Result<(Manifest, Vec<SlideRecord>)> {
    let manifest = Manifest::load(manifest)?;
    let slides = manifest.load_slides()?;
    if slides.is_empty() {
        return Err(Error::Empty("manifest lists no slides".into()));
    }
    Ok((manifest, slides))
}

fn feature_dim(slides: &[SlideRecord]) -> Result<usize> {
    let d = slides[0].feature_dim();
    if slides.iter().any(|s| s.feature_dim() != d) {
        return Err(Error::Malformed("slides differ in feature width".into()));
    }
    Ok(d)
}

/// Writes a synthetic dataset under `out_dir`; returns its manifest.
pub fn cmd_synth(cfg: &RunConfig, out_dir: &Path) -> Result<Manifest> {
    synth::generate(&cfg.synth, out_dir)
}

/// Writes `<slide_id>.edges` and `<slide_id>.gmif` for every slide.
/// Returns the number of graphs written.
pub fn cmd_build_graphs(cfg: &RunConfig, manifest: &Path, kind: GraphKind, out_dir: &Path) -> Result<usize> {
    let (_, slides) = load_slides(manifest)?;
    let spec = cfg.model_spec(feature_dim(&slides)?);
    let opts = GraphOptions { kind, ..spec.graph_options(cfg.seed) };
    let regions = match kind {
        GraphKind::RegionGlobal => Some(fit_global_regions(
            slides.iter(),
            opts.k_regions,
            opts.chunk,
            rng::derive(cfg.seed, stream::GRAPH),
        )?),
        _ => None,
    };
    fs::create_dir_all(out_dir)?;
    for slide in &slides {
        let g = build_graph(slide, &opts, regions.as_ref())?;
        write_edge_list(&g, out_dir.join(format!("{}.edges", slide.slide_id)))?;
        write_feature_sidecar(g.node_features(), out_dir.join(format!("{}.gmif", slide.slide_id)))?;
    }
    Ok(slides.len())
}

/// Files written by [`cmd_cv`].
pub const METRICS_FILE: &str = "metrics.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

pub fn checkpoint_path(out_dir: &Path, fold: usize) -> PathBuf {
    out_dir.join(format!("fold{fold}.gmip"))
}

pub fn dictionary_path(out_dir: &Path, fold: usize) -> PathBuf {
    out_dir.join(format!("fold{fold}.gmic"))
}

/// Cross-validates the configured model and writes the metrics CSV, the
/// human-readable report, per-slide test predictions and one checkpoint
/// (plus confounder dictionary) per fold.
pub fn cmd_cv(cfg: &RunConfig, manifest: &Path, out_dir: &Path) -> Result<CvReport> {
    let (_, slides) = load_slides(manifest)?;
    let cv = cfg.cv_config(feature_dim(&slides)?);
    let report = cross_validate(&cv, &slides)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(METRICS_FILE), report.metrics_csv())?;
    fs::write(out_dir.join(REPORT_FILE), report.table())?;
    let mut preds = String::from("slide_id,fold,prob,prob_it\n");
    for f in &report.folds {
        f.model.save(checkpoint_path(out_dir, f.index))?;
        if let Some(it) = &f.intervention {
            it.dictionary.save(dictionary_path(out_dir, f.index))?;
        }
        for (k, (id, p)) in f.test_ids.iter().zip(&f.test_scores).enumerate() {
            let with = f.intervention.as_ref().map_or(String::new(), |it| format!("{:.6}", it.test_scores[k]));
            preds.push_str(&format!("{id},{},{p:.6},{with}\n", f.index));
        }
    }
    fs::write(out_dir.join(PREDICTIONS_FILE), preds)?;
    Ok(report)
}

/// Writes the attention heatmap of `slide` under `checkpoint` to `out` (CSV)
/// and `out` with a `.pgm` extension.
pub fn cmd_heatmap(cfg: &RunConfig, checkpoint: &Path, slide: &Path, out: &Path) -> Result<Heatmap> {
    let model = Model::load(checkpoint)?;
    let slide = load_slide(slide)?;
    let heatmap = attention_heatmap(&model, &slide, cfg.seed)?;
    heatmap.save(out)?;
    Ok(heatmap)
}

/// Clusters the bag embeddings of every manifest slide into `k` groups and
/// scores them against slide labels. Writes the report to `out` and the
/// embeddings next to it as `<stem>_embeddings.csv`.
pub fn cmd_purity(cfg: &RunConfig, checkpoint: &Path, manifest: &Path, k: usize, out: &Path) -> Result<PurityReport> {
    let model = Model::load(checkpoint)?;
    let (_, slides) = load_slides(manifest)?;
    let graphs = prepare_graphs(&slides, &model.spec, cfg.seed, model.regions.as_ref())?;
    let embeddings = extract_bag_embeddings(&model, &graphs)?;
    let labels: Vec<String> = slides.iter().map(|s| s.label.as_u8().to_string()).collect();
    let report = purity_report(&embeddings, &labels, k, rng::derive(cfg.seed, stream::DICTIONARY))?;
    fs::write(out, report.to_text())?;
    let stem = out.file_stem().map_or("purity".into(), |s| s.to_string_lossy().into_owned());
    fs::write(out.with_file_name(format!("{stem}_embeddings.csv")), embeddings_csv(&slides, &embeddings)?)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> RunConfig {
        RunConfig::parse(
            "seed = 3\nsynth.n_centers = 2\nsynth.slides_per_center = 6\nsynth.height = 6\nsynth.width = 6\n\
             synth.feature_dim = 4\nsynth.radius = 1\nmodel = patch-gat-abmil\nmodel.hidden = 4\nmodel.att_dim = 4\n\
             model.layers = 1\ntrain.epochs = 2\ncv.folds = 2\nit.enabled = true\nit.strata = 2\nit.projection = 4\n",
        )
        .unwrap()
    }

    #[test]
    fn end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        cmd_synth(&cfg, &dir.path().join("data")).unwrap();
        let manifest = dir.path().join("data/manifest.csv");
        assert_eq!(cmd_build_graphs(&cfg, &manifest, GraphKind::Patch, &dir.path().join("graphs")).unwrap(), 12);
        let out = dir.path().join("cv");
        let report = cmd_cv(&cfg, &manifest, &out).unwrap();
        assert_eq!(report.folds.len(), 2);
        let csv = fs::read_to_string(out.join(METRICS_FILE)).unwrap();
        assert_eq!(csv.lines().count(), 1 + 2 * (2 + 2));
        assert!(dictionary_path(&out, 1).exists());

        let slide = dir.path().join("data/slides").read_dir().unwrap().next().unwrap().unwrap().path();
        let h = cmd_heatmap(&cfg, &checkpoint_path(&out, 0), &slide, &dir.path().join("h.csv")).unwrap();
        assert_eq!((h.height, h.width), (6, 6));
        assert!(dir.path().join("h.pgm").exists());

        let p = cmd_purity(&cfg, &checkpoint_path(&out, 0), &manifest, 2, &dir.path().join("purity.txt")).unwrap();
        assert!((0.5..=1.0).contains(&p.purity));
        let emb = fs::read_to_string(dir.path().join("purity_embeddings.csv")).unwrap();
        assert_eq!(emb.lines().count(), 13);
        assert_eq!(emb.lines().next().unwrap().split(',').count(), 3 + 4);
    }
}
