use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::clustering::{cluster_purity, contingency, kmeans};
use crate::data::{GridCoord, SlideRecord};
use crate::error::{Error, Result};
use crate::gnn::PreparedGraph;
use crate::graph::build_graph;
use crate::model::Model;
use crate::numerics::Matrix;

/// Value of grid cells without a patch.
pub const SENTINEL: f64 = -1.0;

/// Patch attention laid out on the slide's bounding box, min-max normalised.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub origin: GridCoord,
    pub height: usize,
    pub width: usize,
    /// Row-major; [`SENTINEL`] where no patch exists.
    pub cells: Vec<f64>,
}

impl Heatmap {
    /// Broadcasts node attention to the patches each node covers.
    pub fn from_attention(slide: &SlideRecord, node_to_patches: &[Vec<usize>], attention: &[f64]) -> Result<Self> {
        if node_to_patches.len() != attention.len() {
            return Err(Error::shape(format!(
                "{} attention weights for {} nodes",
                attention.len(),
                node_to_patches.len()
            )));
        }
        let coords = slide.coords();
        if coords.is_empty() {
            return Err(Error::Empty("slide has no patches".into()));
        }
        let mut per_patch = vec![f64::NAN; coords.len()];
        for (patches, &a) in node_to_patches.iter().zip(attention) {
            for &p in patches {
                *per_patch.get_mut(p).ok_or_else(|| Error::invalid(format!("patch {p} out of range")))? = a;
            }
        }
        if per_patch.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("patch attention".into()));
        }
        let (lo, hi) = per_patch.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        let x0 = coords.iter().map(|c| c.x).min().expect("non-empty");
        let y0 = coords.iter().map(|c| c.y).min().expect("non-empty");
        let width = (coords.iter().map(|c| c.x).max().expect("non-empty") - x0 + 1) as usize;
        let height = (coords.iter().map(|c| c.y).max().expect("non-empty") - y0 + 1) as usize;
        let mut cells = vec![SENTINEL; width * height];
        for (c, &v) in coords.iter().zip(&per_patch) {
            let norm = if hi > lo { (v - lo) / (hi - lo) } else { 1.0 };
            cells[(c.y - y0) as usize * width + (c.x - x0) as usize] = norm;
        }
        Ok(Self { origin: GridCoord::new(x0, y0), height, width, cells })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.width + col]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.cells.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    /// Binary greyscale PGM; empty cells are black.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.cells.iter().map(|&v| if v == SENTINEL { 0 } else { (v * 255.0).round() as u8 }));
        out
    }

    /// Writes `path` as CSV and a PGM image next to it.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv())?;
        fs::write(path.with_extension("pgm"), self.to_pgm())?;
        Ok(())
    }
}

/// Runs `model` on `slide` and lays out its attention. `graph_seed` must
/// match the seed the model's graphs were built with.
pub fn attention_heatmap(model: &Model, slide: &SlideRecord, graph_seed: u64) -> Result<Heatmap> {
    if !model.kind().aggregator.has_attention() {
        return Err(Error::NoAttention(model.kind().to_string()));
    }
    let graph = build_graph(slide, &model.spec.graph_options(graph_seed), model.regions.as_ref())?;
    let prepared = PreparedGraph::new(&graph);
    let attention = model.predict(&prepared)?.attention.ok_or_else(|| Error::NoAttention(model.kind().to_string()))?;
    Heatmap::from_attention(slide, graph.node_to_patches(), &attention)
}

/// `slide_id,center_id,label,e_0,…` with shortest round-trip floats.
pub fn embeddings_csv(slides: &[SlideRecord], embeddings: &Matrix) -> Result<String> {
    if slides.len() != embeddings.rows() {
        return Err(Error::shape(format!("{} slides for {} embeddings", slides.len(), embeddings.rows())));
    }
    let mut out = String::from("slide_id,center_id,label");
    for j in 0..embeddings.cols() {
        let _ = write!(out, ",e_{j}");
    }
    out.push('\n');
    for (s, row) in slides.iter().zip(embeddings.iter_rows()) {
        let _ = write!(out, "{},{},{}", s.slide_id, s.center_id, s.label.as_u8());
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    Ok(out)
}

/// How well k-means clusters of embeddings line up with a class labelling.
#[derive(Clone, Debug, PartialEq)]
pub struct PurityReport {
    pub k: usize,
    pub purity: f64,
    /// Sorted distinct class names.
    pub classes: Vec<String>,
    /// `table[cluster][class index] = count`.
    pub table: BTreeMap<usize, BTreeMap<usize, usize>>,
}

/// Clusters `embeddings` into `k` groups and scores them against `classes`
/// (slide labels, centers or any other per-row name).
pub fn purity_report(embeddings: &Matrix, classes: &[String], k: usize, seed: u64) -> Result<PurityReport> {
    if classes.len() != embeddings.rows() {
        return Err(Error::shape(format!("{} class names for {} embeddings", classes.len(), embeddings.rows())));
    }
    let mut names: Vec<String> = classes.to_vec();
    names.sort();
    names.dedup();
    let ids: Vec<usize> = classes.iter().map(|c| names.binary_search(c).expect("present")).collect();
    let fit = kmeans(embeddings, k, seed)?;
    Ok(PurityReport {
        k,
        purity: cluster_purity(&fit.assignments, &ids)?,
        table: contingency(&fit.assignments, &ids)?,
        classes: names,
    })
}

impl PurityReport {
    pub fn to_text(&self) -> String {
        let mut out = format!("k = {}, purity = {:.4}\n", self.k, self.purity);
        let _ = write!(out, "{:>8}", "cluster");
        for c in &self.classes {
            let _ = write!(out, " {c:>10}");
        }
        out.push('\n');
        for (cluster, row) in &self.table {
            let _ = write!(out, "{cluster:>8}");
            for i in 0..self.classes.len() {
                let _ = write!(out, " {:>10}", row.get(&i).copied().unwrap_or(0));
            }
            out.push('\n');
        }
        out
    }
}
