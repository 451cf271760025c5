//! Browser front end for the gmil engine: generate a synthetic cohort, look
//! at one slide's graph, train a small model and inspect its attention.
//!
//! [`Session`] holds the logic and is plain Rust; [`Demo`] wraps it for
//! JavaScript and returns JSON strings.

use gmil::data::SlideRecord;
use gmil::graph::{build_graph, GraphKind, GlobalRegions};
use gmil::model::{Model, ModelKind, ModelSpec};
use gmil::pipeline::{attention_heatmap, fit_regions_on, prepare_graphs, train_stage2, TrainConfig};
use gmil::synth::{generate_slides, SynthConfig, SynthTask};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const SIDE: usize = 10;
const FEATURES: usize = 6;

pub struct Session {
    seed: u64,
    slides: Vec<SlideRecord>,
    model: Option<Model>,
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

impl Session {
    /// Two centers of eight slides each on a 10×10 grid.
    pub fn generate(seed: u64, task: &str, rho: f64, shift: f64) -> Result<Self, String> {
        let cfg = SynthConfig {
            n_centers: 2,
            slides_per_center: 8,
            height: SIDE,
            width: SIDE,
            feature_dim: FEATURES,
            radius: 2,
            shift,
            rho,
            task: task.parse::<SynthTask>().map_err(err)?,
            noise_std: 0.3,
            seed,
        };
        let data = generate_slides(&cfg).map_err(err)?;
        Ok(Self { seed, slides: data.slides, model: None })
    }

    pub fn slides_json(&self) -> Value {
        let rows: Vec<Value> = self
            .slides
            .iter()
            .map(|s| json!({"id": s.slide_id, "center": s.center_id, "label": s.label.as_u8(), "patches": s.n_patches()}))
            .collect();
        json!(rows)
    }

    fn slide(&self, index: usize) -> Result<&SlideRecord, String> {
        self.slides.get(index).ok_or_else(|| format!("no slide {index}"))
    }

    fn spec(&self, kind: ModelKind) -> ModelSpec {
        ModelSpec { hidden: 16, layers: 2, att_dim: 16, k_regions: 6, k_centroids: 5, ..ModelSpec::new(kind, FEATURES) }
    }

    fn global_regions(&self, spec: &ModelSpec) -> Result<GlobalRegions, String> {
        let all: Vec<usize> = (0..self.slides.len()).collect();
        fit_regions_on(&self.slides, &all, spec, self.seed).map_err(err)
    }

    /// Nodes placed at the mean grid position of their patches.
    pub fn graph_json(&self, index: usize, kind: &str) -> Result<Value, String> {
        let kind: GraphKind = kind.parse().map_err(err)?;
        let slide = self.slide(index)?;
        let spec = self.spec("patch-gcn-abmil".parse::<ModelKind>().map_err(err)?);
        let spec = ModelSpec { kind: ModelKind { graph: kind, ..spec.kind }, ..spec };
        let regions = match kind {
            GraphKind::RegionGlobal => Some(self.global_regions(&spec)?),
            _ => None,
        };
        let g = build_graph(slide, &spec.graph_options(self.seed), regions.as_ref()).map_err(err)?;
        let coords = slide.coords();
        let nodes: Vec<Value> = g
            .node_to_patches()
            .iter()
            .map(|patches| {
                let n = patches.len() as f64;
                let x = patches.iter().map(|&p| coords[p].x as f64).sum::<f64>() / n;
                let y = patches.iter().map(|&p| coords[p].y as f64).sum::<f64>() / n;
                json!({"x": x, "y": y, "patches": patches})
            })
            .collect();
        let edges: Vec<[usize; 2]> = g.edges().iter().map(|&(a, b)| [a, b]).collect();
        Ok(json!({"width": SIDE, "height": SIDE, "nodes": nodes, "edges": edges}))
    }

    /// Trains `model` on every slide and reports losses and training-set
    /// probabilities.
    pub fn train(&mut self, model: &str, epochs: usize) -> Result<Value, String> {
        let kind: ModelKind = model.parse().map_err(err)?;
        let spec = self.spec(kind);
        let regions = match kind.graph {
            GraphKind::RegionGlobal => Some(self.global_regions(&spec)?),
            _ => None,
        };
        let graphs = prepare_graphs(&self.slides, &spec, self.seed, regions.as_ref()).map_err(err)?;
        let labels: Vec<f64> = self.slides.iter().map(|s| s.label.as_f64()).collect();
        let mut m = Model::new(spec, self.seed).map_err(err)?;
        m.regions = regions;
        let cfg = TrainConfig { epochs, accumulation: 4, lr_mil: 1e-2, lr_gnn: 1e-2, ..TrainConfig::new(self.seed) };
        let history = train_stage2(&mut m, &graphs, &labels, &cfg).map_err(err)?;
        let probs = graphs.iter().map(|g| m.predict(g).map(|p| p.prob)).collect::<gmil::Result<Vec<f64>>>().map_err(err)?;
        let correct = probs.iter().zip(&labels).filter(|(p, y)| (**p >= 0.5) == (**y == 1.0)).count();
        self.model = Some(m);
        Ok(json!({"losses": history.epoch_losses, "probs": probs, "accuracy": correct as f64 / labels.len() as f64}))
    }

    /// Normalised attention of the trained model, `-1` where no patch.
    pub fn heatmap_json(&self, index: usize) -> Result<Value, String> {
        let model = self.model.as_ref().ok_or("train a model first")?;
        let h = attention_heatmap(model, self.slide(index)?, self.seed).map_err(err)?;
        Ok(json!({"width": h.width, "height": h.height, "cells": h.cells}))
    }
}

#[wasm_bindgen]
pub struct Demo(Session);

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, task: &str, rho: f64, shift: f64) -> Result<Demo, String> {
        Session::generate(seed, task, rho, shift).map(Demo)
    }

    pub fn slides(&self) -> String {
        self.0.slides_json().to_string()
    }

    pub fn graph(&self, index: usize, kind: &str) -> Result<String, String> {
        self.0.graph_json(index, kind).map(|v| v.to_string())
    }

    pub fn train(&mut self, model: &str, epochs: usize) -> Result<String, String> {
        self.0.train(model, epochs).map(|v| v.to_string())
    }

    pub fn heatmap(&self, index: usize) -> Result<String, String> {
        self.0.heatmap_json(index).map(|v| v.to_string())
    }
}
