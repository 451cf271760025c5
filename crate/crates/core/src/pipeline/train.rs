use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::gnn::PreparedGraph;
use crate::intervention::{ConfounderDictionary, InterventionHead};
use crate::model::Model;
use crate::numerics::{Adam, AdamConfig, Matrix, ParamGroup, ParamStore, Tape, Var};
use crate::rng::{self, stream};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Slides whose gradients are summed before each optimizer step.
    pub accumulation: usize,
    pub lr_mil: f64,
    pub lr_gnn: f64,
    pub wd_mil: f64,
    pub wd_gnn: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        Self { epochs: 50, accumulation: 8, lr_mil: 1e-4, lr_gnn: 1e-3, wd_mil: 1e-4, wd_gnn: 5e-4, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.accumulation == 0 {
            return Err(Error::Config("train.accumulation must be at least 1".into()));
        }
        if !(self.lr_mil > 0.0 && self.lr_gnn > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(self.wd_mil >= 0.0 && self.wd_gnn >= 0.0) {
            return Err(Error::Config("weight decay must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    /// Mean per-slide loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Optimizer steps taken.
    pub steps: u64,
}

/// Per-group Adam instances sharing one step schedule.
struct Optimizers(Vec<Adam>);

impl Optimizers {
    fn new(store: &ParamStore, groups: &[(ParamGroup, f64, f64)]) -> Self {
        Self(
            groups
                .iter()
                .filter_map(|&(g, lr, wd)| {
                    let ids = store.ids_in(g);
                    (!ids.is_empty()).then(|| Adam::new(AdamConfig::new(lr, wd), store, ids))
                })
                .collect(),
        )
    }

    fn step(&mut self, store: &mut ParamStore) {
        for opt in &mut self.0 {
            opt.step(store);
        }
    }
}

/// Shared loop: batch size one, summed gradients, a step every
/// `accumulation` samples and once more at epoch end for any remainder.
fn run_epochs(
    n: usize,
    cfg: &TrainConfig,
    store: &mut ParamStore,
    optimizers: &mut Optimizers,
    mut sample_loss: impl FnMut(usize, &mut Tape, &ParamStore) -> Result<Var>,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::Empty("no training samples".into()));
    }
    let mut shuffle = rng::seeded(rng::derive(cfg.seed, stream::SHUFFLE));
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = TrainHistory::default();
    store.zero_grads();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        let mut pending = 0;
        for &i in &order {
            let mut tape = Tape::new();
            let loss = sample_loss(i, &mut tape, store)?;
            total += tape.value(loss).scalar();
            tape.backward(loss, store)?;
            pending += 1;
            if pending == cfg.accumulation {
                optimizers.step(store);
                history.steps += 1;
                pending = 0;
            }
        }
        if pending > 0 {
            optimizers.step(store);
            history.steps += 1;
        }
        history.epoch_losses.push(total / n as f64);
    }
    Ok(history)
}

/// Trains a bag classifier end to end with binary cross-entropy.
pub fn train_stage2(model: &mut Model, graphs: &[PreparedGraph], labels: &[f64], cfg: &TrainConfig) -> Result<TrainHistory> {
    if graphs.len() != labels.len() {
        return Err(Error::shape(format!("{} graphs for {} labels", graphs.len(), labels.len())));
    }
    let mut optimizers = Optimizers::new(
        &model.store,
        &[(ParamGroup::Gnn, cfg.lr_gnn, cfg.wd_gnn), (ParamGroup::Mil, cfg.lr_mil, cfg.wd_mil)],
    );
    let mut store = std::mem::take(&mut model.store);
    let result = run_epochs(graphs.len(), cfg, &mut store, &mut optimizers, |i, tape, s| {
        let out = model.forward_with(tape, s, &graphs[i])?;
        tape.bce(out.prob, &[labels[i]])
    });
    model.store = store;
    result
}

/// Bag embeddings, one row per graph, without recording gradients.
pub fn extract_bag_embeddings(model: &Model, graphs: &[PreparedGraph]) -> Result<Matrix> {
    let d = model.spec.embedding_dim();
    let mut data = Vec::with_capacity(graphs.len() * d);
    for g in graphs {
        data.extend(model.predict(g)?.embedding);
    }
    Matrix::from_vec(graphs.len(), d, data)
}

/// Trains only the intervention head on fixed bag embeddings, with the MIL
/// learning rate and weight decay.
pub fn train_stage3(
    head: &mut InterventionHead,
    dict: &ConfounderDictionary,
    embeddings: &Matrix,
    labels: &[f64],
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    if embeddings.rows() != labels.len() {
        return Err(Error::shape(format!("{} embeddings for {} labels", embeddings.rows(), labels.len())));
    }
    let mut optimizers = Optimizers::new(&head.store, &[(ParamGroup::Intervention, cfg.lr_mil, cfg.wd_mil)]);
    let mut store = std::mem::take(&mut head.store);
    let result = run_epochs(embeddings.rows(), cfg, &mut store, &mut optimizers, |i, tape, s| {
        let out = head.forward_with(tape, s, embeddings.row(i), dict)?;
        tape.bce(out.prob, &[labels[i]])
    });
    head.store = store;
    result
}
