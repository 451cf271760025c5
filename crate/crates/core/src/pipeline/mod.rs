//! Training, cross-validation, evaluation and report export.

mod cv;
mod export;
mod metrics;
mod train;

pub use cv::{
    cross_validate, fit_regions_on, metric_index, prepare_graphs, CvConfig, CvReport, FoldOutcome, InterventionConfig,
    InterventionOutcome, METRICS_HEADER,
};
pub use export::{attention_heatmap, embeddings_csv, purity_report, Heatmap, PurityReport, SENTINEL};
pub use metrics::{aggregate, auc, auc_brute_force, mean_std, MetricsReport, METRIC_NAMES, THRESHOLD};
pub use train::{extract_bag_embeddings, train_stage2, train_stage3, TrainConfig, TrainHistory};
