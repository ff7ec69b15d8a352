//! Grouped cross-validation, metrics, grid search and the sentiment ablation.

pub mod ablation;
pub mod cv;
pub mod folds;
pub mod grid;
pub mod metrics;
pub mod pipeline;

pub use ablation::{ablation, write_flat, AblationReport, AblationRow};
pub use cv::{cross_validate, fold_seed, CvReport, FoldOutcome, MetricSummary};
pub use folds::{column_holdout, group_kfold, FoldPlan};
pub use grid::{grid_search, GridReport, GridRow};
pub use metrics::{auc, confusion, evaluate, metrics, ConfusionMatrix, MetricsReport, METRIC_NAMES};
pub use pipeline::{
    fit_fold, fit_pipeline, FittedPipeline, ModelParams, PipelineSpec, Predictions, SelectionSpec, SentimentSource,
    SentimentSpec, ENSEMBLE_TAG,
};

pub const DEFAULT_K: usize = 5;
