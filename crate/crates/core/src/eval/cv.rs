//! K-fold (or holdout) evaluation of a full pipeline.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::FoldPlan;
use super::metrics::{evaluate, MetricsReport, METRIC_NAMES};
use super::pipeline::{fit_fold, PipelineSpec, Predictions};
use crate::data::{CommentSet, Dataset};
use crate::error::{Error, Result};
use crate::rng;

const FOLD_STREAM: u64 = 0x666f_6c64;

/// Seed handed to everything fit inside `fold`.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    rng::derive_path(seed, &[FOLD_STREAM, fold as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub reports: Vec<MetricsReport>,
    pub predictions: Predictions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub model: String,
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation over folds (0 for a single fold).
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub tags: Vec<String>,
    pub folds: Vec<FoldOutcome>,
    pub aggregate: Vec<MetricSummary>,
}

impl CvReport {
    pub fn mean(&self, model: &str, metric: &str) -> Option<f64> {
        self.aggregate.iter().find(|s| s.model == model && s.metric == metric).map(|s| s.mean)
    }

    pub fn reports_for<'a>(&'a self, model: &'a str) -> impl Iterator<Item = &'a MetricsReport> + 'a {
        self.folds.iter().flat_map(|f| f.reports.iter()).filter(move |r| r.model == model)
    }
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub(crate) fn aggregate(tags: &[String], reports: &[&MetricsReport]) -> Vec<MetricSummary> {
    let mut out = Vec::new();
    for tag in tags {
        for (k, name) in METRIC_NAMES.iter().enumerate() {
            let xs: Vec<f64> = reports.iter().filter(|r| &r.model == tag).map(|r| r.values()[k]).collect();
            let (mean, std) = mean_std(&xs);
            out.push(MetricSummary { model: tag.clone(), metric: name.to_string(), mean, std });
        }
    }
    out
}

pub(crate) fn check_plan(ds: &Dataset, plan: &FoldPlan) -> Result<()> {
    match ds.ids().into_iter().find(|id| plan.fold_of(id).is_none()) {
        Some(id) => Err(Error::UnknownStudent(id)),
        None => Ok(()),
    }
}

/// Restricts `plan`'s sets to students present in `ds`.
pub(crate) fn split(ds: &Dataset, plan: &FoldPlan, fold: usize) -> (HashSet<String>, HashSet<String>) {
    let present: HashSet<String> = ds.ids().into_iter().collect();
    let train = plan.train_ids(fold).intersection(&present).cloned().collect();
    let test = plan.test_ids(fold).intersection(&present).cloned().collect();
    (train, test)
}

pub fn cross_validate(ds: &Dataset, cs: &CommentSet, spec: &PipelineSpec, plan: &FoldPlan) -> Result<CvReport> {
    check_plan(ds, plan)?;
    let tags = spec.tags();
    let folds: Vec<FoldOutcome> = plan
        .eval_folds
        .par_iter()
        .map(|&fold| {
            let (train, test) = split(ds, plan, fold);
            let fitted = fit_fold(ds, cs, spec, &train, fold_seed(spec.seed, fold))?;
            let test_ds = ds.subset(&test);
            let predictions = fitted.predict(&test_ds, &cs.subset(&test))?;
            let y = super::pipeline::labels_of(&test_ds)?;
            let reports = tags
                .iter()
                .map(|t| Ok(evaluate(&y, &predictions.by_model[t], spec.threshold)?.tagged(t, Some(fold))))
                .collect::<Result<Vec<_>>>()?;
            Ok(FoldOutcome { fold, n_train: train.len(), n_test: test.len(), reports, predictions })
        })
        .collect::<Result<_>>()?;
    let all: Vec<&MetricsReport> = folds.iter().flat_map(|f| f.reports.iter()).collect();
    let aggregate = aggregate(&tags, &all);
    Ok(CvReport { tags, folds, aggregate })
}
