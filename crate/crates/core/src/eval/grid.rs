//! Exhaustive hyper-parameter search under a fixed fold plan.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::cv::{aggregate, check_plan, fold_seed, split, MetricSummary};
use super::folds::FoldPlan;
use super::metrics::{evaluate, MetricsReport};
use super::pipeline::{fit_features, labels_of, PipelineSpec};
use crate::data::{CommentSet, Dataset};
use crate::error::{Error, Result};
use crate::models::{self, HyperParams, ModelFamily};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub config: BTreeMap<String, Value>,
    /// Canonical JSON of `config`; the final tie-break.
    pub key: String,
    pub params: HyperParams,
    pub folds: Vec<MetricsReport>,
    pub aggregate: Vec<MetricSummary>,
}

impl GridRow {
    pub fn mean(&self, metric: &str) -> f64 {
        self.aggregate.iter().find(|s| s.metric == metric).map_or(0.0, |s| s.mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub family: ModelFamily,
    pub rows: Vec<GridRow>,
    pub best: usize,
}

impl GridReport {
    pub fn best_row(&self) -> &GridRow {
        &self.rows[self.best]
    }
}

fn cartesian(grid: &BTreeMap<String, Vec<Value>>) -> Vec<BTreeMap<String, Value>> {
    let mut out = vec![BTreeMap::new()];
    for (k, values) in grid {
        out = out
            .into_iter()
            .flat_map(|base| {
                values.iter().map(move |v| {
                    let mut c = base.clone();
                    c.insert(k.clone(), v.clone());
                    c
                })
            })
            .collect();
    }
    out
}

/// Highest mean accuracy, then mean AUC, then the smaller config key.
fn better(a: &GridRow, b: &GridRow) -> bool {
    let (acc_a, acc_b) = (a.mean("accuracy"), b.mean("accuracy"));
    if acc_a != acc_b {
        return acc_a > acc_b;
    }
    let (auc_a, auc_b) = (a.mean("auc"), b.mean("auc"));
    if auc_a != auc_b {
        return auc_a > auc_b;
    }
    a.key < b.key
}

pub fn grid_search(
    ds: &Dataset,
    cs: &CommentSet,
    spec: &PipelineSpec,
    family: ModelFamily,
    grid: &BTreeMap<String, Vec<Value>>,
    plan: &FoldPlan,
) -> Result<GridReport> {
    if grid.is_empty() || grid.values().any(Vec::is_empty) {
        return Err(Error::EmptyGrid);
    }
    check_plan(ds, plan)?;
    let configs = cartesian(grid);
    let params: Vec<HyperParams> =
        configs.iter().map(|c| spec.params.get(family).with_overrides(c)).collect::<Result<_>>()?;
    for p in &params {
        p.validate()?;
    }

    // feature transforms do not depend on the model config: fit once per fold
    let prepared = plan
        .eval_folds
        .par_iter()
        .map(|&fold| {
            let (train, test) = split(ds, plan, fold);
            let seed = fold_seed(spec.seed, fold);
            let train_ds = ds.subset(&train);
            let (features, blocks) = fit_features(&train_ds, &cs.subset(&train), spec, seed)?;
            let x_train = blocks.concat()?;
            let test_ds = ds.subset(&test);
            let x_test = features.blocks(spec, &test_ds, &cs.subset(&test))?.concat()?;
            Ok((fold, seed, x_train, labels_of(&train_ds)?, x_test, labels_of(&test_ds)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> = (0..params.len()).flat_map(|c| (0..prepared.len()).map(move |f| (c, f))).collect();
    let tag = family.as_str();
    let reports: Vec<MetricsReport> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let (fold, seed, x_train, y_train, x_test, y_test) = &prepared[f];
            let hp = params[c].clone().with_seed(PipelineSpec::family_seed(family, PipelineSpec::model_seed(*seed)));
            let model = models::train(&hp, x_train, y_train)?;
            let p = models::predict_proba(&model, x_test)?;
            Ok(evaluate(y_test, &p, spec.threshold)?.tagged(tag, Some(*fold)))
        })
        .collect::<Result<_>>()?;

    let n_folds = prepared.len();
    let tags = [tag.to_string()];
    let rows: Vec<GridRow> = configs
        .into_iter()
        .zip(params)
        .enumerate()
        .map(|(c, (config, params))| {
            let folds = reports[c * n_folds..(c + 1) * n_folds].to_vec();
            let agg = aggregate(&tags, &folds.iter().collect::<Vec<_>>());
            let key = serde_json::to_string(&config).expect("json values serialize");
            GridRow { config, key, params, folds, aggregate: agg }
        })
        .collect();
    let mut best = 0;
    for i in 1..rows.len() {
        if better(&rows[i], &rows[best]) {
            best = i;
        }
    }
    Ok(GridReport { family, rows, best })
}
