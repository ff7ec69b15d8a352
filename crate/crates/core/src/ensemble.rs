//! Unweighted averaging of the boosted-tree, forest and logistic members, the
//! cross-entropy objective, and fusion of tabular and sentiment features.

use std::collections::HashMap;
use std::io::Write;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::models::{self, ForestParams, GbdtParams, HyperParams, LogisticParams, Predictor, TrainedModel};
use crate::sentiment::{feature_block, FeatureBlockOptions, SentimentFeatures};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Mean of the three member probabilities.
pub fn average_probs(p_xg: f64, p_rf: f64, p_lr: f64) -> Result<f64> {
    for p in [p_xg, p_rf, p_lr] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::OutOfRange(p));
        }
    }
    Ok(mean3(p_xg, p_rf, p_lr))
}

#[inline]
fn mean3(a: f64, b: f64, c: f64) -> f64 {
    // summing in sorted order makes the result exactly permutation-invariant;
    // the clamp guards the last ulp so the mean never leaves [min, max]
    let mut v = [a, b, c];
    v.sort_by(f64::total_cmp);
    ((v[0] + v[1] + v[2]) / 3.0).clamp(v[0], v[2])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    Sum,
    Mean,
}

const CLAMP: f64 = 1e-12;

/// Binary cross-entropy with probabilities clamped to `[1e-12, 1 - 1e-12]`.
pub fn bce_loss(y: &[u8], p: &[f64], reduction: Reduction) -> Result<f64> {
    if y.len() != p.len() {
        return Err(Error::LengthMismatch(y.len(), p.len()));
    }
    if let Some((row, &v)) = y.iter().enumerate().find(|(_, &v)| v > 1) {
        return Err(Error::BadLabel { row, value: v.to_string() });
    }
    let total: f64 = y
        .iter()
        .zip(p)
        .map(|(&t, &q)| {
            let q = q.clamp(CLAMP, 1.0 - CLAMP);
            if t == 1 {
                -q.ln()
            } else {
                -(1.0 - q).ln()
            }
        })
        .sum();
    Ok(match reduction {
        Reduction::Sum => total,
        Reduction::Mean if y.is_empty() => 0.0,
        Reduction::Mean => total / y.len() as f64,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleParams {
    pub gbdt: GbdtParams,
    pub random_forest: ForestParams,
    pub logistic: LogisticParams,
}

impl EnsembleParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.gbdt.seed = seed;
        self.random_forest.seed = seed;
        self
    }
}

/// The three members, all trained on the same columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub feature_names: Vec<String>,
    pub gbdt: TrainedModel,
    pub random_forest: TrainedModel,
    pub logistic: TrainedModel,
}

impl Predictor for EnsembleModel {
    fn predict_row(&self, x: &[f64]) -> f64 {
        let [a, b, c] = self.member_row(x);
        mean3(a, b, c)
    }
}

impl EnsembleModel {
    pub fn train(x: &FeatureMatrix, y: &[u8], params: &EnsembleParams) -> Result<Self> {
        Ok(Self {
            feature_names: x.column_names.clone(),
            gbdt: models::train(&HyperParams::Gbdt(params.gbdt), x, y)?,
            random_forest: models::train(&HyperParams::RandomForest(params.random_forest), x, y)?,
            logistic: models::train(&HyperParams::Logistic(params.logistic), x, y)?,
        })
    }

    /// `[p_xg, p_rf, p_lr]` for one row.
    pub fn member_row(&self, x: &[f64]) -> [f64; 3] {
        [self.gbdt.predict_row(x), self.random_forest.predict_row(x), self.logistic.predict_row(x)]
    }

    pub fn member_probs(&self, x: &FeatureMatrix) -> Result<Vec<[f64; 3]>> {
        models::check_features(&self.feature_names, x)?;
        let rows: Vec<&[f64]> = x.rows().collect();
        Ok(rows.par_iter().map(|r| self.member_row(r)).collect())
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        Ok(self.member_probs(x)?.into_iter().map(|[a, b, c]| mean3(a, b, c)).collect())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeMode {
    /// Concatenate tabular then sentiment columns, then one ensemble.
    #[default]
    FeatureConcat,
    /// Average a tabular-only ensemble with a sentiment-only ensemble.
    OutputAverage,
}

/// Sentiment rows aligned to `dd` row order; absent students get neutral rows.
/// A sentiment row for a student missing from `dd` is an error.
pub fn align_sentiment(dd: &FeatureMatrix, sa: &[SentimentFeatures]) -> Result<Vec<SentimentFeatures>> {
    let by_id: HashMap<&str, &SentimentFeatures> = sa.iter().map(|r| (r.student_id.as_str(), r)).collect();
    let known: std::collections::HashSet<&str> = dd.row_ids.iter().map(String::as_str).collect();
    if let Some(r) = sa.iter().find(|r| !known.contains(r.student_id.as_str())) {
        return Err(Error::UnknownStudent(r.student_id.clone()));
    }
    Ok(dd
        .row_ids
        .iter()
        .map(|id| by_id.get(id.as_str()).map_or_else(|| SentimentFeatures::neutral(id), |r| (*r).clone()))
        .collect())
}

/// Tabular columns followed by the sentiment block, joined on student id.
pub fn merge_features(
    dd: &FeatureMatrix,
    sa: &[SentimentFeatures],
    term_start: NaiveDate,
    opts: &FeatureBlockOptions,
) -> Result<FeatureMatrix> {
    let aligned = align_sentiment(dd, sa)?;
    dd.hconcat(&feature_block(&aligned, term_start, opts))
}

/// Ensemble probability per `dd` row after fusing in the sentiment block.
pub fn merge_predict(
    dd: &FeatureMatrix,
    sa: &[SentimentFeatures],
    term_start: NaiveDate,
    opts: &FeatureBlockOptions,
    ens: &EnsembleModel,
) -> Result<Vec<f64>> {
    ens.predict_proba(&merge_features(dd, sa, term_start, opts)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub student_id: String,
    pub p_xg: f64,
    pub p_rf: f64,
    pub p_lr: f64,
    pub p_ensemble: f64,
    pub predicted_label: u8,
    pub threshold: f64,
}

pub fn prediction_rows(ids: &[String], members: &[[f64; 3]], threshold: f64) -> Vec<PredictionRow> {
    ids.iter()
        .zip(members)
        .map(|(id, &[a, b, c])| {
            let p = mean3(a, b, c);
            PredictionRow {
                student_id: id.clone(),
                p_xg: a,
                p_rf: b,
                p_lr: c,
                p_ensemble: p,
                predicted_label: u8::from(p >= threshold),
                threshold,
            }
        })
        .collect()
}

pub fn write_predictions<W: Write>(rows: &[PredictionRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["student_id", "p_xg", "p_rf", "p_lr", "p_ensemble", "predicted_label", "threshold"])?;
    for r in rows {
        w.write_record([
            r.student_id.clone(),
            r.p_xg.to_string(),
            r.p_rf.to_string(),
            r.p_lr.to_string(),
            r.p_ensemble.to_string(),
            r.predicted_label.to_string(),
            r.threshold.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<predictions>", e))?;
    Ok(())
}
