//! With/without-sentiment comparison on identical folds and seeds.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::cv::{cross_validate, CvReport};
use super::folds::FoldPlan;
use super::metrics::METRIC_NAMES;
use super::pipeline::PipelineSpec;
use crate::data::{CommentSet, Dataset};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub model: String,
    pub metric: String,
    pub with_sentiment: f64,
    pub without_sentiment: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub with_sentiment: CvReport,
    pub without_sentiment: CvReport,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn delta(&self, model: &str, metric: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.model == model && r.metric == metric).map(|r| r.delta)
    }

    /// Heatmap grid in long format: one line per model, metric and arm.
    pub fn write_heatmap<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["model", "metric", "arm", "value"])?;
        for r in &self.rows {
            for (arm, v) in [("with_sentiment", r.with_sentiment), ("without_sentiment", r.without_sentiment)] {
                w.write_record([r.model.as_str(), r.metric.as_str(), arm, &v.to_string()])?;
            }
        }
        w.flush().map_err(|e| crate::Error::io("<heatmap>", e))?;
        Ok(())
    }

    /// Per model and metric: both arm means and their difference.
    pub fn write_deltas<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["model", "metric", "with_sentiment", "without_sentiment", "delta"])?;
        for r in &self.rows {
            w.write_record([
                r.model.clone(),
                r.metric.clone(),
                r.with_sentiment.to_string(),
                r.without_sentiment.to_string(),
                r.delta.to_string(),
            ])?;
        }
        w.flush().map_err(|e| crate::Error::io("<deltas>", e))?;
        Ok(())
    }

    pub fn arms(&self) -> [(&'static str, &CvReport); 2] {
        [("with_sentiment", &self.with_sentiment), ("without_sentiment", &self.without_sentiment)]
    }
}

/// One row per model, fold and arm with every metric as a column.
pub fn write_flat<W: Write>(arms: &[(&str, &CvReport)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["model", "fold", "arm"];
    header.extend(METRIC_NAMES);
    w.write_record(&header)?;
    for (arm, cv) in arms {
        for fold in &cv.folds {
            for r in &fold.reports {
                let mut rec = vec![r.model.clone(), fold.fold.to_string(), arm.to_string()];
                rec.extend(r.values().iter().map(f64::to_string));
                w.write_record(&rec)?;
            }
        }
    }
    w.flush().map_err(|e| crate::Error::io("<flat csv>", e))?;
    Ok(())
}

/// Runs `spec` twice on `plan`: once with the sentiment block and once without.
/// The families and ensemble flag come from `spec`.
pub fn ablation(ds: &Dataset, cs: &CommentSet, spec: &PipelineSpec, plan: &FoldPlan) -> Result<AblationReport> {
    let mut with = spec.clone();
    with.sentiment.enabled = true;
    let mut without = spec.clone();
    without.sentiment.enabled = false;
    let with_sentiment = cross_validate(ds, cs, &with, plan)?;
    let without_sentiment = cross_validate(ds, cs, &without, plan)?;
    let mut rows = Vec::new();
    for tag in &with_sentiment.tags {
        for metric in METRIC_NAMES {
            let a = with_sentiment.mean(tag, metric).unwrap_or(0.0);
            let b = without_sentiment.mean(tag, metric).unwrap_or(0.0);
            rows.push(AblationRow {
                model: tag.clone(),
                metric: metric.to_string(),
                with_sentiment: a,
                without_sentiment: b,
                delta: a - b,
            });
        }
    }
    Ok(AblationReport { with_sentiment, without_sentiment, rows })
}
