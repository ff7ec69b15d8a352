//! Shapley attributions with an interventional value function: `v(S)` is the mean
//! model output over background rows, with the features in `S` replaced by the
//! instance's values. Exact enumeration for small feature counts, permutation
//! sampling otherwise, and importance ranking by mean absolute attribution.

use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::models::Predictor;
use crate::rng;

pub const MAX_EXACT_FEATURES: usize = 20;
pub const MAX_RETRAIN_FEATURES: usize = 4;
pub const DEFAULT_BACKGROUND_SIZE: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    pub instance_id: String,
    pub feature_names: Vec<String>,
    /// Mean model output over the background set.
    pub base_value: f64,
    pub values: Vec<f64>,
    /// Per-feature standard error; sampling mode only.
    pub std_errors: Option<Vec<f64>>,
}

impl ShapExplanation {
    pub fn total(&self) -> f64 {
        self.base_value + self.values.iter().sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ShapMethod {
    Exact,
    Sampling { n_permutations: usize },
    /// Exact up to `max_exact` features, sampling beyond.
    Auto { max_exact: usize, n_permutations: usize },
}

impl Default for ShapMethod {
    fn default() -> Self {
        ShapMethod::Auto { max_exact: 10, n_permutations: 64 }
    }
}

fn names_for(m: usize, names: Option<&[String]>) -> Vec<String> {
    names.map_or_else(|| (0..m).map(|j| format!("x{j}")).collect(), <[String]>::to_vec)
}

fn check_background(x: &[f64], background: &[Vec<f64>]) -> Result<()> {
    if background.is_empty() {
        return Err(Error::EmptyBackground);
    }
    if let Some(b) = background.iter().find(|b| b.len() != x.len()) {
        return Err(Error::LengthMismatch(x.len(), b.len()));
    }
    Ok(())
}

/// `1 / (m * C(m-1, s))` = `s! (m-s-1)! / m!`.
fn shapley_weights(m: usize) -> Vec<f64> {
    let mut binom = vec![1.0f64; m];
    for s in 1..m {
        binom[s] = binom[s - 1] * (m - s) as f64 / s as f64;
    }
    binom.iter().map(|c| 1.0 / (m as f64 * c)).collect()
}

/// Exact attributions by enumerating all `2^m` coalitions.
pub fn shap_exact<P: Predictor + ?Sized>(
    model: &P,
    x: &[f64],
    background: &[Vec<f64>],
    instance_id: &str,
    feature_names: Option<&[String]>,
) -> Result<ShapExplanation> {
    let m = x.len();
    if m > MAX_EXACT_FEATURES {
        return Err(Error::TooManyFeatures { got: m, max: MAX_EXACT_FEATURES });
    }
    check_background(x, background)?;
    let nb = background.len() as f64;
    let v: Vec<f64> = (0..1usize << m)
        .into_par_iter()
        .map(|mask| {
            let mut z = vec![0.0; m];
            let mut total = 0.0;
            for b in background {
                for j in 0..m {
                    z[j] = if mask >> j & 1 == 1 { x[j] } else { b[j] };
                }
                total += model.predict_row(&z);
            }
            total / nb
        })
        .collect();
    let w = shapley_weights(m);
    let mut values = vec![0.0; m];
    for (j, phi) in values.iter_mut().enumerate() {
        let bit = 1usize << j;
        for mask in 0..1usize << m {
            if mask & bit == 0 {
                let d = v[mask | bit] - v[mask];
                if d != 0.0 {
                    *phi += w[mask.count_ones() as usize] * d;
                }
            }
        }
    }
    Ok(ShapExplanation {
        instance_id: instance_id.to_string(),
        feature_names: names_for(m, feature_names),
        base_value: v[0],
        values,
        std_errors: None,
    })
}

/// Monte-Carlo attributions from `n_permutations` uniform feature orderings, each
/// averaged over every background row.
pub fn shap_sampling<P: Predictor + ?Sized>(
    model: &P,
    x: &[f64],
    background: &[Vec<f64>],
    n_permutations: usize,
    seed: u64,
    instance_id: &str,
    feature_names: Option<&[String]>,
) -> Result<ShapExplanation> {
    let m = x.len();
    check_background(x, background)?;
    if n_permutations == 0 {
        return Err(Error::BadConfig("n_permutations must be at least 1".into()));
    }
    let nb = background.len() as f64;
    let per_perm: Vec<(Vec<f64>, f64)> = (0..n_permutations)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::rng(rng::derive_path(seed, &[rng::stream::SHAP, k as u64]));
            let mut order: Vec<usize> = (0..m).collect();
            order.shuffle(&mut r);
            let mut contrib = vec![0.0; m];
            let mut base = 0.0;
            for b in background {
                let mut z = b.clone();
                let mut prev = model.predict_row(&z);
                base += prev;
                for &j in &order {
                    z[j] = x[j];
                    let cur = model.predict_row(&z);
                    contrib[j] += cur - prev;
                    prev = cur;
                }
            }
            contrib.iter_mut().for_each(|c| *c /= nb);
            (contrib, base / nb)
        })
        .collect();
    let n = n_permutations as f64;
    let mut values = vec![0.0; m];
    for (c, _) in &per_perm {
        for j in 0..m {
            values[j] += c[j];
        }
    }
    values.iter_mut().for_each(|v| *v /= n);
    let std_errors = (0..m)
        .map(|j| {
            if n_permutations < 2 {
                return 0.0;
            }
            let ss: f64 = per_perm.iter().map(|(c, _)| (c[j] - values[j]).powi(2)).sum();
            (ss / (n - 1.0)).sqrt() / n.sqrt()
        })
        .collect();
    Ok(ShapExplanation {
        instance_id: instance_id.to_string(),
        feature_names: names_for(m, feature_names),
        // identical in every permutation
        base_value: per_perm[0].1,
        values,
        std_errors: Some(std_errors),
    })
}

pub fn shap_with<P: Predictor + ?Sized>(
    model: &P,
    x: &[f64],
    background: &[Vec<f64>],
    method: ShapMethod,
    seed: u64,
    instance_id: &str,
    feature_names: Option<&[String]>,
) -> Result<ShapExplanation> {
    match method {
        ShapMethod::Exact => shap_exact(model, x, background, instance_id, feature_names),
        ShapMethod::Sampling { n_permutations } => {
            shap_sampling(model, x, background, n_permutations, seed, instance_id, feature_names)
        }
        ShapMethod::Auto { max_exact, n_permutations } => {
            if x.len() <= max_exact.min(MAX_EXACT_FEATURES) {
                shap_exact(model, x, background, instance_id, feature_names)
            } else {
                shap_sampling(model, x, background, n_permutations, seed, instance_id, feature_names)
            }
        }
    }
}

/// Explains selected rows of `x`; each instance gets its own sampling seed.
pub fn explain_rows<P: Predictor + ?Sized>(
    model: &P,
    x: &FeatureMatrix,
    rows: &[usize],
    background: &[Vec<f64>],
    method: ShapMethod,
    seed: u64,
) -> Result<Vec<ShapExplanation>> {
    rows.iter()
        .map(|&i| {
            let s = rng::derive_path(seed, &[rng::stream::SHAP, u64::MAX, i as u64]);
            shap_with(model, x.row(i), background, method, s, &x.row_ids[i], Some(&x.column_names))
        })
        .collect()
}

/// Retrain-per-coalition attributions: `fit(S)` returns a predictor over the
/// sub-vector of features in `S` (ascending). Cross-check oracle for tiny `m`.
pub fn shap_retrain<F>(x: &[f64], instance_id: &str, mut fit: F) -> Result<ShapExplanation>
where
    F: FnMut(&[usize]) -> Box<dyn Fn(&[f64]) -> f64>,
{
    let m = x.len();
    if m > MAX_RETRAIN_FEATURES {
        return Err(Error::TooManyFeatures { got: m, max: MAX_RETRAIN_FEATURES });
    }
    let v: Vec<f64> = (0..1usize << m)
        .map(|mask| {
            let s: Vec<usize> = (0..m).filter(|j| mask >> j & 1 == 1).collect();
            let sub: Vec<f64> = s.iter().map(|&j| x[j]).collect();
            fit(&s)(&sub)
        })
        .collect();
    let w = shapley_weights(m);
    let values = (0..m)
        .map(|j| {
            let bit = 1usize << j;
            (0..1usize << m).filter(|mask| mask & bit == 0).map(|mask| w[mask.count_ones() as usize] * (v[mask | bit] - v[mask])).sum()
        })
        .collect();
    Ok(ShapExplanation {
        instance_id: instance_id.to_string(),
        feature_names: names_for(m, None),
        base_value: v[0],
        values,
        std_errors: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRanking {
    /// `(feature, mean |phi|)`, descending, ties by name.
    pub entries: Vec<(String, f64)>,
}

impl ImportanceRanking {
    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.0.clone()).collect()
    }
}

pub fn rank_importance(explanations: &[ShapExplanation]) -> Result<ImportanceRanking> {
    let first = explanations.first().ok_or(Error::EmptyInput)?;
    let m = first.values.len();
    if let Some(e) = explanations.iter().find(|e| e.feature_names != first.feature_names) {
        return Err(Error::FeatureMismatch { expected: first.feature_names.clone(), got: e.feature_names.clone() });
    }
    let n = explanations.len() as f64;
    let mut entries: Vec<(String, f64)> = (0..m)
        .map(|j| (first.feature_names[j].clone(), explanations.iter().map(|e| e.values[j].abs()).sum::<f64>() / n))
        .collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ImportanceRanking { entries })
}

pub fn select_top_k(ranking: &ImportanceRanking, k: usize) -> Result<Vec<String>> {
    let m = ranking.entries.len();
    if k == 0 || k > m {
        return Err(Error::BadK { k, m });
    }
    Ok(ranking.entries[..k].iter().map(|e| e.0.clone()).collect())
}

/// Row indices of a class-stratified sample of about `size` rows, in ascending order.
pub fn stratified_background(y: &[u8], size: usize, seed: u64) -> Vec<usize> {
    let n = y.len();
    if size >= n {
        return (0..n).collect();
    }
    let mut r = rng::rng(rng::derive(seed, rng::stream::BACKGROUND));
    let mut out = Vec::with_capacity(size);
    let pos_total = y.iter().filter(|&&v| v == 1).count();
    let take_pos = ((size as f64) * pos_total as f64 / n as f64).round() as usize;
    let take_pos = take_pos.min(pos_total).min(size);
    for (class, take) in [(1u8, take_pos), (0u8, size - take_pos)] {
        let mut idx: Vec<usize> = (0..n).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut r);
        out.extend(idx.into_iter().take(take));
    }
    out.sort_unstable();
    out
}

pub fn write_explanations<W: Write>(explanations: &[ShapExplanation], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let names: &[String] = explanations.first().map_or(&[], |e| e.feature_names.as_slice());
    let mut header = vec!["instance_id".to_string(), "base_value".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for e in explanations {
        let mut rec = vec![e.instance_id.clone(), e.base_value.to_string()];
        rec.extend(e.values.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<explanations>", e))?;
    Ok(())
}
