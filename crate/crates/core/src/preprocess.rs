//! Cleaning and scaling of the feature grid: mean imputation, z-score outlier
//! flags, normalization, and the Pearson correlation matrix used for EDA.
//!
//! All statistics use the population (divide-by-n) deviation. Fitted statistics
//! ([`ImputationLog`], [`ScalerParams`]) serialize to JSON and are re-applied to
//! held-out or next-year data without refitting.

use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_OUTLIER_THRESHOLD: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputedFeature {
    pub name: String,
    pub fill_value: f64,
    pub fill_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationLog {
    pub features: Vec<ImputedFeature>,
}

impl ImputationLog {
    /// Fill masked cells of `fm` with the stored per-feature values.
    pub fn apply(&self, fm: &FeatureMatrix) -> Result<FeatureMatrix> {
        check_names(&self.features.iter().map(|f| f.name.clone()).collect::<Vec<_>>(), &fm.column_names)?;
        let mut out = fm.clone();
        let m = fm.n_cols();
        for (k, masked) in out.missing_mask.iter_mut().enumerate() {
            if *masked {
                out.values[k] = self.features[k % m].fill_value;
                *masked = false;
            }
        }
        Ok(out)
    }
}

fn check_names(expected: &[String], got: &[String]) -> Result<()> {
    if expected != got {
        return Err(Error::FeatureMismatch { expected: expected.to_vec(), got: got.to_vec() });
    }
    Ok(())
}

/// Replace each missing cell by its column's observed mean.
pub fn impute_mean(fm: &FeatureMatrix) -> Result<(FeatureMatrix, ImputationLog)> {
    let n = fm.n_rows();
    let mut features = Vec::with_capacity(fm.n_cols());
    for (j, name) in fm.column_names.iter().enumerate() {
        let mut sum = 0.0;
        let mut observed = 0usize;
        for i in 0..n {
            if !fm.is_missing(i, j) {
                sum += fm.get(i, j);
                observed += 1;
            }
        }
        if observed == 0 {
            return Err(Error::AllMissingFeature(name.clone()));
        }
        features.push(ImputedFeature {
            name: name.clone(),
            fill_value: sum / observed as f64,
            fill_count: n - observed,
        });
    }
    let log = ImputationLog { features };
    let out = log.apply(fm)?;
    Ok((out, log))
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ColumnStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl ColumnStats {
    pub fn is_constant(&self) -> bool {
        self.min == self.max
    }
}

pub(crate) fn column_stats(values: impl Iterator<Item = f64> + Clone) -> ColumnStats {
    let mut n = 0usize;
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values.clone() {
        n += 1;
        sum += v;
        min = min.min(v);
        max = max.max(v);
    }
    let mean = if n == 0 { 0.0 } else { sum / n as f64 };
    let var = if n == 0 { 0.0 } else { values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64 };
    ColumnStats { mean, std: var.sqrt(), min, max }
}

fn require_imputed(fm: &FeatureMatrix) -> Result<()> {
    if fm.is_fully_imputed() {
        Ok(())
    } else {
        Err(Error::NotImputed)
    }
}

/// Row-major n×m flags: `|x - mean| / std > threshold`. Constant columns flag nothing.
pub fn flag_outliers(fm: &FeatureMatrix, threshold: f64) -> Result<Vec<bool>> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidThreshold(threshold));
    }
    require_imputed(fm)?;
    let (n, m) = (fm.n_rows(), fm.n_cols());
    let mut flags = vec![false; n * m];
    for j in 0..m {
        let st = column_stats((0..n).map(|i| fm.get(i, j)));
        if st.is_constant() || st.std == 0.0 {
            continue;
        }
        for i in 0..n {
            flags[i * m + j] = ((fm.get(i, j) - st.mean) / st.std).abs() > threshold;
        }
    }
    Ok(flags)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleMethod {
    #[default]
    Zscore,
    Minmax,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Constant (or unscaled) feature copied through unchanged.
    pub passthrough: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub method: ScaleMethod,
    pub features: Vec<FeatureScale>,
}

impl ScalerParams {
    pub fn fit(fm: &FeatureMatrix, method: ScaleMethod) -> Result<Self> {
        require_imputed(fm)?;
        let n = fm.n_rows();
        let features = fm
            .column_names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let st = column_stats((0..n).map(|i| fm.get(i, j)));
                let passthrough =
                    method == ScaleMethod::None || st.is_constant() || st.std == 0.0 || n == 0;
                FeatureScale { name: name.clone(), mean: st.mean, std: st.std, min: st.min, max: st.max, passthrough }
            })
            .collect();
        Ok(Self { method, features })
    }

    fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    #[inline]
    fn forward(&self, j: usize, x: f64) -> f64 {
        let f = &self.features[j];
        if f.passthrough {
            return x;
        }
        match self.method {
            ScaleMethod::Zscore => (x - f.mean) / f.std,
            ScaleMethod::Minmax => (x - f.min) / (f.max - f.min),
            ScaleMethod::None => x,
        }
    }

    #[inline]
    fn backward(&self, j: usize, z: f64) -> f64 {
        let f = &self.features[j];
        if f.passthrough {
            return z;
        }
        match self.method {
            ScaleMethod::Zscore => z * f.std + f.mean,
            ScaleMethod::Minmax => z * (f.max - f.min) + f.min,
            ScaleMethod::None => z,
        }
    }

    pub fn apply(&self, fm: &FeatureMatrix) -> Result<FeatureMatrix> {
        require_imputed(fm)?;
        check_names(&self.names(), &fm.column_names)?;
        let m = fm.n_cols();
        let mut out = fm.clone();
        for (k, v) in out.values.iter_mut().enumerate() {
            *v = self.forward(k % m, *v);
        }
        Ok(out)
    }

    pub fn invert(&self, fm: &FeatureMatrix) -> Result<FeatureMatrix> {
        check_names(&self.names(), &fm.column_names)?;
        let m = fm.n_cols();
        let mut out = fm.clone();
        for (k, v) in out.values.iter_mut().enumerate() {
            *v = self.backward(k % m, *v);
        }
        Ok(out)
    }
}

pub fn normalize(fm: &FeatureMatrix, method: ScaleMethod) -> Result<(FeatureMatrix, ScalerParams)> {
    let params = ScalerParams::fit(fm, method)?;
    let out = params.apply(fm)?;
    Ok((out, params))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    /// Row-major, `names.len()` squared.
    pub values: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.names.len() + j]
    }
}

/// Pearson correlation between every pair of columns (plus `label` as a final
/// column when given). A constant column correlates 0 with every other column.
pub fn correlation_matrix(fm: &FeatureMatrix, label: Option<(&str, &[f64])>) -> Result<CorrelationMatrix> {
    require_imputed(fm)?;
    let n = fm.n_rows();
    let mut cols: Vec<Vec<f64>> = (0..fm.n_cols()).map(|j| fm.column(j)).collect();
    let mut names = fm.column_names.clone();
    if let Some((name, y)) = label {
        if y.len() != n {
            return Err(Error::LengthMismatch(y.len(), n));
        }
        cols.push(y.to_vec());
        names.push(name.to_string());
    }
    let k = cols.len();
    // center once; deviations then give r = <a,b> / (|a| |b|)
    let centered: Vec<(Vec<f64>, f64, bool)> = cols
        .iter()
        .map(|c| {
            let st = column_stats(c.iter().copied());
            let d: Vec<f64> = c.iter().map(|v| v - st.mean).collect();
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            (d, norm, st.is_constant() || norm == 0.0)
        })
        .collect();
    let mut values = vec![0.0; k * k];
    for a in 0..k {
        values[a * k + a] = 1.0;
        for b in (a + 1)..k {
            let (da, na, ca) = &centered[a];
            let (db, nb, cb) = &centered[b];
            let r = if *ca || *cb {
                0.0
            } else {
                let dot: f64 = da.iter().zip(db).map(|(x, y)| x * y).sum();
                (dot / (na * nb)).clamp(-1.0, 1.0)
            };
            values[a * k + b] = r;
            values[b * k + a] = r;
        }
    }
    Ok(CorrelationMatrix { names, values })
}
