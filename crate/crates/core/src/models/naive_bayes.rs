//! Gaussian naive Bayes.

use serde::{Deserialize, Serialize};

use super::gbdt::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NaiveBayesParams {
    /// Variance floor as a fraction of the largest feature variance.
    pub var_smoothing: f64,
}

impl Default for NaiveBayesParams {
    fn default() -> Self {
        Self { var_smoothing: 1e-9 }
    }
}

/// Used when every feature is constant and the relative floor is zero.
const ABSOLUTE_VAR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    /// Indexed by class (0, 1), then feature.
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
    pub priors: [f64; 2],
}

fn log_density(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean) * (x - mean) / var)
}

impl NaiveBayes {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut z = self.priors[1].ln() - self.priors[0].ln();
        for (j, &v) in x.iter().enumerate() {
            let (m0, m1) = (self.means[0][j], self.means[1][j]);
            let (v0, v1) = (self.variances[0][j], self.variances[1][j]);
            if m0 == m1 && v0 == v1 {
                continue;
            }
            z += log_density(v, m1, v1) - log_density(v, m0, v0);
        }
        sigmoid(z)
    }
}

pub(crate) fn fit(rows: &[&[f64]], y: &[u8], params: &NaiveBayesParams) -> NaiveBayes {
    let d = rows.first().map_or(0, |r| r.len());
    let n = rows.len() as f64;
    let mut max_var: f64 = 0.0;
    for j in 0..d {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        max_var = max_var.max(var);
    }
    let floor = (params.var_smoothing * max_var).max(ABSOLUTE_VAR_FLOOR);

    let mut means = [vec![0.0; d], vec![0.0; d]];
    let mut variances = [vec![0.0; d], vec![0.0; d]];
    let mut counts = [0.0f64; 2];
    for c in 0..2 {
        let members: Vec<&[f64]> = rows.iter().zip(y).filter(|(_, &t)| usize::from(t) == c).map(|(r, _)| *r).collect();
        let nc = members.len() as f64;
        counts[c] = nc;
        for j in 0..d {
            let mean = members.iter().map(|r| r[j]).sum::<f64>() / nc;
            let var = members.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / nc;
            means[c][j] = mean;
            variances[c][j] = var + floor;
        }
    }
    NaiveBayes { means, variances, priors: [counts[0] / n, counts[1] / n] }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(xs: &[Vec<f64>]) -> Vec<&[f64]> {
        xs.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn symmetric_boundary_at_zero() {
        let offsets = [-0.3, -0.1, 0.0, 0.1, 0.3];
        let mut xs = Vec::new();
        let mut y = Vec::new();
        for o in offsets {
            xs.push(vec![-1.0 + o]);
            y.push(0);
            xs.push(vec![1.0 + o]);
            y.push(1);
        }
        let nb = fit(&rows(&xs), &y, &NaiveBayesParams::default());
        // bisection for p = 0.5
        let (mut lo, mut hi) = (-1.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if nb.predict_row(&[mid]) < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!(lo.abs() < 0.1, "boundary {lo}");
    }

    #[test]
    fn identical_distributions_give_prior() {
        let xs: Vec<Vec<f64>> = vec![vec![1.0], vec![2.0], vec![1.0], vec![2.0], vec![1.0], vec![2.0]];
        let y = [0, 0, 0, 0, 1, 1];
        let nb = fit(&rows(&xs), &y, &NaiveBayesParams::default());
        assert!((nb.predict_row(&[1.5]) - 1.0 / 3.0).abs() < 1e-12);
        assert!((nb.predict_row(&[7.0]) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_stays_finite() {
        let xs: Vec<Vec<f64>> = vec![vec![0.0, 5.0], vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]];
        let y = [0, 0, 1, 1];
        let nb = fit(&rows(&xs), &y, &NaiveBayesParams { var_smoothing: 0.0 });
        for x in [[0.5, 5.0], [2.5, 6.0], [10.0, -3.0]] {
            let p = nb.predict_row(&x);
            assert!(p.is_finite() && (0.0..=1.0).contains(&p));
        }
    }
}
