//! Linear SVM trained on the primal hinge objective
//! `0.5 ||w||^2 + C * sum_i max(0, 1 - y_i (w.x_i + b))` by seeded stochastic
//! subgradient descent, followed by logistic calibration of the training margins.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::gbdt::sigmoid;
use super::logistic::{self, Logistic, LogisticParams};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    #[serde(rename = "C")]
    pub c: f64,
    pub epochs: usize,
    /// Initial step; decays as `lr / (1 + t/n)` over sample updates `t`.
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { c: 1.0, epochs: 20, learning_rate: 0.01, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Svm {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Calibration `sigmoid(a * margin + b)`.
    pub calibration_a: f64,
    pub calibration_b: f64,
}

impl Svm {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        sigmoid(self.calibration_a * self.margin(x) + self.calibration_b)
    }
}

/// Weight vector and intercept before calibration.
pub(crate) fn fit_hinge(rows: &[&[f64]], y: &[u8], params: &SvmParams) -> (Vec<f64>, f64) {
    let d = rows.first().map_or(0, |r| r.len());
    let n = rows.len();
    let nf = n as f64;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0usize;
    for epoch in 0..params.epochs {
        let mut r = rng::rng(rng::derive_path(params.seed, &[rng::stream::SVM, epoch as u64]));
        order.shuffle(&mut r);
        for &i in &order {
            let eta = params.learning_rate / (1.0 + t as f64 / nf);
            let s = if y[i] == 1 { 1.0 } else { -1.0 };
            let x = rows[i];
            let m = s * (b + w.iter().zip(x).map(|(wk, xk)| wk * xk).sum::<f64>());
            if m < 1.0 {
                let cs = params.c * s;
                for k in 0..d {
                    w[k] -= eta * (w[k] / nf - cs * x[k]);
                }
                b += eta * cs;
            } else {
                for wk in w.iter_mut() {
                    *wk -= eta * (*wk / nf);
                }
            }
            t += 1;
        }
    }
    (w, b)
}

pub(crate) fn fit(rows: &[&[f64]], y: &[u8], params: &SvmParams) -> Svm {
    let (weights, intercept) = fit_hinge(rows, y, params);
    let partial = Svm { weights, intercept, calibration_a: 0.0, calibration_b: 0.0 };
    let margins: Vec<[f64; 1]> = rows.iter().map(|x| [partial.margin(x)]).collect();
    let mrows: Vec<&[f64]> = margins.iter().map(|m| m.as_slice()).collect();
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let cal: Logistic = logistic::fit(&mrows, &yf, &LogisticParams { l2_lambda: 1e-6, ..Default::default() });
    Svm { calibration_a: cal.weights[0], calibration_b: cal.intercept, ..partial }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> (Vec<Vec<f64>>, Vec<u8>) {
        let xs: Vec<Vec<f64>> = [-3.0, -2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0, 3.0].iter().map(|&v| vec![v]).collect();
        let y = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        (xs, y)
    }

    #[test]
    fn separable_held_in_accuracy() {
        let (xs, y) = separable();
        let rows: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let m = fit(&rows, &y, &SvmParams { epochs: 200, learning_rate: 0.1, ..Default::default() });
        for (x, &t) in rows.iter().zip(&y) {
            assert_eq!(u8::from(m.margin(x) > 0.0), t);
            assert_eq!(u8::from(m.predict_row(x) >= 0.5), t);
        }
    }

    #[test]
    fn flipped_labels_flip_weights() {
        let (xs, y) = separable();
        let rows: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let flipped: Vec<u8> = y.iter().map(|v| 1 - v).collect();
        let p = SvmParams { seed: 9, ..Default::default() };
        let (w, b) = fit_hinge(&rows, &y, &p);
        let (wf, bf) = fit_hinge(&rows, &flipped, &p);
        assert_eq!(w[0], -wf[0]);
        assert_eq!(b, -bf);
    }

    #[test]
    fn zero_c_gives_prior() {
        let (xs, mut y) = separable();
        y[4] = 1;
        y[5] = 1;
        let rows: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let m = fit(&rows, &y, &SvmParams { c: 0.0, ..Default::default() });
        assert_eq!(m.weights, vec![0.0]);
        for x in &rows {
            assert!((m.predict_row(x) - 0.6).abs() < 1e-6);
        }
    }
}
