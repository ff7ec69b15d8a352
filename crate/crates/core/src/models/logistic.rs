//! L2-regularized logistic regression fit by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use super::gbdt::sigmoid;
use crate::optim::{self, GdConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticParams {
    /// Penalty on weights only; the intercept is never penalized.
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self { l2_lambda: 1e-3, learning_rate: 1.0, max_epochs: 500, tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logistic {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub epochs: usize,
    pub converged: bool,
}

impl Logistic {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }
}

/// Mean binary cross-entropy plus `lambda/2 * ||w||^2` at `params = [w..., b]`,
/// with the gradient written into `grad`. `rows` are feature vectors.
pub fn objective(rows: &[&[f64]], y: &[f64], lambda: f64, params: &[f64], grad: &mut [f64]) -> f64 {
    let d = params.len() - 1;
    let n = rows.len() as f64;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    for (x, &t) in rows.iter().zip(y) {
        let z = params[d] + (0..d).map(|k| params[k] * x[k]).sum::<f64>();
        // log(1 + e^z) - t z, stable for both signs
        loss += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        for k in 0..d {
            grad[k] += r * x[k];
        }
        grad[d] += r;
    }
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    for k in 0..d {
        loss += 0.5 * lambda * params[k] * params[k];
        grad[k] += lambda * params[k];
    }
    loss
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub(crate) fn fit(rows: &[&[f64]], y: &[f64], params: &LogisticParams) -> Logistic {
    let d = rows.first().map_or(0, |r| r.len());
    let cfg = GdConfig { learning_rate: params.learning_rate, max_epochs: params.max_epochs, tol: params.tol };
    // start the intercept at the prior log-odds
    let prior = y.iter().sum::<f64>() / y.len() as f64;
    let mut x0 = vec![0.0; d + 1];
    if prior > 0.0 && prior < 1.0 {
        x0[d] = (prior / (1.0 - prior)).ln();
    }
    let out = optim::minimize(x0, &cfg, |p, g| objective(rows, y, params.l2_lambda, p, g));
    let intercept = out.params[d];
    let mut weights = out.params;
    weights.truncate(d);
    Logistic { weights, intercept, epochs: out.epochs, converged: out.converged }
}
