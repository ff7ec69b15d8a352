//! Deterministic full-batch gradient descent with backtracking (Armijo) step control.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GdConfig {
    /// Initial step size; adapted by backtracking.
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop once one accepted step improves the loss by less than this.
    pub tol: f64,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self { learning_rate: 1.0, max_epochs: 500, tol: 1e-9 }
    }
}

#[derive(Debug, Clone)]
pub struct GdOutcome {
    pub params: Vec<f64>,
    pub loss: f64,
    pub epochs: usize,
    pub converged: bool,
}

/// Minimizes `objective`, which returns the loss at `x` and writes the gradient into `grad`.
pub fn minimize<F>(x0: Vec<f64>, cfg: &GdConfig, mut objective: F) -> GdOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let d = x0.len();
    let mut x = x0;
    let mut grad = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut trial = vec![0.0; d];
    let mut loss = objective(&x, &mut grad);
    let mut step = cfg.learning_rate;
    let mut epochs = 0;
    let mut converged = false;

    while epochs < cfg.max_epochs {
        epochs += 1;
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        if gnorm2 == 0.0 || !gnorm2.is_finite() {
            converged = gnorm2 == 0.0;
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            for k in 0..d {
                trial[k] = x[k] - step * grad[k];
            }
            let l = objective(&trial, &mut scratch);
            if l.is_finite() && l <= loss - 1e-4 * step * gnorm2 {
                let improvement = loss - l;
                std::mem::swap(&mut x, &mut trial);
                std::mem::swap(&mut grad, &mut scratch);
                loss = l;
                accepted = true;
                step *= 1.25;
                if improvement < cfg.tol {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no descent possible at machine precision
            converged = true;
        }
        if converged {
            break;
        }
    }
    GdOutcome { params: x, loss, epochs, converged }
}
