//! Random forest of Gini CART trees.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_cart, CartParams, Columns, MaxFeatures, Tree};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: Some(12), min_leaf: 3, max_features: MaxFeatures::Sqrt, bootstrap: true, seed: 0 }
    }
}

impl ForestParams {
    fn cart(&self) -> CartParams {
        CartParams { max_depth: self.max_depth, min_leaf: self.min_leaf, max_features: self.max_features }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    /// Each tree's leaves hold a 0/1 vote.
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Fraction of trees voting positive.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let votes: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        votes / self.trees.len() as f64
    }
}

fn grow_one(cols: &Columns, y: &[u8], params: &ForestParams, index: usize) -> Tree {
    let mut r = rng::rng(rng::derive_path(params.seed, &[rng::stream::FOREST, index as u64]));
    let n = cols.n;
    let rows: Vec<usize> = if params.bootstrap { (0..n).map(|_| r.random_range(0..n)).collect() } else { (0..n).collect() };
    grow_cart(cols, y, rows, &params.cart(), &mut r)
}

pub(crate) fn fit(cols: &Columns, y: &[u8], params: &ForestParams) -> Forest {
    let trees = (0..params.n_trees).into_par_iter().map(|t| grow_one(cols, y, params, t)).collect();
    Forest { trees }
}

/// Serial construction, for checking that parallel builds agree.
#[cfg(test)]
pub(crate) fn fit_serial(cols: &Columns, y: &[u8], params: &ForestParams) -> Forest {
    Forest { trees: (0..params.n_trees).map(|t| grow_one(cols, y, params, t)).collect() }
}
