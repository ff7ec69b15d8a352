//! Newton-boosted regression trees on the log-odds scale with exact greedy splits.
//!
//! Per round: gradients `g = p - y`, hessians `h = p (1 - p)`; a node's weight is
//! `-G / (H + lambda)` and a split's gain is
//! `0.5 * [GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda)] - gamma`.
//! Trees grow level by level; split search scans each feature's presorted order once
//! per level.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{midpoint, Columns, Tree, TreeNode};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub lambda_l2: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
    /// Row fraction sampled per round (1.0 = all rows).
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            learning_rate: 0.3,
            max_depth: 6,
            lambda_l2: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
            subsample: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Booster {
    pub params: GbdtParams,
    /// Log-odds of the training prior.
    pub base_score: f64,
    /// Leaf values already include the learning rate.
    pub trees: Vec<Tree>,
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Booster {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }
}

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    threshold: f64,
}

struct Building {
    g: f64,
    h: f64,
}

fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    -g / (h + lambda)
}

/// Training loss after each round is reported through `on_round` (round 0 is the
/// base-score model); used by tests of monotone descent.
pub(crate) fn train_booster_with<F: FnMut(usize, &[f64])>(
    cols: &Columns,
    y: &[u8],
    params: &GbdtParams,
    mut on_round: F,
) -> Booster {
    let n = cols.n;
    let m = cols.m();
    let pos = y.iter().filter(|&&v| v == 1).count() as f64;
    let prior = pos / n as f64;
    let base_score = (prior / (1.0 - prior)).ln();

    let order: Vec<Vec<u32>> = cols
        .cols
        .iter()
        .map(|c| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let mut margins = vec![base_score; n];
    on_round(0, &margins);
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut node_of = vec![0u32; n];

    for round in 0..params.n_rounds {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad[i] = p - f64::from(y[i]);
            hess[i] = p * (1.0 - p);
        }
        if params.subsample < 1.0 {
            let mut r = rng::rng(rng::derive_path(params.seed, &[rng::stream::GBDT, round as u64]));
            for slot in node_of.iter_mut() {
                *slot = if r.random::<f64>() < params.subsample { 0 } else { NONE };
            }
        } else {
            node_of.iter_mut().for_each(|s| *s = 0);
        }

        let tree = grow_level_wise(cols, &order, &grad, &hess, &mut node_of, params, m);
        for (i, mg) in margins.iter_mut().enumerate() {
            *mg += tree.predict_by(|j| cols.cols[j][i]);
        }
        trees.push(tree);
        on_round(round + 1, &margins);
    }
    Booster { params: *params, base_score, trees }
}

fn grow_level_wise(
    cols: &Columns,
    order: &[Vec<u32>],
    grad: &[f64],
    hess: &[f64],
    node_of: &mut [u32],
    params: &GbdtParams,
    m: usize,
) -> Tree {
    let lambda = params.lambda_l2;
    let mut nodes: Vec<TreeNode> = vec![TreeNode::Leaf { value: 0.0 }];
    let mut stats: Vec<Building> = vec![Building { g: 0.0, h: 0.0 }];
    for (i, &k) in node_of.iter().enumerate() {
        if k != NONE {
            stats[0].g += grad[i];
            stats[0].h += hess[i];
        }
    }
    let mut active: Vec<usize> = vec![0];

    for _depth in 0..params.max_depth {
        if active.is_empty() {
            break;
        }
        // slot of each node id in `active`
        let mut slot_of = vec![NONE; nodes.len()];
        for (s, &id) in active.iter().enumerate() {
            slot_of[id] = s as u32;
        }
        let n_active = active.len();
        let totals: Vec<(f64, f64)> = active.iter().map(|&id| (stats[id].g, stats[id].h)).collect();

        let per_feature: Vec<Vec<Option<Candidate>>> = (0..m)
            .into_par_iter()
            .map(|j| {
                let col = &cols.cols[j];
                let mut gl = vec![0.0; n_active];
                let mut hl = vec![0.0; n_active];
                let mut last = vec![f64::NAN; n_active];
                let mut seen = vec![false; n_active];
                let mut best: Vec<Option<Candidate>> = vec![None; n_active];
                for &i in &order[j] {
                    let i = i as usize;
                    let node = node_of[i];
                    if node == NONE {
                        continue;
                    }
                    let s = slot_of[node as usize];
                    if s == NONE {
                        continue;
                    }
                    let s = s as usize;
                    let v = col[i];
                    if seen[s] && v != last[s] {
                        let (g, h) = totals[s];
                        let (lg, lh) = (gl[s], hl[s]);
                        let (rg, rh) = (g - lg, h - lh);
                        if lh >= params.min_child_weight && rh >= params.min_child_weight {
                            let gain = 0.5
                                * (lg * lg / (lh + lambda) + rg * rg / (rh + lambda) - g * g / (h + lambda))
                                - params.gamma;
                            if best[s].is_none_or(|b| gain > b.gain) {
                                best[s] = Some(Candidate { gain, threshold: midpoint(last[s], v) });
                            }
                        }
                    }
                    gl[s] += grad[i];
                    hl[s] += hess[i];
                    last[s] = v;
                    seen[s] = true;
                }
                best
            })
            .collect();

        let mut next_active = Vec::new();
        let mut chosen: Vec<Option<(usize, f64)>> = vec![None; n_active];
        for s in 0..n_active {
            let mut best: Option<(usize, Candidate)> = None;
            for (j, cands) in per_feature.iter().enumerate() {
                if let Some(c) = cands[s] {
                    if best.is_none_or(|(_, b)| c.gain > b.gain) {
                        best = Some((j, c));
                    }
                }
            }
            if let Some((j, c)) = best {
                if c.gain > 0.0 {
                    chosen[s] = Some((j, c.threshold));
                }
            }
        }
        if chosen.iter().all(Option::is_none) {
            break;
        }
        // children ids per slot
        let mut children = vec![(0u32, 0u32); n_active];
        for (s, &id) in active.iter().enumerate() {
            if let Some((feature, threshold)) = chosen[s] {
                let left = nodes.len();
                nodes.push(TreeNode::Leaf { value: 0.0 });
                stats.push(Building { g: 0.0, h: 0.0 });
                let right = nodes.len();
                nodes.push(TreeNode::Leaf { value: 0.0 });
                stats.push(Building { g: 0.0, h: 0.0 });
                nodes[id] = TreeNode::Split { feature, threshold, left, right };
                children[s] = (left as u32, right as u32);
                next_active.push(left);
                next_active.push(right);
            }
        }
        for i in 0..node_of.len() {
            let node = node_of[i];
            if node == NONE {
                continue;
            }
            let s = slot_of[node as usize];
            if s == NONE {
                continue;
            }
            let s = s as usize;
            if let Some((feature, threshold)) = chosen[s] {
                let child = if cols.cols[feature][i] <= threshold { children[s].0 } else { children[s].1 };
                node_of[i] = child;
                stats[child as usize].g += grad[i];
                stats[child as usize].h += hess[i];
            }
        }
        active = next_active;
    }

    for (id, node) in nodes.iter_mut().enumerate() {
        if let TreeNode::Leaf { value } = node {
            *value = params.learning_rate * leaf_weight(stats[id].g, stats[id].h, lambda);
        }
    }
    Tree { nodes }
}

pub(crate) fn train_booster(cols: &Columns, y: &[u8], params: &GbdtParams) -> Booster {
    train_booster_with(cols, y, params, |_, _| {})
}
