//! Binary decision trees shared by the forest and the booster, plus the
//! Gini-impurity CART builder used by the forest.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf { value: f64 },
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root at index 0.
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Self { nodes: vec![TreeNode::Leaf { value }] }
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split { feature, threshold, left, right } => {
                    k = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    /// Traversal with feature values supplied by `value(j)`.
    #[inline]
    pub fn predict_by<F: Fn(usize) -> f64>(&self, value: F) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                TreeNode::Leaf { value: v } => return v,
                TreeNode::Split { feature, threshold, left, right } => {
                    k = if value(feature) <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, k: usize) -> usize {
            match t.nodes[k] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    pub fn uses_feature(&self, j: usize) -> bool {
        self.nodes.iter().any(|n| matches!(n, TreeNode::Split { feature, .. } if *feature == j))
    }
}

/// Threshold strictly separating two adjacent distinct sorted values `lo < hi`.
#[inline]
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, m: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (m as f64).sqrt().floor() as usize,
            MaxFeatures::All => m,
            MaxFeatures::Count(c) => c,
        };
        k.clamp(1, m.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartParams {
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub max_features: MaxFeatures,
}

/// Column-major view of the training matrix.
pub(crate) struct Columns {
    pub cols: Vec<Vec<f64>>,
    pub n: usize,
}

impl Columns {
    pub fn from_rows(x: &crate::data::FeatureMatrix) -> Self {
        let n = x.n_rows();
        Self { cols: (0..x.n_cols()).map(|j| x.column(j)).collect(), n }
    }

    pub fn m(&self) -> usize {
        self.cols.len()
    }
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Best Gini split of `rows` on feature `j`; scans thresholds in ascending order
/// and keeps the first maximum.
fn best_split_on(cols: &Columns, y: &[u8], rows: &[usize], j: usize, min_leaf: usize) -> Option<SplitChoice> {
    let col = &cols.cols[j];
    let mut pairs: Vec<(f64, u8)> = rows.iter().map(|&i| (col[i], y[i])).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len();
    let total_pos = pairs.iter().filter(|p| p.1 == 1).count();
    let parent = gini(total_pos, n);
    let mut best: Option<SplitChoice> = None;
    let mut left_pos = 0usize;
    for k in 1..n {
        left_pos += usize::from(pairs[k - 1].1 == 1);
        if pairs[k].0 == pairs[k - 1].0 {
            continue;
        }
        let (nl, nr) = (k, n - k);
        if nl < min_leaf || nr < min_leaf {
            continue;
        }
        let child = (nl as f64 * gini(left_pos, nl) + nr as f64 * gini(total_pos - left_pos, nr)) / n as f64;
        let gain = parent - child;
        if best.as_ref().is_none_or(|b| gain > b.gain) {
            best = Some(SplitChoice { feature: j, threshold: midpoint(pairs[k - 1].0, pairs[k].0), gain });
        }
    }
    best
}

fn pick_best(cols: &Columns, y: &[u8], rows: &[usize], features: &[usize], min_leaf: usize) -> Option<SplitChoice> {
    let mut best: Option<SplitChoice> = None;
    for &j in features {
        if let Some(c) = best_split_on(cols, y, rows, j, min_leaf) {
            if best.as_ref().is_none_or(|b| c.gain > b.gain) {
                best = Some(c);
            }
        }
    }
    best
}

/// Grows a classification tree on `rows` (duplicates allowed, as in a bootstrap
/// sample). Leaves hold the majority vote, ties resolved to class 1.
///
/// Any impure node with a feasible split is split, even at zero gain. Candidate
/// features are sampled per node; if none of them can split, the remaining
/// features are tried in index order.
pub(crate) fn grow_cart(cols: &Columns, y: &[u8], rows: Vec<usize>, params: &CartParams, rng: &mut Rng) -> Tree {
    let m = cols.m();
    let k = params.max_features.resolve(m);
    let min_leaf = params.min_leaf.max(1);
    let mut nodes: Vec<TreeNode> = Vec::new();
    // (node index, rows, depth)
    let mut stack: Vec<(usize, Vec<usize>, usize)> = Vec::new();
    nodes.push(TreeNode::Leaf { value: 0.0 });
    stack.push((0, rows, 0));
    let all: Vec<usize> = (0..m).collect();

    while let Some((id, rows, depth)) = stack.pop() {
        let pos = rows.iter().filter(|&&i| y[i] == 1).count();
        let vote = if 2 * pos >= rows.len() { 1.0 } else { 0.0 };
        let pure = pos == 0 || pos == rows.len();
        let depth_ok = params.max_depth.is_none_or(|d| depth < d);
        if pure || !depth_ok || rows.len() < 2 * min_leaf {
            nodes[id] = TreeNode::Leaf { value: vote };
            continue;
        }
        let choice = if k >= m {
            pick_best(cols, y, &rows, &all, min_leaf)
        } else {
            let mut perm = all.clone();
            perm.shuffle(rng);
            let (cand, rest) = perm.split_at(k);
            let mut cand = cand.to_vec();
            cand.sort_unstable();
            pick_best(cols, y, &rows, &cand, min_leaf).or_else(|| {
                let mut rest = rest.to_vec();
                rest.sort_unstable();
                rest.iter().find_map(|&j| best_split_on(cols, y, &rows, j, min_leaf))
            })
        };
        let Some(c) = choice else {
            nodes[id] = TreeNode::Leaf { value: vote };
            continue;
        };
        let col = &cols.cols[c.feature];
        let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| col[i] <= c.threshold);
        let li = nodes.len();
        nodes.push(TreeNode::Leaf { value: 0.0 });
        let ri = nodes.len();
        nodes.push(TreeNode::Leaf { value: 0.0 });
        nodes[id] = TreeNode::Split { feature: c.feature, threshold: c.threshold, left: li, right: ri };
        // right pushed first so the left subtree is expanded first
        stack.push((ri, r, depth + 1));
        stack.push((li, l, depth + 1));
    }
    Tree { nodes }
}
