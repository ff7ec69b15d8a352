//! Student-grouped fold assignment.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: BTreeMap<String, usize>,
    /// Folds used as test sets (all of them for k-fold; the holdout fold otherwise).
    pub eval_folds: Vec<usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, student: &str) -> Option<usize> {
        self.assignments.get(student).copied()
    }

    pub fn test_ids(&self, fold: usize) -> HashSet<String> {
        self.assignments.iter().filter(|(_, &f)| f == fold).map(|(s, _)| s.clone()).collect()
    }

    pub fn train_ids(&self, fold: usize) -> HashSet<String> {
        self.assignments.iter().filter(|(_, &f)| f != fold).map(|(s, _)| s.clone()).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Distinct groups are sorted, shuffled by `seed`, then dealt round-robin.
pub fn group_kfold(groups: &[String], k: usize, seed: u64) -> Result<FoldPlan> {
    let distinct: BTreeSet<&String> = groups.iter().collect();
    if k < 2 || distinct.len() < k {
        return Err(Error::TooFewGroups { groups: distinct.len(), k });
    }
    let mut order: Vec<&String> = distinct.into_iter().collect();
    order.shuffle(&mut rng::rng(rng::derive(seed, rng::stream::FOLDS)));
    let assignments = order.into_iter().enumerate().map(|(i, g)| (g.clone(), i % k)).collect();
    Ok(FoldPlan { k, assignments, eval_folds: (0..k).collect() })
}

/// Two-fold plan: students whose `column` equals `holdout_value` form the single
/// test fold; everyone else trains.
pub fn column_holdout(ds: &Dataset, column: &str, holdout_value: f64) -> Result<FoldPlan> {
    let j = ds.column_index(column).ok_or_else(|| Error::MissingColumn(column.to_string()))?;
    let assignments: BTreeMap<String, usize> = ds
        .records()
        .iter()
        .map(|r| (r.student_id.clone(), usize::from(r.features[j] == Some(holdout_value))))
        .collect();
    let test = assignments.values().filter(|&&f| f == 1).count();
    if test == 0 || test == assignments.len() {
        return Err(Error::TooFewGroups { groups: usize::from(test > 0), k: 2 });
    }
    Ok(FoldPlan { k: 2, assignments, eval_folds: vec![1] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn one_group_per_fold() {
        let plan = group_kfold(&ids(&["a", "a", "b", "b", "c", "c"]), 3, 1).unwrap();
        assert_eq!(plan.fold_sizes(), vec![1, 1, 1]);
    }

    #[test]
    fn round_robin_sizes() {
        let plan = group_kfold(&ids(&["a", "b", "c", "d", "e"]), 2, 0).unwrap();
        let mut sizes = plan.fold_sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 3]);
    }

    #[test]
    fn too_few_groups() {
        assert!(matches!(group_kfold(&ids(&["a", "b", "c"]), 4, 0), Err(Error::TooFewGroups { groups: 3, k: 4 })));
        assert!(matches!(group_kfold(&ids(&["a", "b", "c"]), 1, 0), Err(Error::TooFewGroups { .. })));
    }

    proptest! {
        #[test]
        fn partition_and_balance(n in 2usize..60, k in 2usize..8, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let groups: Vec<String> = (0..n * 2).map(|i| format!("g{}", i % n)).collect();
            let plan = group_kfold(&groups, k, seed).unwrap();
            prop_assert_eq!(plan.assignments.len(), n);
            let sizes = plan.fold_sizes();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for f in 0..k {
                let test = plan.test_ids(f);
                let train = plan.train_ids(f);
                prop_assert!(test.is_disjoint(&train));
                prop_assert_eq!(test.len() + train.len(), n);
            }
        }
    }
}
