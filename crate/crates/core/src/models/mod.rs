//! Binary classifiers behind one train / predict-probability contract.

pub mod forest;
pub mod gbdt;
pub mod logistic;
pub mod naive_bayes;
pub mod svm;
pub mod tree;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};

pub use forest::{Forest, ForestParams};
pub use gbdt::{Booster, GbdtParams};
pub use logistic::{Logistic, LogisticParams};
pub use naive_bayes::{NaiveBayes, NaiveBayesParams};
pub use svm::{Svm, SvmParams};
pub use tree::{CartParams, MaxFeatures, Tree, TreeNode};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Logistic,
    RandomForest,
    Gbdt,
    NaiveBayes,
    LinearSvm,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 5] =
        [ModelFamily::Gbdt, ModelFamily::RandomForest, ModelFamily::Logistic, ModelFamily::NaiveBayes, ModelFamily::LinearSvm];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Logistic => "logistic",
            ModelFamily::RandomForest => "random_forest",
            ModelFamily::Gbdt => "gbdt",
            ModelFamily::NaiveBayes => "naive_bayes",
            ModelFamily::LinearSvm => "linear_svm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.as_str() == s)
    }
}

/// Family plus its hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum HyperParams {
    Logistic(LogisticParams),
    RandomForest(ForestParams),
    Gbdt(GbdtParams),
    NaiveBayes(NaiveBayesParams),
    LinearSvm(SvmParams),
}

impl HyperParams {
    pub fn default_for(family: ModelFamily) -> Self {
        match family {
            ModelFamily::Logistic => HyperParams::Logistic(Default::default()),
            ModelFamily::RandomForest => HyperParams::RandomForest(Default::default()),
            ModelFamily::Gbdt => HyperParams::Gbdt(Default::default()),
            ModelFamily::NaiveBayes => HyperParams::NaiveBayes(Default::default()),
            ModelFamily::LinearSvm => HyperParams::LinearSvm(Default::default()),
        }
    }

    pub fn family(&self) -> ModelFamily {
        match self {
            HyperParams::Logistic(_) => ModelFamily::Logistic,
            HyperParams::RandomForest(_) => ModelFamily::RandomForest,
            HyperParams::Gbdt(_) => ModelFamily::Gbdt,
            HyperParams::NaiveBayes(_) => ModelFamily::NaiveBayes,
            HyperParams::LinearSvm(_) => ModelFamily::LinearSvm,
        }
    }

    /// Seed of stochastic families; `None` for deterministic ones.
    pub fn seed(&self) -> Option<u64> {
        match self {
            HyperParams::RandomForest(p) => Some(p.seed),
            HyperParams::Gbdt(p) => Some(p.seed),
            HyperParams::LinearSvm(p) => Some(p.seed),
            _ => None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            HyperParams::RandomForest(p) => p.seed = seed,
            HyperParams::Gbdt(p) => p.seed = seed,
            HyperParams::LinearSvm(p) => p.seed = seed,
            _ => {}
        }
        self
    }

    /// Replaces the named fields; unknown names or ill-typed values are rejected.
    pub fn with_overrides(&self, overrides: &BTreeMap<String, serde_json::Value>) -> Result<Self> {
        let mut value = serde_json::to_value(self)?;
        let params = value
            .get_mut("params")
            .and_then(|p| p.as_object_mut())
            .ok_or_else(|| Error::InvalidHyperParameter("parameters are not an object".into()))?;
        for (k, v) in overrides {
            if !params.contains_key(k) {
                return Err(Error::InvalidHyperParameter(format!("{} has no parameter `{k}`", self.family().as_str())));
            }
            params.insert(k.clone(), v.clone());
        }
        let out: HyperParams = serde_json::from_value(value).map_err(|e| Error::InvalidHyperParameter(e.to_string()))?;
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidHyperParameter(msg.to_string()));
        match self {
            HyperParams::Logistic(p) => {
                if !(p.l2_lambda >= 0.0) || !(p.learning_rate > 0.0) || !(p.tol >= 0.0) {
                    return bad("logistic needs l2_lambda >= 0, learning_rate > 0, tol >= 0");
                }
            }
            HyperParams::RandomForest(p) => {
                if p.n_trees == 0 || p.min_leaf == 0 || p.max_depth == Some(0) || p.max_features == MaxFeatures::Count(0) {
                    return bad("random_forest needs n_trees, min_leaf, max_depth and max_features >= 1");
                }
            }
            HyperParams::Gbdt(p) => {
                if !(p.learning_rate > 0.0)
                    || !(p.lambda_l2 >= 0.0)
                    || !(p.gamma >= 0.0)
                    || !(p.min_child_weight >= 0.0)
                    || !(p.subsample > 0.0 && p.subsample <= 1.0)
                {
                    return bad("gbdt needs learning_rate > 0, lambda_l2, gamma, min_child_weight >= 0, subsample in (0, 1]");
                }
            }
            HyperParams::NaiveBayes(p) => {
                if !(p.var_smoothing >= 0.0) {
                    return bad("naive_bayes needs var_smoothing >= 0");
                }
            }
            HyperParams::LinearSvm(p) => {
                if !(p.c >= 0.0) || !(p.learning_rate > 0.0) {
                    return bad("linear_svm needs C >= 0 and learning_rate > 0");
                }
            }
        }
        Ok(())
    }
}

/// Fitted parameters per family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "parameters", rename_all = "snake_case")]
pub enum Model {
    Logistic(Logistic),
    RandomForest(Forest),
    Gbdt(Booster),
    NaiveBayes(NaiveBayes),
    LinearSvm(Svm),
}

/// Mean training BCE of a GBDT after each boosting round (entry 0 is the
/// base-score model before any tree).
pub fn gbdt_loss_history(x: &FeatureMatrix, y: &[u8], params: &GbdtParams) -> Result<Vec<f64>> {
    check_training(x, y)?;
    HyperParams::Gbdt(*params).validate()?;
    let cols = tree::Columns::from_rows(x);
    let mut losses = Vec::with_capacity(params.n_rounds + 1);
    gbdt::train_booster_with(&cols, y, params, |_, margins| {
        let p: Vec<f64> = margins.iter().map(|&z| gbdt::sigmoid(z)).collect();
        losses.push(crate::ensemble::bce_loss(y, &p, crate::ensemble::Reduction::Mean).expect("labels checked"));
    });
    Ok(losses)
}

/// Anything that maps one feature row to a probability of class 1.
pub trait Predictor: Sync {
    fn predict_row(&self, x: &[f64]) -> f64;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn predict_row(&self, x: &[f64]) -> f64 {
        (**self).predict_row(x)
    }
}

impl Predictor for Model {
    fn predict_row(&self, x: &[f64]) -> f64 {
        match self {
            Model::Logistic(m) => m.predict_row(x),
            Model::RandomForest(m) => m.predict_row(x),
            Model::Gbdt(m) => m.predict_row(x),
            Model::NaiveBayes(m) => m.predict_row(x),
            Model::LinearSvm(m) => m.predict_row(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub training_config: HyperParams,
    pub model: Model,
}

impl Predictor for TrainedModel {
    fn predict_row(&self, x: &[f64]) -> f64 {
        self.model.predict_row(x)
    }
}

impl TrainedModel {
    pub fn family(&self) -> ModelFamily {
        self.training_config.family()
    }

    pub fn seed(&self) -> Option<u64> {
        self.training_config.seed()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        let version = v.get("format_version").and_then(|x| x.as_u64()).unwrap_or(0) as u32;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::UnknownVersion(version));
        }
        Ok(serde_json::from_value(v)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

pub(crate) fn check_training(x: &FeatureMatrix, y: &[u8]) -> Result<()> {
    if !x.is_fully_imputed() {
        return Err(Error::NotImputed);
    }
    if x.n_rows() != y.len() {
        return Err(Error::LengthMismatch(x.n_rows(), y.len()));
    }
    if let Some((row, &v)) = y.iter().enumerate().find(|(_, &v)| v > 1) {
        return Err(Error::BadLabel { row, value: v.to_string() });
    }
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClassTraining);
    }
    Ok(())
}

pub fn train(hp: &HyperParams, x: &FeatureMatrix, y: &[u8]) -> Result<TrainedModel> {
    check_training(x, y)?;
    hp.validate()?;
    let rows: Vec<&[f64]> = x.rows().collect();
    let model = match hp {
        HyperParams::Logistic(p) => {
            let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
            Model::Logistic(logistic::fit(&rows, &yf, p))
        }
        HyperParams::RandomForest(p) => Model::RandomForest(forest::fit(&tree::Columns::from_rows(x), y, p)),
        HyperParams::Gbdt(p) => Model::Gbdt(gbdt::train_booster(&tree::Columns::from_rows(x), y, p)),
        HyperParams::NaiveBayes(p) => Model::NaiveBayes(naive_bayes::fit(&rows, y, p)),
        HyperParams::LinearSvm(p) => Model::LinearSvm(svm::fit(&rows, y, p)),
    };
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        feature_names: x.column_names.clone(),
        training_config: hp.clone(),
        model,
    })
}

/// Fails unless `x` carries exactly `expected` columns in the same order.
pub fn check_features(expected: &[String], x: &FeatureMatrix) -> Result<()> {
    if expected != x.column_names.as_slice() {
        return Err(Error::FeatureMismatch { expected: expected.to_vec(), got: x.column_names.clone() });
    }
    if !x.is_fully_imputed() {
        return Err(Error::NotImputed);
    }
    Ok(())
}

/// Probability of class 1 for each row of `x`.
pub fn predict_proba(model: &TrainedModel, x: &FeatureMatrix) -> Result<Vec<f64>> {
    check_features(&model.feature_names, x)?;
    let rows: Vec<&[f64]> = x.rows().collect();
    Ok(rows.par_iter().map(|r| model.predict_row(r)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::from_unnamed_rows(rows)
    }

    fn bce(y: &[u8], p: &[f64]) -> f64 {
        y.iter()
            .zip(p)
            .map(|(&t, &q)| {
                let q = q.clamp(1e-12, 1.0 - 1e-12);
                if t == 1 { -q.ln() } else { -(1.0 - q).ln() }
            })
            .sum::<f64>()
            / y.len() as f64
    }

    #[test]
    fn single_class_rejected() {
        let x = matrix(&[vec![0.0], vec![1.0]]);
        for f in ModelFamily::ALL {
            let err = train(&HyperParams::default_for(f), &x, &[1, 1]).unwrap_err();
            assert!(matches!(err, Error::SingleClassTraining), "{f:?}");
        }
    }

    #[test]
    fn logistic_separable() {
        let xs: Vec<Vec<f64>> = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0].iter().map(|&v| vec![v]).collect();
        let y = [0, 0, 0, 1, 1, 1];
        let m = train(&HyperParams::Logistic(LogisticParams { l2_lambda: 1e-4, ..Default::default() }), &matrix(&xs), &y)
            .unwrap();
        let Model::Logistic(lr) = &m.model else { unreachable!() };
        assert!(lr.weights[0] > 0.0);
        let p = predict_proba(&m, &matrix(&xs)).unwrap();
        for (q, &t) in p.iter().zip(&y) {
            assert_eq!(u8::from(*q >= 0.5), t);
        }
    }

    #[test]
    fn gbdt_zero_rounds_is_prior() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y = [1, 0, 0, 1, 0, 0, 1, 0, 0, 0];
        let m = train(&HyperParams::Gbdt(GbdtParams { n_rounds: 0, ..Default::default() }), &matrix(&xs), &y).unwrap();
        for p in predict_proba(&m, &matrix(&xs)).unwrap() {
            assert!((p - 0.3).abs() < 1e-9);
        }
    }

    #[test]
    fn gbdt_clean_split() {
        // enough rows that leaf hessians stay above min_child_weight near p = 1
        let xs: Vec<Vec<f64>> = (-100..100).map(|i| vec![i as f64 + 0.5]).collect();
        let y: Vec<u8> = xs.iter().map(|r| u8::from(r[0] > 0.0)).collect();
        let hp = HyperParams::Gbdt(GbdtParams { n_rounds: 50, max_depth: 1, ..Default::default() });
        let m = train(&hp, &matrix(&xs), &y).unwrap();
        let p = predict_proba(&m, &matrix(&xs)).unwrap();
        assert!(p.iter().zip(&y).all(|(q, &t)| u8::from(*q >= 0.5) == t));
        assert!(bce(&y, &p) < 0.1);
    }

    #[test]
    fn gbdt_huge_gamma_is_base_model() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<u8> = (0..20).map(|i| u8::from(i >= 12)).collect();
        let hp = HyperParams::Gbdt(GbdtParams { gamma: 1e9, n_rounds: 10, ..Default::default() });
        let m = train(&hp, &matrix(&xs), &y).unwrap();
        let Model::Gbdt(b) = &m.model else { unreachable!() };
        assert!(b.trees.iter().all(|t| t.nodes.len() == 1));
        for p in predict_proba(&m, &matrix(&xs)).unwrap() {
            assert!((p - 0.4).abs() < 1e-9);
        }
    }

    #[test]
    fn single_tree_forest_matches_cart() {
        let xs: Vec<Vec<f64>> = (0..30).map(|i| vec![(i * 7 % 30) as f64, (i % 4) as f64]).collect();
        let y: Vec<u8> = (0..30).map(|i| u8::from(i % 3 == 0)).collect();
        let x = matrix(&xs);
        let params = ForestParams { n_trees: 1, bootstrap: false, max_features: MaxFeatures::All, seed: 5, ..Default::default() };
        let m = train(&HyperParams::RandomForest(params), &x, &y).unwrap();
        let cols = tree::Columns::from_rows(&x);
        let cart = tree::grow_cart(
            &cols,
            &y,
            (0..30).collect(),
            &CartParams { max_depth: params.max_depth, min_leaf: params.min_leaf, max_features: MaxFeatures::All },
            &mut crate::rng::rng(0),
        );
        for r in x.rows() {
            assert_eq!(m.predict_row(r), cart.predict(r));
        }
    }

    #[test]
    fn permuted_columns_rejected() {
        let x = FeatureMatrix::from_rows(
            vec!["a".into(), "b".into()],
            vec!["s1".into(), "s2".into()],
            &[vec![0.0, 1.0], vec![1.0, 0.0]],
        );
        let m = train(&HyperParams::default_for(ModelFamily::Logistic), &x, &[0, 1]).unwrap();
        let swapped = x.select_columns(&["b".into(), "a".into()]).unwrap();
        assert!(matches!(predict_proba(&m, &swapped), Err(Error::FeatureMismatch { .. })));
    }

    #[test]
    fn duplicated_row_identical_outputs() {
        let xs: Vec<Vec<f64>> = (0..12).map(|i| vec![(i % 5) as f64, (i * 3 % 7) as f64]).collect();
        let y: Vec<u8> = (0..12).map(|i| u8::from(i % 2 == 0)).collect();
        let dup = matrix(&vec![vec![2.0, 3.0]; 5]);
        for f in ModelFamily::ALL {
            let m = train(&HyperParams::default_for(f), &matrix(&xs), &y).unwrap();
            let p = predict_proba(&m, &dup).unwrap();
            assert!(p.iter().all(|&q| q == p[0] && (0.0..=1.0).contains(&q)), "{f:?}");
        }
    }

    #[test]
    fn reload_is_bit_identical() {
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let y: Vec<u8> = xs.iter().map(|r| u8::from(r[0] + 0.3 * r[1] > 0.1)).collect();
        let x = matrix(&xs);
        for f in ModelFamily::ALL {
            let m = train(&HyperParams::default_for(f), &x, &y).unwrap();
            let back = TrainedModel::from_json(&m.to_json().unwrap()).unwrap();
            assert_eq!(back, m);
            let (a, b) = (predict_proba(&m, &x).unwrap(), predict_proba(&back, &x).unwrap());
            assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()), "{f:?}");
        }
    }

    #[test]
    fn unknown_version_rejected() {
        let x = matrix(&[vec![0.0], vec![1.0]]);
        let mut m = train(&HyperParams::default_for(ModelFamily::NaiveBayes), &x, &[0, 1]).unwrap();
        m.format_version = 99;
        assert!(matches!(TrainedModel::from_json(&m.to_json().unwrap()), Err(Error::UnknownVersion(99))));
    }

    #[test]
    fn overrides_merge_and_reject_unknown_keys() {
        let base = HyperParams::default_for(ModelFamily::Gbdt);
        let mut o = BTreeMap::new();
        o.insert("max_depth".to_string(), serde_json::json!(2));
        let HyperParams::Gbdt(p) = base.with_overrides(&o).unwrap() else { unreachable!() };
        assert_eq!(p.max_depth, 2);
        assert_eq!(p.learning_rate, 0.3);
        o.insert("depth".to_string(), serde_json::json!(2));
        assert!(matches!(base.with_overrides(&o), Err(Error::InvalidHyperParameter(_))));
    }

    fn small_dataset() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<u8>)> {
        (4usize..25).prop_flat_map(|n| {
            (
                prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), n),
                prop::collection::vec(0u8..2, n),
            )
        })
        .prop_filter("both classes", |(_, y)| y.contains(&0) && y.contains(&1))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn gbdt_training_loss_non_increasing((xs, y) in small_dataset()) {
            let cols = tree::Columns::from_rows(&matrix(&xs));
            let params = GbdtParams { n_rounds: 20, learning_rate: 0.3, gamma: 0.0, ..Default::default() };
            let mut losses = Vec::new();
            gbdt::train_booster_with(&cols, &y, &params, |_, margins| {
                let p: Vec<f64> = margins.iter().map(|&z| gbdt::sigmoid(z)).collect();
                losses.push(bce(&y, &p));
            });
            for w in losses.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
            }
        }

        #[test]
        fn constant_feature_leaves_trees_unchanged((xs, y) in small_dataset(), c in -5.0f64..5.0) {
            let padded: Vec<Vec<f64>> = xs.iter().map(|r| { let mut v = vec![c]; v.extend(r); v }).collect();
            let (x, xp) = (matrix(&xs), matrix(&padded));
            for f in [ModelFamily::Gbdt, ModelFamily::RandomForest] {
                let hp = HyperParams::default_for(f).with_seed(7);
                let hp = if let HyperParams::RandomForest(p) = hp {
                    HyperParams::RandomForest(ForestParams { n_trees: 10, max_features: MaxFeatures::All, ..p })
                } else if let HyperParams::Gbdt(p) = hp {
                    HyperParams::Gbdt(GbdtParams { n_rounds: 10, ..p })
                } else { hp };
                let a = predict_proba(&train(&hp, &x, &y).unwrap(), &x).unwrap();
                let b = predict_proba(&train(&hp, &xp, &y).unwrap(), &xp).unwrap();
                prop_assert_eq!(a, b, "{:?}", f);
            }
        }
    }
}
