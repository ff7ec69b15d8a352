//! The per-fold pipeline: every statistic (imputation means, scaling, sentiment
//! scorer, feature selection, models) is fit on training students only and then
//! applied unchanged to held-out students.

use std::collections::{BTreeMap, HashSet};

use chrono::NaiveDate;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{CommentSet, Dataset, FeatureMatrix};
use crate::ensemble::{EnsembleModel, EnsembleParams, MergeMode, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::explain::{self, ShapMethod};
use crate::models::{
    self, ForestParams, GbdtParams, HyperParams, LogisticParams, ModelFamily, NaiveBayesParams, Predictor,
    SvmParams, TrainedModel,
};
use crate::preprocess::{impute_mean, normalize, ImputationLog, ScaleMethod, ScalerParams};
use crate::rng;
use crate::sentiment::{
    feature_block, features_from_scores, train_scorer, FeatureBlockOptions, ScorerConfig, SentimentScore,
    SentimentScorer,
};

pub const ENSEMBLE_TAG: &str = "ensemble";

const MODEL_STREAM: u64 = 0x6d6f_6465_6c73;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SentimentSource {
    /// Fit a scorer on the gold-labeled comments of the training students.
    TrainFromGold,
    /// Use a previously trained scorer as is.
    Frozen { scorer: Box<SentimentScorer> },
    /// Pre-computed comment scores from an outside model.
    External { scores: Vec<SentimentScore> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SentimentSpec {
    pub enabled: bool,
    pub source: SentimentSource,
    pub scorer: ScorerConfig,
    pub block: FeatureBlockOptions,
    pub term_start: NaiveDate,
    /// Replace the sentiment block by seeded Gaussian noise (null-effect control).
    pub noise_control: bool,
}

impl Default for SentimentSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            source: SentimentSource::TrainFromGold,
            scorer: ScorerConfig::default(),
            block: FeatureBlockOptions::default(),
            term_start: NaiveDate::from_ymd_opt(2023, 9, 1).expect("valid date"),
            noise_control: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionSpec {
    pub top_k: usize,
    pub background: usize,
    /// Training rows explained to build the ranking.
    pub n_instances: usize,
    pub method: ShapMethod,
}

impl Default for SelectionSpec {
    fn default() -> Self {
        Self { top_k: 20, background: 20, n_instances: 50, method: ShapMethod::Sampling { n_permutations: 8 } }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    pub logistic: LogisticParams,
    pub random_forest: ForestParams,
    pub gbdt: GbdtParams,
    pub naive_bayes: NaiveBayesParams,
    pub linear_svm: SvmParams,
}

impl ModelParams {
    pub fn get(&self, family: ModelFamily) -> HyperParams {
        match family {
            ModelFamily::Logistic => HyperParams::Logistic(self.logistic),
            ModelFamily::RandomForest => HyperParams::RandomForest(self.random_forest),
            ModelFamily::Gbdt => HyperParams::Gbdt(self.gbdt),
            ModelFamily::NaiveBayes => HyperParams::NaiveBayes(self.naive_bayes),
            ModelFamily::LinearSvm => HyperParams::LinearSvm(self.linear_svm),
        }
    }

    pub fn set(&mut self, hp: &HyperParams) {
        match *hp {
            HyperParams::Logistic(p) => self.logistic = p,
            HyperParams::RandomForest(p) => self.random_forest = p,
            HyperParams::Gbdt(p) => self.gbdt = p,
            HyperParams::NaiveBayes(p) => self.naive_bayes = p,
            HyperParams::LinearSvm(p) => self.linear_svm = p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSpec {
    pub scale: ScaleMethod,
    pub sentiment: SentimentSpec,
    /// Stand-alone models to fit and evaluate.
    pub families: Vec<ModelFamily>,
    /// Also fit the three-member averaging ensemble.
    pub ensemble: bool,
    pub params: ModelParams,
    pub merge: MergeMode,
    pub selection: Option<SelectionSpec>,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        Self {
            scale: ScaleMethod::Zscore,
            sentiment: SentimentSpec::default(),
            families: vec![ModelFamily::Gbdt, ModelFamily::RandomForest, ModelFamily::Logistic],
            ensemble: true,
            params: ModelParams::default(),
            merge: MergeMode::FeatureConcat,
            selection: None,
            threshold: DEFAULT_THRESHOLD,
            seed: 0,
        }
    }
}

impl PipelineSpec {
    pub fn tags(&self) -> Vec<String> {
        let mut t: Vec<String> = self.families.iter().map(|f| f.as_str().to_string()).collect();
        if self.ensemble {
            t.push(ENSEMBLE_TAG.to_string());
        }
        t
    }

    /// Seed behind every model fit inside a fold.
    pub(crate) fn model_seed(fold_seed: u64) -> u64 {
        rng::derive(fold_seed, MODEL_STREAM)
    }

    pub(crate) fn family_seed(family: ModelFamily, model_seed: u64) -> u64 {
        let idx = ModelFamily::ALL.iter().position(|f| *f == family).expect("listed family") as u64;
        rng::derive(model_seed, idx)
    }

    fn seeded(&self, family: ModelFamily, model_seed: u64) -> HyperParams {
        self.params.get(family).with_seed(Self::family_seed(family, model_seed))
    }

    fn ensemble_params(&self, model_seed: u64) -> EnsembleParams {
        let pick = |f| self.seeded(f, model_seed);
        let (HyperParams::Gbdt(gbdt), HyperParams::RandomForest(random_forest), HyperParams::Logistic(logistic)) =
            (pick(ModelFamily::Gbdt), pick(ModelFamily::RandomForest), pick(ModelFamily::Logistic))
        else {
            unreachable!("families map to their own parameter types")
        };
        EnsembleParams { gbdt, random_forest, logistic }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedSentimentSource {
    Scorer { scorer: Box<SentimentScorer> },
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedSentiment {
    pub source: FittedSentimentSource,
    pub scaler: ScalerParams,
}

/// Everything needed to turn raw tabular rows and comments into model input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedFeatures {
    pub input_columns: Vec<String>,
    pub imputation: ImputationLog,
    pub scaler: ScalerParams,
    /// Tabular columns kept after selection, in input order.
    pub selected: Vec<String>,
    pub importance: Option<explain::ImportanceRanking>,
    pub sentiment: Option<FittedSentiment>,
}

/// Tabular block and (when enabled) sentiment block for one student set.
pub struct Blocks {
    pub dd: FeatureMatrix,
    pub sa: Option<FeatureMatrix>,
}

impl Blocks {
    pub fn concat(&self) -> Result<FeatureMatrix> {
        match &self.sa {
            Some(sa) => self.dd.hconcat(sa),
            None => Ok(self.dd.clone()),
        }
    }
}

fn id_hash(id: &str) -> u64 {
    // FNV-1a; stable across platforms and runs
    id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

fn raw_sentiment_block(
    spec: &PipelineSpec,
    source: &FittedSentimentSource,
    ids: &[String],
    cs: &CommentSet,
) -> FeatureMatrix {
    let sent = &spec.sentiment;
    let scores: Vec<SentimentScore> = match (source, &sent.source) {
        (FittedSentimentSource::Scorer { scorer }, _) => {
            let wanted: HashSet<String> = ids.iter().cloned().collect();
            scorer.score_all(&cs.subset(&wanted))
        }
        (FittedSentimentSource::External, SentimentSource::External { scores }) => scores.clone(),
        (FittedSentimentSource::External, _) => Vec::new(),
    };
    let rows = features_from_scores(&scores, ids, sent.term_start);
    let mut block = feature_block(&rows, sent.term_start, &sent.block);
    if sent.noise_control {
        let m = block.n_cols();
        for (i, id) in ids.iter().enumerate() {
            let mut r = rng::rng(rng::derive_path(spec.seed, &[rng::stream::NOISE, id_hash(id)]));
            for j in 0..m {
                block.values[i * m + j] = StandardNormal.sample(&mut r);
            }
        }
    }
    block
}

impl FittedFeatures {
    pub fn dd_block(&self, ds: &Dataset) -> Result<FeatureMatrix> {
        let fm = ds.feature_matrix();
        let fm = self.scaler.apply(&self.imputation.apply(&fm)?)?;
        if self.selected.len() == self.input_columns.len() {
            Ok(fm)
        } else {
            fm.select_columns(&self.selected)
        }
    }

    pub fn blocks(&self, spec: &PipelineSpec, ds: &Dataset, cs: &CommentSet) -> Result<Blocks> {
        let dd = self.dd_block(ds)?;
        let sa = match &self.sentiment {
            Some(fs) => Some(fs.scaler.apply(&raw_sentiment_block(spec, &fs.source, &ds.ids(), cs))?),
            None => None,
        };
        Ok(Blocks { dd, sa })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedEnsemble {
    Concat { model: EnsembleModel },
    OutputAverage { dd: EnsembleModel, sa: EnsembleModel },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub spec: PipelineSpec,
    pub features: FittedFeatures,
    pub models: Vec<TrainedModel>,
    pub ensemble: Option<FittedEnsemble>,
}

/// Per-student probabilities for every model tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub ids: Vec<String>,
    pub labels: Option<Vec<u8>>,
    pub by_model: BTreeMap<String, Vec<f64>>,
    /// `[p_xg, p_rf, p_lr]` behind the ensemble column.
    pub members: Option<Vec<[f64; 3]>>,
}

pub fn labels_of(ds: &Dataset) -> Result<Vec<u8>> {
    ds.labels().ok_or_else(|| Error::MissingColumn(crate::data::LABEL_COLUMN.to_string()))
}

/// Feature side of the pipeline fit on `train` (already restricted to training students).
pub fn fit_features(train: &Dataset, cs: &CommentSet, spec: &PipelineSpec, fold_seed: u64) -> Result<(FittedFeatures, Blocks)> {
    let y = labels_of(train)?;
    let fm = train.feature_matrix();
    let (imputed, imputation) = impute_mean(&fm)?;
    let (scaled, scaler) = normalize(&imputed, spec.scale)?;
    let input_columns = fm.column_names.clone();

    let sentiment = if spec.sentiment.enabled {
        let source = match &spec.sentiment.source {
            SentimentSource::TrainFromGold => {
                let cfg = ScorerConfig { seed: rng::derive(fold_seed, rng::stream::SCORER), ..spec.sentiment.scorer.clone() };
                let ids: HashSet<String> = train.ids().into_iter().collect();
                FittedSentimentSource::Scorer { scorer: Box::new(train_scorer(&cs.subset(&ids), &cfg)?) }
            }
            SentimentSource::Frozen { scorer } => FittedSentimentSource::Scorer { scorer: scorer.clone() },
            SentimentSource::External { .. } => FittedSentimentSource::External,
        };
        let raw = raw_sentiment_block(spec, &source, &train.ids(), cs);
        let (sa, sa_scaler) = normalize(&raw, spec.scale)?;
        Some((FittedSentiment { source, scaler: sa_scaler }, sa))
    } else {
        None
    };

    let (selected, importance, dd) = match &spec.selection {
        Some(sel) if sel.top_k < scaled.n_cols() => {
            let ranking = rank_tabular(&scaled, &y, spec, sel, fold_seed)?;
            let keep: HashSet<String> = explain::select_top_k(&ranking, sel.top_k)?.into_iter().collect();
            let selected: Vec<String> = input_columns.iter().filter(|c| keep.contains(*c)).cloned().collect();
            let dd = scaled.select_columns(&selected)?;
            (selected, Some(ranking), dd)
        }
        _ => (input_columns.clone(), None, scaled),
    };

    let (sentiment, sa) = match sentiment {
        Some((fs, sa)) => (Some(fs), Some(sa)),
        None => (None, None),
    };
    Ok((FittedFeatures { input_columns, imputation, scaler, selected, importance, sentiment }, Blocks { dd, sa }))
}

/// Mean |SHAP| ranking of tabular columns for an ensemble fit on those columns alone.
fn rank_tabular(
    x: &FeatureMatrix,
    y: &[u8],
    spec: &PipelineSpec,
    sel: &SelectionSpec,
    fold_seed: u64,
) -> Result<explain::ImportanceRanking> {
    let seed = rng::derive(fold_seed, rng::stream::SHAP);
    let ens = EnsembleModel::train(x, y, &spec.ensemble_params(seed))?;
    let bg_idx = explain::stratified_background(y, sel.background, seed);
    let background: Vec<Vec<f64>> = bg_idx.iter().map(|&i| x.row(i).to_vec()).collect();
    let instances = explain::stratified_background(y, sel.n_instances, rng::derive(seed, 1));
    let exps = explain::explain_rows(&ens, x, &instances, &background, sel.method, seed)?;
    explain::rank_importance(&exps)
}

fn fit_models(
    blocks: &Blocks,
    y: &[u8],
    spec: &PipelineSpec,
    model_seed: u64,
) -> Result<(Vec<TrainedModel>, Option<FittedEnsemble>)> {
    let x = blocks.concat()?;
    let mut singles = Vec::with_capacity(spec.families.len());
    for &f in &spec.families {
        singles.push(models::train(&spec.seeded(f, model_seed), &x, y)?);
    }
    if !spec.ensemble {
        return Ok((singles, None));
    }
    let ep = spec.ensemble_params(model_seed);
    let reuse = |family: ModelFamily, fallback: &dyn Fn() -> Result<TrainedModel>| -> Result<TrainedModel> {
        match singles.iter().find(|m| m.family() == family) {
            Some(m) => Ok(m.clone()),
            None => fallback(),
        }
    };
    let ensemble = match (&spec.merge, &blocks.sa) {
        (MergeMode::OutputAverage, Some(sa)) => FittedEnsemble::OutputAverage {
            dd: EnsembleModel::train(&blocks.dd, y, &ep)?,
            sa: EnsembleModel::train(sa, y, &ep)?,
        },
        _ => FittedEnsemble::Concat {
            model: EnsembleModel {
                feature_names: x.column_names.clone(),
                gbdt: reuse(ModelFamily::Gbdt, &|| models::train(&HyperParams::Gbdt(ep.gbdt), &x, y))?,
                random_forest: reuse(ModelFamily::RandomForest, &|| {
                    models::train(&HyperParams::RandomForest(ep.random_forest), &x, y)
                })?,
                logistic: reuse(ModelFamily::Logistic, &|| models::train(&HyperParams::Logistic(ep.logistic), &x, y))?,
            },
        },
    };
    Ok((singles, Some(ensemble)))
}

/// Fits the whole pipeline on the students in `ds` (callers pass the training subset).
pub fn fit_pipeline(ds: &Dataset, cs: &CommentSet, spec: &PipelineSpec, fold_seed: u64) -> Result<FittedPipeline> {
    let y = labels_of(ds)?;
    let (features, blocks) = fit_features(ds, cs, spec, fold_seed)?;
    let (models, ensemble) = fit_models(&blocks, &y, spec, PipelineSpec::model_seed(fold_seed))?;
    Ok(FittedPipeline { spec: spec.clone(), features, models, ensemble })
}

/// Fits on the training students of one fold only.
pub fn fit_fold(ds: &Dataset, cs: &CommentSet, spec: &PipelineSpec, train_ids: &HashSet<String>, fold_seed: u64) -> Result<FittedPipeline> {
    fit_pipeline(&ds.subset(train_ids), &cs.subset(train_ids), spec, fold_seed)
}

impl FittedPipeline {
    pub fn predict(&self, ds: &Dataset, cs: &CommentSet) -> Result<Predictions> {
        let blocks = self.features.blocks(&self.spec, ds, cs)?;
        let x = blocks.concat()?;
        let mut by_model = BTreeMap::new();
        for m in &self.models {
            by_model.insert(m.family().as_str().to_string(), models::predict_proba(m, &x)?);
        }
        let mut members = None;
        if let Some(e) = &self.ensemble {
            let mp = match e {
                FittedEnsemble::Concat { model } => model.member_probs(&x)?,
                FittedEnsemble::OutputAverage { dd, sa } => {
                    let sa_x = blocks.sa.as_ref().expect("sentiment block present for output averaging");
                    let a = dd.member_probs(&blocks.dd)?;
                    let b = sa.member_probs(sa_x)?;
                    a.iter().zip(&b).map(|(p, q)| [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1]), 0.5 * (p[2] + q[2])]).collect()
                }
            };
            let p: Vec<f64> = mp.iter().map(|&[a, b, c]| crate::ensemble::average_probs(a, b, c)).collect::<Result<_>>()?;
            by_model.insert(ENSEMBLE_TAG.to_string(), p);
            members = Some(mp);
        }
        Ok(Predictions { ids: ds.ids(), labels: ds.labels(), by_model, members })
    }

    /// Row-level predictor over [`Self::design_matrix`] rows for one model tag.
    pub fn predictor(&self, tag: &str) -> Option<Box<dyn Predictor + '_>> {
        if tag == ENSEMBLE_TAG {
            return match self.ensemble.as_ref()? {
                FittedEnsemble::Concat { model } => Some(Box::new(model)),
                FittedEnsemble::OutputAverage { dd, sa } => Some(Box::new(SplitAverage { dd, sa, split: self.features.selected.len() })),
            };
        }
        self.models.iter().find(|m| m.family().as_str() == tag).map(|m| Box::new(m) as Box<dyn Predictor>)
    }

    /// Model input matrix for `ds` (after every fitted transform).
    pub fn design_matrix(&self, ds: &Dataset, cs: &CommentSet) -> Result<FeatureMatrix> {
        self.features.blocks(&self.spec, ds, cs)?.concat()
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}

/// Output-averaging ensemble seen as one function of the concatenated row.
struct SplitAverage<'a> {
    dd: &'a EnsembleModel,
    sa: &'a EnsembleModel,
    split: usize,
}

impl Predictor for SplitAverage<'_> {
    fn predict_row(&self, x: &[f64]) -> f64 {
        let (a, b) = x.split_at(self.split);
        0.5 * (self.dd.predict_row(a) + self.sa.predict_row(b))
    }
}
