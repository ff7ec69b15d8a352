//! The JSON run configuration and its resolution against command-line flags.
//!
//! Precedence for every setting: command-line flag, then config file, then the
//! built-in default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use sentidrop_core::ensemble::MergeMode;
use sentidrop_core::eval::{ModelParams, PipelineSpec, SelectionSpec, SentimentSource, SentimentSpec};
use sentidrop_core::explain::ShapMethod;
use sentidrop_core::models::{HyperParams, ModelFamily};
use sentidrop_core::preprocess::{ScaleMethod, DEFAULT_OUTLIER_THRESHOLD};
use sentidrop_core::sentiment::{load_external_scores, FeatureBlockOptions, ScorerConfig, SentimentScorer};
use sentidrop_core::synth::{Preset, SynthConfig};

use crate::error::{CliError, CliResult};

pub const DEFAULT_OUT: &str = "run";
pub const STUDENTS_FILE: &str = "students.csv";
pub const COMMENTS_FILE: &str = "comments.jsonl";
pub const SCORER_FILE: &str = "scorer.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub tabular: Option<PathBuf>,
    pub comments: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSection {
    pub preset: String,
    /// Any `SynthConfig` field, applied on top of the preset.
    #[serde(flatten)]
    pub overrides: Map<String, Value>,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self { preset: "default".into(), overrides: Map::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    pub scale: ScaleMethod,
    pub outlier_threshold: f64,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        Self { scale: ScaleMethod::Zscore, outlier_threshold: DEFAULT_OUTLIER_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SentimentSection {
    pub enabled: bool,
    /// Frozen scorer file; when absent a scorer is trained from gold labels.
    pub scorer: Option<PathBuf>,
    /// Pre-computed comment scores, used instead of any scorer.
    pub external_scores: Option<PathBuf>,
    /// Overrides for the scorer training configuration.
    pub train: Map<String, Value>,
    /// Defaults to the synthetic generator's term start.
    pub term_start: Option<NaiveDate>,
    pub block: FeatureBlockOptions,
    pub noise_control: bool,
}

impl Default for SentimentSection {
    fn default() -> Self {
        Self {
            enabled: true,
            scorer: None,
            external_scores: None,
            train: Map::new(),
            term_start: None,
            block: FeatureBlockOptions::default(),
            noise_control: false,
        }
    }
}

fn default_k() -> usize {
    sentidrop_core::eval::DEFAULT_K
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case", deny_unknown_fields)]
pub enum CvSection {
    Kfold {
        #[serde(default = "default_k")]
        k: usize,
    },
    /// Students whose `column` equals `value` form the test set (e.g. one academic year).
    Holdout { column: String, value: f64 },
}

impl Default for CvSection {
    fn default() -> Self {
        CvSection::Kfold { k: default_k() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub family: ModelFamily,
    pub params: BTreeMap<String, Vec<Value>>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            family: ModelFamily::Gbdt,
            params: BTreeMap::from([
                ("learning_rate".into(), vec![0.05.into(), 0.1.into(), 0.3.into()]),
                ("max_depth".into(), vec![2.into(), 3.into(), 6.into()]),
            ]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    /// Model tag to explain (`ensemble` or a family name).
    pub model: String,
    pub background: usize,
    /// The first `instances` students (input order) are explained.
    pub instances: usize,
    pub method: ShapMethod,
    pub top_k: usize,
}

impl Default for ExplainSection {
    fn default() -> Self {
        Self {
            model: sentidrop_core::eval::ENSEMBLE_TAG.into(),
            background: 50,
            instances: 10,
            method: ShapMethod::Auto { max_exact: 10, n_permutations: 16 },
            top_k: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub seed: Option<u64>,
    pub synth: SynthSection,
    pub preprocess: PreprocessSection,
    pub sentiment: SentimentSection,
    /// Per-family hyper-parameter overrides keyed by family name.
    pub models: BTreeMap<String, Map<String, Value>>,
    pub families: Vec<ModelFamily>,
    pub ensemble: bool,
    pub merge: MergeMode,
    pub threshold: f64,
    pub cv: CvSection,
    pub grid: GridSection,
    /// In-fold SHAP selection of tabular columns before model fitting.
    pub selection: Option<SelectionSpec>,
    pub explain: ExplainSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            seed: None,
            synth: SynthSection::default(),
            preprocess: PreprocessSection::default(),
            sentiment: SentimentSection::default(),
            models: BTreeMap::new(),
            families: ModelFamily::ALL.to_vec(),
            ensemble: true,
            merge: MergeMode::FeatureConcat,
            threshold: sentidrop_core::ensemble::DEFAULT_THRESHOLD,
            cv: CvSection::default(),
            grid: GridSection::default(),
            selection: None,
            explain: ExplainSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
    }
}

/// Overrides taken from command-line flags.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub tabular: Option<PathBuf>,
    pub comments: Option<PathBuf>,
}

/// Recursively overlays `overrides` on `base`, rejecting keys `base` lacks.
fn overlay(base: &mut Value, overrides: &Map<String, Value>, field: &str) -> CliResult<()> {
    let Value::Object(obj) = base else {
        return Err(CliError::Config(format!("{field}: not an object")));
    };
    for (k, v) in overrides {
        let path = format!("{field}.{k}");
        match (obj.get_mut(k), v) {
            (None, _) => return Err(CliError::Config(format!("{path}: unknown field"))),
            (Some(slot @ Value::Object(_)), Value::Object(inner)) => overlay(slot, inner, &path)?,
            (Some(slot), v) => *slot = v.clone(),
        }
    }
    Ok(())
}

fn merged<T: Serialize + serde::de::DeserializeOwned>(base: &T, overrides: &Map<String, Value>, field: &str) -> CliResult<T> {
    let mut v = serde_json::to_value(base)?;
    overlay(&mut v, overrides, field)?;
    serde_json::from_value(v).map_err(|e| CliError::Config(format!("{field}: {e}")))
}

/// A configuration with flags applied and defaults filled in.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: PipelineConfig,
    pub config_hash: String,
    pub seed: u64,
    pub out: PathBuf,
    pub synth: SynthConfig,
    pub scorer: ScorerConfig,
    pub params: ModelParams,
}

impl Context {
    pub fn resolve(mut config: PipelineConfig, flags: &Overrides) -> CliResult<Self> {
        if let Some(s) = flags.seed {
            config.seed = Some(s);
        }
        let seed = config.seed.unwrap_or(0);
        config.seed = Some(seed);
        if let Some(o) = &flags.out {
            config.paths.out = Some(o.clone());
        }
        let out = config.paths.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        config.paths.out = Some(out.clone());
        if let Some(t) = &flags.tabular {
            config.paths.tabular = Some(t.clone());
        }
        if let Some(c) = &flags.comments {
            config.paths.comments = Some(c.clone());
        }

        let preset = Preset::parse(&config.synth.preset)
            .ok_or_else(|| CliError::Config(format!("synth.preset: unknown preset `{}`", config.synth.preset)))?;
        let mut synth_base = preset.config();
        synth_base.seed = seed;
        let synth: SynthConfig = merged(&synth_base, &config.synth.overrides, "synth")?;
        let scorer: ScorerConfig = merged(&ScorerConfig::default(), &config.sentiment.train, "sentiment.train")?;

        let mut params = ModelParams::default();
        for (name, values) in &config.models {
            let family = ModelFamily::parse(name)
                .ok_or_else(|| CliError::Config(format!("models.{name}: unknown model family")))?;
            let hp: HyperParams = HyperParams::default_for(family)
                .with_overrides(&values.iter().map(|(k, v)| (k.clone(), v.clone())).collect())?;
            hp.validate()?;
            params.set(&hp);
        }
        if config.sentiment.scorer.is_some() && config.sentiment.external_scores.is_some() {
            return Err(CliError::Config(
                "sentiment.scorer: cannot be combined with sentiment.external_scores".into(),
            ));
        }
        if !(0.0..=1.0).contains(&config.threshold) {
            return Err(CliError::Config(format!("threshold: {} outside [0, 1]", config.threshold)));
        }

        let canonical = serde_json::to_string(&config)?;
        let config_hash = hex::encode(Sha256::digest(canonical.as_bytes()));
        Ok(Self { config, config_hash, seed, out, synth, scorer, params })
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn tabular_path(&self) -> PathBuf {
        self.config.paths.tabular.clone().unwrap_or_else(|| self.out_path(STUDENTS_FILE))
    }

    pub fn comments_path(&self) -> PathBuf {
        self.config.paths.comments.clone().unwrap_or_else(|| self.out_path(COMMENTS_FILE))
    }

    pub fn term_start(&self) -> NaiveDate {
        self.config.sentiment.term_start.unwrap_or(self.synth.term_start)
    }

    /// Comments are required whenever the sentiment block is built from text.
    pub fn needs_comments(&self) -> bool {
        self.config.sentiment.enabled && self.config.sentiment.external_scores.is_none()
    }

    fn source(&self) -> CliResult<SentimentSource> {
        let s = &self.config.sentiment;
        if let Some(p) = &s.external_scores {
            let scores = load_external_scores(p, &self.scorer.thresholds)?;
            return Ok(SentimentSource::External { scores });
        }
        if let Some(p) = &s.scorer {
            return Ok(SentimentSource::Frozen { scorer: Box::new(SentimentScorer::load(p)?) });
        }
        Ok(SentimentSource::TrainFromGold)
    }

    /// Pipeline specification for model-fitting commands.
    pub fn spec(&self) -> CliResult<PipelineSpec> {
        let c = &self.config;
        let source = if c.sentiment.enabled { self.source()? } else { SentimentSource::TrainFromGold };
        Ok(PipelineSpec {
            scale: c.preprocess.scale,
            sentiment: SentimentSpec {
                enabled: c.sentiment.enabled,
                source,
                scorer: self.scorer.clone(),
                block: c.sentiment.block,
                term_start: self.term_start(),
                noise_control: c.sentiment.noise_control,
            },
            families: c.families.clone(),
            ensemble: c.ensemble,
            params: self.params.clone(),
            merge: c.merge,
            selection: c.selection.clone(),
            threshold: c.threshold,
            seed: self.seed,
        })
    }
}
