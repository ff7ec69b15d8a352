//! One function per subcommand. Each writes its artifacts into the output
//! directory and returns their file names for the run manifest.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sentidrop_core::data::{self, CommentSet, Dataset, StudentRecord, LABEL_COLUMN};
use sentidrop_core::ensemble::{prediction_rows, write_predictions};
use sentidrop_core::eval::{
    ablation, column_holdout, cross_validate, grid_search, group_kfold, write_flat, AblationRow, CvReport,
    FittedPipeline, FoldPlan, GridReport, MetricSummary, MetricsReport, SentimentSource,
};
use sentidrop_core::explain::{self, ImportanceRanking, ShapExplanation};
use sentidrop_core::preprocess::{correlation_matrix, flag_outliers, impute_mean, normalize, ImputationLog, ScalerParams};
use sentidrop_core::rng;
use sentidrop_core::sentiment::{
    aggregate_monthly, feature_block, features_from_scores, paired_ttest, temporal_risk, train_scorer,
    ttest_differences, SentimentScore, SentimentScorer, TTestResult, TemporalReport,
};
use sentidrop_core::synth::generate;

use crate::config::{Context, CvSection, COMMENTS_FILE, SCORER_FILE, STUDENTS_FILE};
use crate::error::{CliError, CliResult};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const VALIDATION_FILE: &str = "validation.json";
pub const PREPROCESSED_FILE: &str = "preprocessed.csv";
pub const PREPROCESS_PARAMS_FILE: &str = "preprocess_params.json";
pub const CORRELATION_FILE: &str = "correlation.json";
pub const SCORES_FILE: &str = "scores.jsonl";
pub const MONTHLY_FILE: &str = "monthly_sentiment.csv";
pub const SENTIMENT_FEATURES_FILE: &str = "sentiment_features.csv";
pub const TTEST_FILE: &str = "ttest.json";
pub const MODEL_FILE: &str = "model.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const MODEL_PREDICTIONS_FILE: &str = "model_predictions.csv";
pub const SHAP_FILE: &str = "shap.csv";
pub const IMPORTANCE_FILE: &str = "shap_importance.json";
pub const SELECTED_FILE: &str = "selected_features.json";
pub const CV_METRICS_FILE: &str = "cv_metrics.json";
pub const CV_PREDICTIONS_FILE: &str = "cv_predictions.csv";
pub const CV_FLAT_FILE: &str = "cv_flat.csv";
pub const GRID_FILE: &str = "grid.json";
pub const GRID_TABLE_FILE: &str = "grid_table.csv";
pub const ABLATION_FILE: &str = "ablation.json";
pub const ABLATION_HEATMAP_FILE: &str = "ablation_heatmap.csv";
pub const ABLATION_DELTAS_FILE: &str = "ablation_deltas.csv";
pub const ABLATION_FLAT_FILE: &str = "ablation_flat.csv";

pub type Artifacts = Vec<String>;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Opens `name` in the output directory for buffered writing.
pub fn create(ctx: &Context, name: &str) -> CliResult<BufWriter<File>> {
    let path = ctx.out_path(name);
    Ok(BufWriter::new(File::create(&path).map_err(|e| CliError::io(&path, e))?))
}

fn finish(mut w: BufWriter<File>, name: &str) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(name, e))
}

fn require_file(path: &Path, field: &str, why: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{field}: file not found: {}{why}", path.display())))
    }
}

pub fn load_dataset(ctx: &Context) -> CliResult<Dataset> {
    let path = ctx.tabular_path();
    require_file(&path, "paths.tabular", "")?;
    Ok(data::load_tabular(&path, None)?)
}

/// Comments when sentiment needs them (missing file is a config error) and
/// whatever is present otherwise.
pub fn load_comments(ctx: &Context, required: bool) -> CliResult<CommentSet> {
    let path = ctx.comments_path();
    if required {
        require_file(&path, "paths.comments", " (required while sentiment is enabled)")?;
    }
    if path.is_file() {
        Ok(data::load_comments(&path)?)
    } else {
        Ok(CommentSet::new(Vec::new()))
    }
}

pub fn gen(ctx: &Context) -> CliResult<Artifacts> {
    let (ds, cs, truth) = generate(&ctx.synth)?;
    data::save_tabular(&ds, ctx.out_path(STUDENTS_FILE))?;
    data::save_comments(&cs, ctx.out_path(COMMENTS_FILE))?;
    write_json(&ctx.out_path(GROUND_TRUTH_FILE), &truth)?;
    Ok(vec![STUDENTS_FILE.into(), COMMENTS_FILE.into(), GROUND_TRUTH_FILE.into()])
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PreprocessParams {
    pub imputation: ImputationLog,
    pub scaler: ScalerParams,
    pub outlier_threshold: f64,
    /// Per feature: cells beyond the outlier threshold (flagged, never removed).
    pub outlier_counts: Vec<(String, usize)>,
}

pub fn preprocess(ctx: &Context) -> CliResult<Artifacts> {
    let ds = load_dataset(ctx)?;
    let cs = load_comments(ctx, false)?;
    write_json(&ctx.out_path(VALIDATION_FILE), &data::validate(&ds, &cs))?;

    let fm = ds.feature_matrix();
    let (imputed, imputation) = impute_mean(&fm)?;
    let thr = ctx.config.preprocess.outlier_threshold;
    let flags = flag_outliers(&imputed, thr)?;
    let m = imputed.n_cols();
    let outlier_counts = (0..m)
        .map(|j| (imputed.column_names[j].clone(), (0..imputed.n_rows()).filter(|&i| flags[i * m + j]).count()))
        .collect();
    let (scaled, scaler) = normalize(&imputed, ctx.config.preprocess.scale)?;

    let records = ds
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| StudentRecord {
            student_id: r.student_id.clone(),
            features: scaled.row(i).iter().map(|&v| Some(v)).collect(),
            label: r.label,
        })
        .collect();
    data::save_tabular(&Dataset::new(scaled.column_names.clone(), records)?, ctx.out_path(PREPROCESSED_FILE))?;
    let params = PreprocessParams { imputation, scaler, outlier_threshold: thr, outlier_counts };
    write_json(&ctx.out_path(PREPROCESS_PARAMS_FILE), &params)?;

    let y: Option<Vec<f64>> = ds.labels().map(|l| l.into_iter().map(f64::from).collect());
    let corr = correlation_matrix(&imputed, y.as_deref().map(|y| (LABEL_COLUMN, y)))?;
    write_json(&ctx.out_path(CORRELATION_FILE), &corr)?;
    Ok(vec![VALIDATION_FILE.into(), PREPROCESSED_FILE.into(), PREPROCESS_PARAMS_FILE.into(), CORRELATION_FILE.into()])
}

pub fn train_scorer_cmd(ctx: &Context) -> CliResult<Artifacts> {
    let cs = load_comments(ctx, true)?;
    let cfg = sentidrop_core::sentiment::ScorerConfig {
        seed: rng::derive(ctx.seed, rng::stream::SCORER),
        ..ctx.scorer.clone()
    };
    train_scorer(&cs, &cfg)?.save(ctx.out_path(SCORER_FILE))?;
    Ok(vec![SCORER_FILE.into()])
}

/// Scores from external input, the configured scorer, or the run's trained scorer.
fn obtain_scores(ctx: &Context) -> CliResult<Vec<SentimentScore>> {
    let s = &ctx.config.sentiment;
    if let Some(p) = &s.external_scores {
        return Ok(sentidrop_core::sentiment::load_external_scores(p, &ctx.scorer.thresholds)?);
    }
    let path: PathBuf = match &s.scorer {
        Some(p) => p.clone(),
        None => ctx.out_path(SCORER_FILE),
    };
    if !path.is_file() {
        return Err(CliError::MissingArtifacts(format!(
            "{} (run train-scorer or set sentiment.scorer)",
            path.display()
        )));
    }
    let scorer = SentimentScorer::load(&path)?;
    Ok(scorer.score_all(&load_comments(ctx, true)?))
}

pub fn score(ctx: &Context) -> CliResult<Artifacts> {
    let ds = load_dataset(ctx)?;
    let scores = obtain_scores(ctx)?;
    let mut w = create(ctx, SCORES_FILE)?;
    for s in &scores {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n").map_err(|e| CliError::io(SCORES_FILE, e))?;
    }
    finish(w, SCORES_FILE)?;

    let mut w = csv::Writer::from_writer(create(ctx, MONTHLY_FILE)?);
    w.write_record(["student_id", "month", "mean_score", "comment_count"])?;
    for m in aggregate_monthly(&scores) {
        w.write_record([m.student_id, m.month.to_string(), m.mean_score.to_string(), m.comment_count.to_string()])?;
    }
    w.flush().map_err(|e| CliError::io(MONTHLY_FILE, e))?;

    let term_start = ctx.term_start();
    let rows = features_from_scores(&scores, &ds.ids(), term_start);
    let block = feature_block(&rows, term_start, &ctx.config.sentiment.block);
    let mut w = csv::Writer::from_writer(create(ctx, SENTIMENT_FEATURES_FILE)?);
    let mut header = vec!["student_id".to_string()];
    header.extend(block.column_names.iter().cloned());
    w.write_record(&header)?;
    for (i, id) in block.row_ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(block.row(i).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(SENTIMENT_FEATURES_FILE, e))?;
    Ok(vec![SCORES_FILE.into(), MONTHLY_FILE.into(), SENTIMENT_FEATURES_FILE.into()])
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TTestArtifact {
    /// First-month mean minus last-month mean, tested against zero.
    pub first_vs_last: TTestResult,
    pub temporal_risk: Option<TemporalReport>,
}

pub fn ttest(ctx: &Context) -> CliResult<Artifacts> {
    let ds = load_dataset(ctx)?;
    let scores = obtain_scores(ctx)?;
    let term_start = ctx.term_start();
    let rows = features_from_scores(&scores, &ds.ids(), term_start);
    let first_vs_last = paired_ttest(&ttest_differences(&rows, term_start), 0.0)?;
    let temporal = ds.labels().map(|y| {
        let map: HashMap<String, u8> = ds.ids().into_iter().zip(y).collect();
        temporal_risk(&rows, &map)
    });
    write_json(&ctx.out_path(TTEST_FILE), &TTestArtifact { first_vs_last, temporal_risk: temporal })?;
    Ok(vec![TTEST_FILE.into()])
}

fn comments_for_spec(ctx: &Context, enabled: bool) -> CliResult<CommentSet> {
    load_comments(ctx, enabled && ctx.config.sentiment.external_scores.is_none())
}

pub fn train(ctx: &Context) -> CliResult<Artifacts> {
    let ds = load_dataset(ctx)?;
    let spec = ctx.spec()?;
    let cs = comments_for_spec(ctx, spec.sentiment.enabled)?;
    sentidrop_core::eval::fit_pipeline(&ds, &cs, &spec, ctx.seed)?.save(ctx.out_path(MODEL_FILE))?;
    Ok(vec![MODEL_FILE.into()])
}

fn load_model(ctx: &Context, path: Option<&Path>) -> CliResult<FittedPipeline> {
    let path = path.map_or_else(|| ctx.out_path(MODEL_FILE), Path::to_path_buf);
    if !path.is_file() {
        return Err(CliError::MissingArtifacts(format!("{} (run train first)", path.display())));
    }
    Ok(FittedPipeline::load(&path)?)
}

fn inputs_for(ctx: &Context, fitted: &FittedPipeline) -> CliResult<(Dataset, CommentSet)> {
    let ds = load_dataset(ctx)?;
    let needs = fitted.spec.sentiment.enabled && !matches!(fitted.spec.sentiment.source, SentimentSource::External { .. });
    Ok((ds, load_comments(ctx, needs)?))
}

pub fn predict(ctx: &Context, model: Option<&Path>) -> CliResult<Artifacts> {
    let fitted = load_model(ctx, model)?;
    let (ds, cs) = inputs_for(ctx, &fitted)?;
    let p = fitted.predict(&ds, &cs)?;
    let mut artifacts = vec![MODEL_PREDICTIONS_FILE.to_string()];
    if let Some(members) = &p.members {
        write_predictions(&prediction_rows(&p.ids, members, fitted.spec.threshold), create(ctx, PREDICTIONS_FILE)?)?;
        artifacts.insert(0, PREDICTIONS_FILE.into());
    }
    let mut w = csv::Writer::from_writer(create(ctx, MODEL_PREDICTIONS_FILE)?);
    let tags: Vec<&String> = p.by_model.keys().collect();
    let mut header = vec!["student_id".to_string()];
    header.extend(tags.iter().map(|t| format!("p_{t}")));
    w.write_record(&header)?;
    for (i, id) in p.ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(tags.iter().map(|t| p.by_model[*t][i].to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(MODEL_PREDICTIONS_FILE, e))?;
    Ok(artifacts)
}

fn explanations(ctx: &Context, model: Option<&Path>) -> CliResult<(String, Vec<ShapExplanation>)> {
    let fitted = load_model(ctx, model)?;
    let (ds, cs) = inputs_for(ctx, &fitted)?;
    let x = fitted.design_matrix(&ds, &cs)?;
    let ex = &ctx.config.explain;
    let predictor = fitted
        .predictor(&ex.model)
        .ok_or_else(|| CliError::Config(format!("explain.model: no fitted model `{}` in the pipeline", ex.model)))?;
    let seed = rng::derive(ctx.seed, rng::stream::SHAP);
    let bg_rows = match ds.labels() {
        Some(y) => explain::stratified_background(&y, ex.background, seed),
        None => (0..ex.background.min(x.n_rows())).collect(),
    };
    let background: Vec<Vec<f64>> = bg_rows.iter().map(|&i| x.row(i).to_vec()).collect();
    let rows: Vec<usize> = (0..ex.instances.min(x.n_rows())).collect();
    let exps = explain::explain_rows(predictor.as_ref(), &x, &rows, &background, ex.method, seed)?;
    Ok((ex.model.clone(), exps))
}

pub fn explain_cmd(ctx: &Context, model: Option<&Path>) -> CliResult<Artifacts> {
    let (_, exps) = explanations(ctx, model)?;
    explain::write_explanations(&exps, create(ctx, SHAP_FILE)?)?;
    write_json(&ctx.out_path(IMPORTANCE_FILE), &explain::rank_importance(&exps)?)?;
    Ok(vec![SHAP_FILE.into(), IMPORTANCE_FILE.into()])
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Selection {
    pub model: String,
    pub top_k: usize,
    pub selected: Vec<String>,
    pub ranking: ImportanceRanking,
}

pub fn select_features(ctx: &Context, model: Option<&Path>, top_k: Option<usize>) -> CliResult<Artifacts> {
    let (tag, exps) = explanations(ctx, model)?;
    let ranking = explain::rank_importance(&exps)?;
    let top_k = top_k.unwrap_or(ctx.config.explain.top_k).min(ranking.entries.len());
    let selected = explain::select_top_k(&ranking, top_k)?;
    write_json(&ctx.out_path(SELECTED_FILE), &Selection { model: tag, top_k, selected, ranking })?;
    Ok(vec![SELECTED_FILE.into()])
}

fn plan(ctx: &Context, ds: &Dataset, k: Option<usize>) -> CliResult<FoldPlan> {
    Ok(match (&ctx.config.cv, k) {
        (_, Some(k)) | (&CvSection::Kfold { k }, None) => group_kfold(&ds.ids(), k, ctx.seed)?,
        (CvSection::Holdout { column, value }, None) => column_holdout(ds, column, *value)?,
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub reports: Vec<MetricsReport>,
}

/// Metrics-only view of a CV run (predictions go to their own CSV).
#[derive(Debug, Serialize, Deserialize)]
pub struct CvMetrics {
    pub tags: Vec<String>,
    pub folds: Vec<FoldMetrics>,
    pub aggregate: Vec<MetricSummary>,
}

impl From<&CvReport> for CvMetrics {
    fn from(r: &CvReport) -> Self {
        Self {
            tags: r.tags.clone(),
            folds: r
                .folds
                .iter()
                .map(|f| FoldMetrics { fold: f.fold, n_train: f.n_train, n_test: f.n_test, reports: f.reports.clone() })
                .collect(),
            aggregate: r.aggregate.clone(),
        }
    }
}

pub fn cv(ctx: &Context, k: Option<usize>) -> CliResult<Artifacts> {
    let ds = load_dataset(ctx)?;
    let spec = ctx.spec()?;
    let cs = comments_for_spec(ctx, spec.sentiment.enabled)?;
    let report = cross_validate(&ds, &cs, &spec, &plan(ctx, &ds, k)?)?;
    write_json(&ctx.out_path(CV_METRICS_FILE), &CvMetrics::from(&report))?;

    let mut w = csv::Writer::from_writer(create(ctx, CV_PREDICTIONS_FILE)?);
    let mut header = vec!["student_id".to_string(), "fold".to_string(), "label".to_string()];
    header.extend(report.tags.iter().map(|t| format!("p_{t}")));
    w.write_record(&header)?;
    for f in &report.folds {
        let p = &f.predictions;
        for (i, id) in p.ids.iter().enumerate() {
            let label = p.labels.as_ref().map_or(String::new(), |y| y[i].to_string());
            let mut rec = vec![id.clone(), f.fold.to_string(), label];
            rec.extend(report.tags.iter().map(|t| p.by_model[t][i].to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| CliError::io(CV_PREDICTIONS_FILE, e))?;
    let arm = if spec.sentiment.enabled { "with_sentiment" } else { "without_sentiment" };
    write_flat(&[(arm, &report)], create(ctx, CV_FLAT_FILE)?)?;
    Ok(vec![CV_METRICS_FILE.into(), CV_PREDICTIONS_FILE.into(), CV_FLAT_FILE.into()])
}

pub fn grid(ctx: &Context, k: Option<usize>) -> CliResult<Artifacts> {
    let ds = load_dataset(ctx)?;
    let spec = ctx.spec()?;
    let cs = comments_for_spec(ctx, spec.sentiment.enabled)?;
    let g = &ctx.config.grid;
    let report: GridReport = grid_search(&ds, &cs, &spec, g.family, &g.params, &plan(ctx, &ds, k)?)?;
    write_json(&ctx.out_path(GRID_FILE), &report)?;
    let mut w = csv::Writer::from_writer(create(ctx, GRID_TABLE_FILE)?);
    let mut header = vec!["config".to_string(), "best".to_string()];
    for name in sentidrop_core::eval::METRIC_NAMES {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_std"));
    }
    w.write_record(&header)?;
    for (i, row) in report.rows.iter().enumerate() {
        let mut rec = vec![row.key.clone(), u8::from(i == report.best).to_string()];
        for s in &row.aggregate {
            rec.push(s.mean.to_string());
            rec.push(s.std.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(GRID_TABLE_FILE, e))?;
    Ok(vec![GRID_FILE.into(), GRID_TABLE_FILE.into()])
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AblationMetrics {
    pub rows: Vec<AblationRow>,
    pub with_sentiment: CvMetrics,
    pub without_sentiment: CvMetrics,
}

pub fn ablate(ctx: &Context, k: Option<usize>) -> CliResult<Artifacts> {
    let ds = load_dataset(ctx)?;
    let mut with_ctx_spec = ctx.spec()?;
    if !with_ctx_spec.sentiment.enabled {
        // the with-sentiment arm still needs a source
        let mut c = ctx.clone();
        c.config.sentiment.enabled = true;
        with_ctx_spec = c.spec()?;
    }
    let cs = comments_for_spec(ctx, true)?;
    let report = ablation(&ds, &cs, &with_ctx_spec, &plan(ctx, &ds, k)?)?;
    let view = AblationMetrics {
        rows: report.rows.clone(),
        with_sentiment: CvMetrics::from(&report.with_sentiment),
        without_sentiment: CvMetrics::from(&report.without_sentiment),
    };
    write_json(&ctx.out_path(ABLATION_FILE), &view)?;
    report.write_heatmap(create(ctx, ABLATION_HEATMAP_FILE)?)?;
    report.write_deltas(create(ctx, ABLATION_DELTAS_FILE)?)?;
    write_flat(&report.arms(), create(ctx, ABLATION_FLAT_FILE)?)?;
    Ok(vec![ABLATION_FILE.into(), ABLATION_HEATMAP_FILE.into(), ABLATION_DELTAS_FILE.into(), ABLATION_FLAT_FILE.into()])
}
