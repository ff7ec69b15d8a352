//! Command surface for the dropout-prediction toolkit.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{Context, Overrides, PipelineConfig};
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "sentidrop", version, about = "Sentiment-aware student dropout prediction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output (run) directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Tabular CSV input, overriding paths.tabular.
    #[arg(long, global = true)]
    pub tabular: Option<PathBuf>,
    /// Comments JSONL input, overriding paths.comments.
    #[arg(long, global = true)]
    pub comments: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort.
    Gen,
    /// Validate, impute, scale and correlate the tabular data.
    Preprocess,
    /// Train the comment scorer on gold-labeled comments.
    TrainScorer,
    /// Score comments and build monthly and per-student sentiment features.
    Score,
    /// Paired t-test of first- versus last-month sentiment plus temporal risk groups.
    Ttest,
    /// Fit the full pipeline on all labeled students.
    Train,
    /// Predict with a fitted pipeline.
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Shapley attributions for the first students.
    Explain {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Rank features by mean |SHAP| and keep the top k.
    SelectFeatures {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Student-grouped cross-validation.
    Cv {
        #[arg(long)]
        k: Option<usize>,
    },
    /// Hyper-parameter grid search under cross-validation.
    Grid {
        #[arg(long)]
        k: Option<usize>,
    },
    /// With versus without the sentiment block on identical folds.
    Ablate {
        #[arg(long)]
        k: Option<usize>,
    },
    /// Every stage in order, ending with the report.
    Pipeline,
    /// Plot-ready CSVs from a run directory.
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Preprocess => "preprocess",
            Command::TrainScorer => "train-scorer",
            Command::Score => "score",
            Command::Ttest => "ttest",
            Command::Train => "train",
            Command::Predict { .. } => "predict",
            Command::Explain { .. } => "explain",
            Command::SelectFeatures { .. } => "select-features",
            Command::Cv { .. } => "cv",
            Command::Grid { .. } => "grid",
            Command::Ablate { .. } => "ablate",
            Command::Pipeline => "pipeline",
            Command::Report => "report",
        }
    }
}

pub fn context(cli: &Cli) -> CliResult<Context> {
    let config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let flags = Overrides { seed: cli.seed, out: cli.out.clone(), tabular: cli.tabular.clone(), comments: cli.comments.clone() };
    Context::resolve(config, &flags)
}

fn stage(ctx: &Context, command: &Command) -> CliResult<Vec<String>> {
    use commands::*;
    Ok(match command {
        Command::Gen => gen(ctx)?,
        Command::Preprocess => preprocess(ctx)?,
        Command::TrainScorer => train_scorer_cmd(ctx)?,
        Command::Score => score(ctx)?,
        Command::Ttest => ttest(ctx)?,
        Command::Train => train(ctx)?,
        Command::Predict { model } => predict(ctx, model.as_deref())?,
        Command::Explain { model } => explain_cmd(ctx, model.as_deref())?,
        Command::SelectFeatures { model, top_k } => select_features(ctx, model.as_deref(), *top_k)?,
        Command::Cv { k } => cv(ctx, *k)?,
        Command::Grid { k } => grid(ctx, *k)?,
        Command::Ablate { k } => ablate(ctx, *k)?,
        Command::Report => report::report(&ctx.out)?,
        Command::Pipeline => return pipeline(ctx),
    })
}

/// The stage sequence `pipeline` runs for this configuration.
pub fn pipeline_stages(ctx: &Context) -> CliResult<Vec<Command>> {
    let s = &ctx.config.sentiment;
    let mut stages = vec![Command::Preprocess];
    if s.enabled {
        if s.scorer.is_none() && s.external_scores.is_none() {
            stages.push(Command::TrainScorer);
        }
        stages.extend([Command::Score, Command::Ttest]);
    }
    stages.extend([
        Command::Cv { k: None },
        Command::Train,
        Command::Predict { model: None },
        Command::Explain { model: None },
        Command::Ablate { k: None },
        Command::Report,
    ]);
    Ok(stages)
}

fn pipeline(ctx: &Context) -> CliResult<Vec<String>> {
    // fail on bad inputs before any stage writes
    ctx.spec()?;
    commands::load_dataset(ctx)?;
    if ctx.needs_comments() {
        commands::load_comments(ctx, true)?;
    }
    let mut all = Vec::new();
    for s in pipeline_stages(ctx)? {
        all.extend(run_command(ctx, &s)?);
    }
    Ok(all)
}

/// Runs one command and writes its manifest.
pub fn run_command(ctx: &Context, command: &Command) -> CliResult<Vec<String>> {
    std::fs::create_dir_all(&ctx.out).map_err(|e| CliError::io(&ctx.out, e))?;
    let artifacts = stage(ctx, command)?;
    manifest::write(ctx, command.name(), artifacts.clone())?;
    Ok(artifacts)
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let ctx = context(cli)?;
    run_command(&ctx, &cli.command)?;
    Ok(())
}
