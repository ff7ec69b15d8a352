//! Per-command run manifests: enough to reproduce every artifact.

use serde::{Deserialize, Serialize};

use crate::commands::write_json;
use crate::config::{Context, PipelineConfig};
use crate::error::CliResult;

pub const MANIFEST_SUFFIX: &str = ".manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// SHA-256 of the effective configuration JSON.
    pub config_hash: String,
    pub config: PipelineConfig,
    pub artifacts: Vec<String>,
}

pub fn write(ctx: &Context, command: &str, artifacts: Vec<String>) -> CliResult<Manifest> {
    let m = Manifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: ctx.seed,
        config_hash: ctx.config_hash.clone(),
        config: ctx.config.clone(),
        artifacts,
    };
    write_json(&ctx.out_path(&format!("{command}{MANIFEST_SUFFIX}")), &m)?;
    Ok(m)
}
