//! Provenance record written next to every command's outputs.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{read_file, write_json, CliResult, Context};

/// `sha256:<hex>` of a byte string.
pub fn content_hash(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

pub fn file_hash(path: &Path) -> CliResult<String> {
    Ok(content_hash(&read_file(path)?))
}

/// Everything needed to rerun a command and check its outputs. Only
/// `started_at_unix` and `wall_clock_seconds` vary between identical runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub execution: String,
    pub threads: usize,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    /// Command-specific results, e.g. weight hashes or accuracies.
    pub results: BTreeMap<String, serde_json::Value>,
    pub started_at_unix: u64,
    pub wall_clock_seconds: f64,
}

pub(crate) struct ManifestBuilder {
    manifest: RunManifest,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, ctx: &Context, config: &impl Serialize, seed: u64) -> CliResult<Self> {
        let started_at_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Ok(Self {
            manifest: RunManifest {
                tool: env!("CARGO_PKG_NAME").to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                command: command.to_string(),
                argv: ctx.argv.clone(),
                config: serde_json::to_value(config).map_err(lierep::Error::from)?,
                seed,
                execution: format!("{:?}", ctx.execution).to_lowercase(),
                threads: ctx.threads,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                results: BTreeMap::new(),
                started_at_unix,
                wall_clock_seconds: 0.0,
            },
            started: Instant::now(),
        })
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        let h = file_hash(path)?;
        self.manifest.inputs.insert(path.display().to_string(), h);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> CliResult<()> {
        let h = file_hash(path)?;
        self.manifest.outputs.insert(path.display().to_string(), h);
        Ok(())
    }

    pub fn result(&mut self, key: &str, value: impl Serialize) -> CliResult<()> {
        let v = serde_json::to_value(value).map_err(lierep::Error::from)?;
        self.manifest.results.insert(key.to_string(), v);
        Ok(())
    }

    pub fn write(mut self, path: &Path) -> CliResult<RunManifest> {
        self.manifest.wall_clock_seconds = self.started.elapsed().as_secs_f64();
        write_json(path, &self.manifest)?;
        Ok(self.manifest)
    }
}
