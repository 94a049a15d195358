use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// `ok` or `failed`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub seed: u64,
    pub config: RunConfig,
    /// Command-specific facts such as the chosen lag order.
    pub results: serde_json::Map<String, serde_json::Value>,
    pub timings: Vec<StageTiming>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
}

/// Single writer for everything a command produces.
pub struct OutputDir {
    dir: PathBuf,
    manifest: RunManifest,
    clock: Instant,
}

impl OutputDir {
    pub fn create(command: &str, config: &RunConfig) -> CliResult<Self> {
        fs::create_dir_all(&config.out)
            .map_err(|e| CliError::input(format!("cannot create output directory {}: {e}", config.out.display())))?;
        Ok(Self {
            dir: config.out.clone(),
            manifest: RunManifest {
                tool: env!("CARGO_PKG_NAME").to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                command: command.to_string(),
                status: "ok".into(),
                error: None,
                seed: config.seed,
                config: config.clone(),
                results: serde_json::Map::new(),
                timings: Vec::new(),
                outputs: Vec::new(),
            },
            clock: Instant::now(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn record(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("result values serialize");
        self.manifest.results.insert(key.to_string(), v);
    }

    /// Closes the current stage and restarts the stage clock.
    pub fn lap(&mut self, stage: &str) {
        self.manifest.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: self.clock.elapsed().as_secs_f64(),
        });
        self.clock = Instant::now();
    }

    pub fn finish(mut self) -> CliResult<RunManifest> {
        self.write_manifest()?;
        Ok(self.manifest)
    }

    /// Writes a manifest flagged as failed, listing what was produced.
    pub fn fail(mut self, err: CliError) -> CliError {
        self.manifest.status = "failed".into();
        self.manifest.error = Some(err.message.clone());
        if let Err(e) = self.write_manifest() {
            log::error!("could not write failure manifest: {e}");
        }
        err
    }

    fn write_manifest(&mut self) -> CliResult<()> {
        self.manifest.outputs.push(MANIFEST_FILE.to_string());
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, text).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
    }
}
