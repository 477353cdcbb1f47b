//! `manifest.json`: what was run, with which build, and when.

use std::fs;
use std::path::Path;

use chrono::{SecondsFormat, Utc};
use compound_ppo::nn::checkpoint::CHECKPOINT_FORMAT_VERSION;
use compound_ppo::train::{TrainConfig, METRICS_COLUMNS};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatVersions {
    pub manifest: u32,
    pub checkpoint: u32,
    pub metrics_columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub formats: FormatVersions,
    pub build: String,
    /// The resolved configuration as TOML; identical to `config.snapshot`.
    /// Stored as text because JSON has no infinity for a disabled clip.
    pub config: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub status: RunStatus,
    pub error: Option<String>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(config: &TrainConfig) -> anyhow::Result<Self> {
        Ok(Self {
            formats: FormatVersions {
                manifest: MANIFEST_FORMAT_VERSION,
                checkpoint: CHECKPOINT_FORMAT_VERSION,
                metrics_columns: METRICS_COLUMNS.iter().map(|c| c.to_string()).collect(),
            },
            build: env!("COMPOUND_PPO_BUILD").to_string(),
            config: config.to_toml()?,
            started_at: now(),
            finished_at: None,
            status: RunStatus::Running,
            error: None,
        })
    }

    pub fn finish(&mut self, error: Option<String>) {
        self.finished_at = Some(now());
        self.status = if error.is_some() { RunStatus::Failed } else { RunStatus::Completed };
        self.error = error;
    }

    pub fn write(&self, run_dir: &Path) -> anyhow::Result<()> {
        fs::create_dir_all(run_dir)?;
        fs::write(run_dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(run_dir: &Path) -> anyhow::Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(run_dir.join(MANIFEST_FILE))?)?)
    }

    pub fn resolved_config(&self) -> anyhow::Result<TrainConfig> {
        Ok(TrainConfig::from_toml(&self.config)?)
    }
}
