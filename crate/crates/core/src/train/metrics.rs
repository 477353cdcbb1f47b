//! Per-update metrics and the on-disk run directory.

use std::collections::VecDeque;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::error::Result;
use crate::loss::LossBreakdown;
use crate::nn::{checkpoint, ParamVector};

/// Column order of `metrics.csv`.
pub const METRICS_COLUMNS: [&str; 14] = [
    "step",
    "update",
    "loss_variant",
    "eps",
    "policy_obj",
    "value_loss",
    "entropy",
    "total_obj",
    "mean_ep_return",
    "unclipped_samples",
    "total_samples",
    "unclipped_sub_entries",
    "total_sub_entries",
    "staleness_mean",
];

/// One row of `metrics.csv`. `mean_ep_return` is NaN until an episode ends.
/// Equality is bitwise on floats, so NaN rows compare equal to themselves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub update: usize,
    pub loss_variant: String,
    pub eps: f64,
    pub policy_obj: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total_obj: f64,
    pub mean_ep_return: f64,
    pub unclipped_samples: u64,
    pub total_samples: u64,
    pub unclipped_sub_entries: u64,
    pub total_sub_entries: u64,
    pub staleness_mean: f64,
}

impl PartialEq for MetricsRow {
    fn eq(&self, other: &Self) -> bool {
        let floats = |r: &Self| {
            [r.eps, r.policy_obj, r.value_loss, r.entropy, r.total_obj, r.mean_ep_return, r.staleness_mean].map(f64::to_bits)
        };
        let counts = |r: &Self| [r.unclipped_samples, r.total_samples, r.unclipped_sub_entries, r.total_sub_entries];
        (self.step, self.update, &self.loss_variant) == (other.step, other.update, &other.loss_variant)
            && floats(self) == floats(other)
            && counts(self) == counts(other)
    }
}

impl MetricsRow {
    pub fn new(step: u64, update: usize, config: &TrainConfig, loss: &LossBreakdown, mean_ep_return: f64, staleness: f64) -> Self {
        Self {
            step,
            update,
            loss_variant: config.loss.name().to_string(),
            eps: config.clip_eps,
            policy_obj: loss.policy_objective,
            value_loss: loss.value_loss,
            entropy: loss.entropy,
            total_obj: loss.total_objective,
            mean_ep_return,
            unclipped_samples: loss.clip_stats.unclipped_samples,
            total_samples: loss.clip_stats.total_samples,
            unclipped_sub_entries: loss.clip_stats.unclipped_sub_entries,
            total_sub_entries: loss.clip_stats.total_sub_entries,
            staleness_mean: staleness,
        }
    }

    pub fn unclipped_fraction(&self) -> f64 {
        if self.total_samples == 0 {
            0.0
        } else {
            self.unclipped_samples as f64 / self.total_samples as f64
        }
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.deserialize().collect::<Result<_, _>>()?)
}

/// Mean of the most recent completed-episode returns.
#[derive(Debug, Clone)]
pub struct ReturnWindow {
    cap: usize,
    returns: VecDeque<f64>,
}

impl ReturnWindow {
    pub fn new(cap: usize) -> Self {
        Self {
            cap: cap.max(1),
            returns: VecDeque::new(),
        }
    }

    pub fn extend(&mut self, returns: &[f64]) {
        for &r in returns {
            if self.returns.len() == self.cap {
                self.returns.pop_front();
            }
            self.returns.push_back(r);
        }
    }

    pub fn mean(&self) -> f64 {
        if self.returns.is_empty() {
            f64::NAN
        } else {
            self.returns.iter().sum::<f64>() / self.returns.len() as f64
        }
    }
}

/// `config.snapshot`, `metrics.csv`, `checkpoints/step_<N>` and `final`.
pub struct RunDir {
    root: PathBuf,
    metrics: csv::Writer<File>,
}

pub const CONFIG_SNAPSHOT: &str = "config.snapshot";
pub const METRICS_FILE: &str = "metrics.csv";
pub const FINAL_CHECKPOINT: &str = "final";

impl RunDir {
    pub fn create(root: &Path, config: &TrainConfig) -> Result<Self> {
        fs::create_dir_all(root.join("checkpoints"))?;
        fs::write(root.join(CONFIG_SNAPSHOT), config.to_toml()?)?;
        let mut metrics = csv::WriterBuilder::new().has_headers(false).from_path(root.join(METRICS_FILE))?;
        metrics.write_record(METRICS_COLUMNS)?;
        metrics.flush()?;
        Ok(Self {
            root: root.to_path_buf(),
            metrics,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn record(&mut self, row: &MetricsRow) -> Result<()> {
        self.metrics.serialize(row)?;
        self.metrics.flush()?;
        Ok(())
    }

    pub fn save_step(&self, step: u64, params: &ParamVector) -> Result<PathBuf> {
        self.save_named(&format!("checkpoints/step_{step}"), params)
    }

    pub fn save_named(&self, name: &str, params: &ParamVector) -> Result<PathBuf> {
        let path = self.root.join(name);
        checkpoint::save(&path, params)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig::default();
        let mut run = RunDir::create(dir.path(), &cfg).unwrap();
        let row = MetricsRow::new(1024, 1, &cfg, &LossBreakdown::default(), f64::NAN, 0.0);
        run.record(&row).unwrap();
        let text = fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
        assert_eq!(text.lines().next().unwrap(), METRICS_COLUMNS.join(","));
        let back = read_metrics(&dir.path().join(METRICS_FILE)).unwrap();
        assert_eq!(back.len(), 1);
        assert!(back[0].mean_ep_return.is_nan());
        assert_eq!(back[0].step, 1024);
        let snap = fs::read_to_string(dir.path().join(CONFIG_SNAPSHOT)).unwrap();
        assert_eq!(TrainConfig::from_toml(&snap).unwrap(), cfg);
    }

    #[test]
    fn return_window_keeps_latest() {
        let mut w = ReturnWindow::new(2);
        assert!(w.mean().is_nan());
        w.extend(&[1.0, 2.0, 4.0]);
        assert_eq!(w.mean(), 3.0);
    }
}
