//! Training: configuration, the actor-critic agent, serial and asynchronous
//! loops, checkpointing and evaluation.

mod agent;
mod asynch;
mod collect;
mod config;
mod eval;
mod metrics;
mod queue;
mod serial;
mod store;
mod update;

use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use agent::{Acted, Agent, MinibatchRef, ObjectiveConfig};
pub use asynch::{async_train, AsyncStats, ExperienceFrame};
pub use collect::{Collected, Collector, NormMode};
pub use config::{TrainConfig, TrainMode, PRESETS};
pub use eval::{evaluate, random_baseline, EvalReport};
pub use metrics::{
    read_metrics, MetricsRow, ReturnWindow, RunDir, CONFIG_SNAPSHOT, FINAL_CHECKPOINT, METRICS_COLUMNS, METRICS_FILE,
};
pub use queue::{ExperienceQueue, Pop, QueueCounts};
pub use serial::serial_train;
pub use store::{ParamStore, Snapshot};
pub use update::{gradient_clip, objective_config, ppo_update};

use crate::error::{Error, Result};
use crate::rollout::RunningNorm;

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: Agent,
    pub obs_norm: Option<RunningNorm>,
    pub metrics: Vec<MetricsRow>,
    pub async_stats: Option<AsyncStats>,
    pub final_checkpoint: Option<PathBuf>,
}

impl TrainOutcome {
    /// The final parameters in checkpoint form.
    pub fn checkpoint(&self) -> Result<crate::nn::ParamVector> {
        self.agent.checkpoint(self.obs_norm.as_ref())
    }
}

/// Called after every update; returning `Break` ends the run early.
pub type OnUpdate<'a> = dyn FnMut(&MetricsRow) -> ControlFlow<()> + Send + 'a;

/// Runs the loop selected by `config.mode`.
pub fn train(config: &TrainConfig, run_dir: Option<&Path>) -> Result<TrainOutcome> {
    train_with(config, run_dir, &mut |_| ControlFlow::Continue(()))
}

/// Like [`train`], reporting each update to `on_update`.
pub fn train_with(config: &TrainConfig, run_dir: Option<&Path>, on_update: &mut OnUpdate<'_>) -> Result<TrainOutcome> {
    match config.mode {
        TrainMode::Serial => serial_train(config, run_dir, on_update),
        TrainMode::Async => async_train(config, run_dir, on_update),
    }
}

/// Independent random streams derived from the run seed.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Stream {
    Init,
    Minibatch,
    Act(usize),
    Reset(usize),
}

pub(crate) fn rng_stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let id = match stream {
        Stream::Init => 0,
        Stream::Minibatch => 1,
        Stream::Act(i) => 2 + 2 * i as u64,
        Stream::Reset(i) => 3 + 2 * i as u64,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Converts a failure during an update into [`Error::Diverged`], saving the
/// pre-update parameters as `checkpoints/last_good` when a run directory exists.
/// Failures unrelated to numerics pass through unchanged.
pub(crate) fn diverged(
    update: usize,
    err: Error,
    run: Option<&RunDir>,
    last_agent: &Agent,
    last_norm: Option<&RunningNorm>,
) -> Error {
    if !matches!(err, Error::NonFinite { .. }) {
        return err;
    }
    let last_good = run.and_then(|r| {
        last_agent
            .checkpoint(last_norm)
            .and_then(|p| r.save_named("checkpoints/last_good", &p))
            .ok()
    });
    Error::Diverged {
        update,
        detail: err.to_string(),
        last_good,
    }
}

pub(crate) fn finish_run(
    agent: Agent,
    obs_norm: Option<RunningNorm>,
    metrics: Vec<MetricsRow>,
    async_stats: Option<AsyncStats>,
    run: Option<&RunDir>,
) -> Result<TrainOutcome> {
    let final_checkpoint = match run {
        Some(r) => Some(r.save_named(FINAL_CHECKPOINT, &agent.checkpoint(obs_norm.as_ref())?)?),
        None => None,
    };
    Ok(TrainOutcome {
        agent,
        obs_norm,
        metrics,
        async_stats,
        final_checkpoint,
    })
}
