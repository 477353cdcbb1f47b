//! Training configuration and the shipped presets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::{ChainReachConfig, EnvConfig, GridHarvestConfig};
use crate::error::{Error, Result};
use crate::loss::{LossKind, LossVariant, MixReduction, PolicyLossConfig, SubAggregation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    #[default]
    Serial,
    Async,
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "serial" => Ok(TrainMode::Serial),
            "async" => Ok(TrainMode::Async),
            other => Err(Error::Config(format!("unknown mode `{other}` (expected serial or async)"))),
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::Serial => "serial",
            TrainMode::Async => "async",
        })
    }
}

/// Every knob of a training run. Serialized in full (no hidden defaults) as
/// the run's `config.snapshot`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossKind,
    /// Weight of the joint term in the mixed variants.
    pub w: f64,
    pub sub_agg: SubAggregation,
    pub mix_reduction: MixReduction,
    pub gamma: f64,
    pub lam: f64,
    /// `inf` disables clipping.
    pub clip_eps: f64,
    /// Value-loss coefficient.
    pub c1: f64,
    /// Entropy coefficient.
    pub c2: f64,
    pub lr: f64,
    /// Steps per environment between updates.
    pub rollout_len: usize,
    /// Environments per sampler (serial mode has one sampler).
    pub num_envs: usize,
    pub minibatch: usize,
    pub epochs: usize,
    pub total_steps: u64,
    pub seed: u64,
    pub mode: TrainMode,
    pub samplers: usize,
    pub trainers: usize,
    /// Experience frames held before the oldest is dropped.
    pub queue_capacity: usize,
    /// Samplers wait for a fresh policy version before each rollout.
    pub sync_handshake: bool,
    pub adv_norm: bool,
    pub grad_clip: bool,
    pub value_clip: bool,
    pub obs_norm: bool,
    pub reward_scale: bool,
    pub max_grad_norm: f64,
    pub value_clip_range: f64,
    pub hidden: usize,
    pub log_std_init: f64,
    /// Completed episodes averaged into `mean_ep_return`.
    pub return_window: usize,
    /// Write `checkpoints/step_<N>` every this many updates; 0 disables.
    pub checkpoint_every: usize,
    pub env: EnvConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Compound,
            w: LossVariant::DEFAULT_W,
            sub_agg: SubAggregation::Mean,
            mix_reduction: MixReduction::MeanRatio,
            gamma: 0.99,
            lam: 0.95,
            clip_eps: 0.2,
            c1: 0.5,
            c2: 0.01,
            lr: 1e-3,
            rollout_len: 128,
            num_envs: 8,
            minibatch: 256,
            epochs: 4,
            total_steps: 200_000,
            seed: 0,
            mode: TrainMode::Serial,
            samplers: 1,
            trainers: 1,
            queue_capacity: 8,
            sync_handshake: false,
            adv_norm: true,
            grad_clip: true,
            value_clip: false,
            obs_norm: false,
            reward_scale: false,
            max_grad_norm: 0.5,
            value_clip_range: 0.2,
            hidden: 64,
            log_std_init: 0.0,
            return_window: 100,
            checkpoint_every: 0,
            env: EnvConfig::GridHarvest(GridHarvestConfig::default()),
        }
    }
}

pub const PRESETS: [&str; 2] = ["mujoco-analogue", "murts-analogue"];

impl TrainConfig {
    /// Continuous-control regime on ChainReach and the discrete regime on
    /// GridHarvest.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "mujoco-analogue" => Ok(Self {
                env: EnvConfig::ChainReach(ChainReachConfig::default()),
                mode: TrainMode::Serial,
                gamma: 0.99,
                lam: 0.95,
                clip_eps: 0.2,
                c1: 1.0,
                c2: 0.001,
                lr: 2.5e-4,
                rollout_len: 256,
                num_envs: 8,
                minibatch: 256,
                epochs: 10,
                total_steps: 1_000_000,
                adv_norm: true,
                grad_clip: true,
                value_clip: true,
                obs_norm: true,
                reward_scale: true,
                ..Self::default()
            }),
            "murts-analogue" => Ok(Self {
                env: EnvConfig::GridHarvest(GridHarvestConfig::default()),
                mode: TrainMode::Async,
                c1: 0.5,
                c2: 0.01,
                rollout_len: 512,
                num_envs: 8,
                minibatch: 1024,
                samplers: 4,
                trainers: 3,
                epochs: 1,
                ..Self::default()
            }),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (expected one of {})",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn variant(&self) -> Result<LossVariant> {
        LossVariant::new(self.loss, self.w)
    }

    pub fn policy_loss_config(&self) -> Result<PolicyLossConfig> {
        Ok(PolicyLossConfig {
            sub_agg: self.sub_agg,
            mix_reduction: self.mix_reduction,
            ..PolicyLossConfig::new(self.variant()?, self.clip_eps)
        })
    }

    /// Environment steps consumed by one update.
    pub fn steps_per_update(&self) -> u64 {
        (self.rollout_len * self.num_envs) as u64
    }

    /// Number of updates needed to cover `total_steps` (at least one).
    pub fn num_updates(&self) -> usize {
        self.total_steps.div_ceil(self.steps_per_update()).max(1) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        self.variant()?;
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lam) {
            return fail(format!("gamma {} and lam {} must lie in [0, 1]", self.gamma, self.lam));
        }
        if !(self.clip_eps > 0.0) {
            return fail(format!("clip_eps must be > 0 (inf disables clipping), got {}", self.clip_eps));
        }
        for (name, v) in [("c1", self.c1), ("c2", self.c2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        for (name, v) in [
            ("rollout_len", self.rollout_len),
            ("num_envs", self.num_envs),
            ("minibatch", self.minibatch),
            ("epochs", self.epochs),
            ("samplers", self.samplers),
            ("trainers", self.trainers),
            ("queue_capacity", self.queue_capacity),
            ("hidden", self.hidden),
        ] {
            if v == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        if self.minibatch > self.rollout_len * self.num_envs {
            return fail(format!(
                "minibatch {} exceeds rollout_len × num_envs = {}",
                self.minibatch,
                self.rollout_len * self.num_envs
            ));
        }
        if self.grad_clip && !(self.max_grad_norm > 0.0) {
            return fail(format!("max_grad_norm must be > 0, got {}", self.max_grad_norm));
        }
        if self.value_clip && !(self.value_clip_range > 0.0) {
            return fail(format!("value_clip_range must be > 0, got {}", self.value_clip_range));
        }
        if !self.log_std_init.is_finite() {
            return fail("log_std_init must be finite".into());
        }
        self.env.spec()?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}
