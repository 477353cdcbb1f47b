//! Environment abstraction and the two built-in compound-action environments.

mod chainreach;
mod gridharvest;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use chainreach::{ChainReach, ChainReachConfig};
pub use gridharvest::{GridHarvest, GridHarvestConfig, Mode, Move};

use crate::dist::{ActionSpaceSpec, CompoundAction};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub obs_dim: usize,
    pub action_space: ActionSpaceSpec,
    pub max_episode_steps: usize,
    /// Inclusive bounds on any single step reward.
    pub reward_range: (f64, f64),
    pub reward_description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: BTreeMap<&'static str, f64>,
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode; the initial state is a pure function of `seed`.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    /// Advances one step. Stepping after the episode ended is an error.
    fn step(&mut self, action: &CompoundAction) -> Result<StepResult>;

    fn boxed_clone(&self) -> Box<dyn Environment>;
}

impl Clone for Box<dyn Environment> {
    fn clone(&self) -> Self {
        self.boxed_clone()
    }
}

/// Environment selection by name, with overridable parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum EnvConfig {
    GridHarvest(GridHarvestConfig),
    ChainReach(ChainReachConfig),
}

impl EnvConfig {
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "gridharvest" => Ok(EnvConfig::GridHarvest(GridHarvestConfig::default())),
            "chainreach" => Ok(EnvConfig::ChainReach(ChainReachConfig::default())),
            other => Err(crate::Error::UnknownEnv(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::GridHarvest(_) => "gridharvest",
            EnvConfig::ChainReach(_) => "chainreach",
        }
    }

    pub fn build(&self) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvConfig::GridHarvest(c) => Box::new(GridHarvest::new(c.clone())?),
            EnvConfig::ChainReach(c) => Box::new(ChainReach::new(c.clone())?),
        })
    }

    pub fn spec(&self) -> Result<EnvSpec> {
        Ok(self.build()?.spec().clone())
    }
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::GridHarvest(GridHarvestConfig::default())
    }
}
