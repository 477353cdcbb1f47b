//! ChainReach: `k` point masses on a line joined by springs, one torque-like
//! force per mass. The goal is to move the head (the last mass) toward +x
//! while spending little effort.
//!
//! With actions clipped to `[-1, 1]`, one explicit-Euler step is
//!
//! ```text
//! acc_j  = force_scale·a_j + stiffness·Σ_{n ∈ neighbours(j)} (x_n - x_j)
//! x_j'   = clamp(x_j + dt·v_j, -wall, wall)
//! v_j'   = damping·(v_j + dt·acc_j)        (0 if x_j' was clamped)
//! reward = (x_head' - x_head) - ctrl_cost·‖a‖² + survival_bonus
//! ```
//!
//! Initial positions are uniform in `±init_noise`, velocities zero. The
//! observation is the position of every mass relative to the head followed
//! by all velocities.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnvSpec, Environment, StepResult};
use crate::dist::{ActionSpaceSpec, CompoundAction};
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainReachConfig {
    pub k: usize,
    pub max_steps: usize,
    pub dt: f64,
    pub damping: f64,
    pub stiffness: f64,
    pub force_scale: f64,
    pub wall: f64,
    pub ctrl_cost: f64,
    pub survival_bonus: f64,
    pub init_noise: f64,
}

impl Default for ChainReachConfig {
    fn default() -> Self {
        Self {
            k: 6,
            max_steps: 200,
            dt: 0.1,
            damping: 0.95,
            stiffness: 1.0,
            force_scale: 2.0,
            wall: 100.0,
            ctrl_cost: 0.05,
            survival_bonus: 0.05,
            init_noise: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainReach {
    config: ChainReachConfig,
    spec: EnvSpec,
    pos: Vec<f64>,
    vel: Vec<f64>,
    steps: usize,
    done: bool,
}

impl ChainReach {
    pub fn new(config: ChainReachConfig) -> Result<Self> {
        if config.k == 0 || config.max_steps == 0 || !(config.dt > 0.0) || !(config.wall > 0.0) {
            return Err(Error::Config(format!("invalid chainreach parameters {config:?}")));
        }
        let k = config.k as f64;
        let spec = EnvSpec {
            name: "chainreach".into(),
            obs_dim: 2 * config.k,
            action_space: ActionSpaceSpec::continuous(config.k)?,
            max_episode_steps: config.max_steps,
            reward_range: (
                -2.0 * config.wall - config.ctrl_cost * k + config.survival_bonus,
                2.0 * config.wall + config.survival_bonus,
            ),
            reward_description: format!(
                "head displacement along +x - {}·|a|^2 + {} survival bonus",
                config.ctrl_cost, config.survival_bonus
            ),
        };
        Ok(Self {
            pos: vec![0.0; config.k],
            vel: vec![0.0; config.k],
            steps: 0,
            done: true,
            spec,
            config,
        })
    }

    pub fn config(&self) -> &ChainReachConfig {
        &self.config
    }

    pub fn positions(&self) -> &[f64] {
        &self.pos
    }

    pub fn velocities(&self) -> &[f64] {
        &self.vel
    }

    /// Starts an episode from an explicit state.
    pub fn set_state(&mut self, pos: Vec<f64>, vel: Vec<f64>) -> Result<Vec<f64>> {
        check_len("ChainReach positions", self.config.k, pos.len())?;
        check_len("ChainReach velocities", self.config.k, vel.len())?;
        self.pos = pos;
        self.vel = vel;
        self.steps = 0;
        self.done = false;
        Ok(self.observation())
    }

    pub fn head(&self) -> f64 {
        *self.pos.last().expect("k >= 1")
    }

    pub fn observation(&self) -> Vec<f64> {
        let head = self.head();
        self.pos.iter().map(|x| x - head).chain(self.vel.iter().copied()).collect()
    }
}

impl Environment for ChainReach {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = self.config.init_noise;
        self.pos = (0..self.config.k)
            .map(|_| if noise > 0.0 { rng.random_range(-noise..=noise) } else { 0.0 })
            .collect();
        self.vel = vec![0.0; self.config.k];
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    fn step(&mut self, action: &CompoundAction) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        self.spec.action_space.check_action(action)?;
        let CompoundAction::Continuous(raw) = action else {
            unreachable!("checked against a continuous action space")
        };
        let c = &self.config;
        let a: Vec<f64> = raw.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        let k = c.k;
        let head_before = self.head();
        let mut pos = self.pos.clone();
        let mut vel = self.vel.clone();
        for j in 0..k {
            let mut spring = 0.0;
            if j > 0 {
                spring += self.pos[j - 1] - self.pos[j];
            }
            if j + 1 < k {
                spring += self.pos[j + 1] - self.pos[j];
            }
            let acc = c.force_scale * a[j] + c.stiffness * spring;
            let x = self.pos[j] + c.dt * self.vel[j];
            pos[j] = x.clamp(-c.wall, c.wall);
            vel[j] = if pos[j] != x { 0.0 } else { c.damping * (self.vel[j] + c.dt * acc) };
        }
        self.pos = pos;
        self.vel = vel;
        let effort: f64 = a.iter().map(|v| v * v).sum();
        let reward = (self.head() - head_before) - c.ctrl_cost * effort + c.survival_bonus;
        self.steps += 1;
        self.done = self.steps >= c.max_steps;
        let mut info = BTreeMap::new();
        info.insert("head", self.head());
        info.insert("effort", effort);
        Ok(StepResult {
            observation: self.observation(),
            reward,
            done: self.done,
            info,
        })
    }

    fn boxed_clone(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}
