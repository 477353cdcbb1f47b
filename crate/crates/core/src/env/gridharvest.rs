//! GridHarvest: a small grid where each action is a (move, mode) pair.
//!
//! The agent first moves (up, down, left, right or stay; walls block), then
//! applies its mode at the cell it ends up on:
//!
//! * `harvest` on a cell that still holds a resource collects it (+1) and
//!   removes it from the grid;
//! * `build` on the depot after at least `build_requirement` harvests pays
//!   +5 and ends the episode;
//! * anything else does nothing.
//!
//! Every step costs 0.01 and episodes are capped at `max_steps`. Which mode
//! is useful depends on where the move lands, so the two sub-actions are
//! strongly coupled.
//!
//! The depot and resource cells are drawn from `layout_seed` (or from the
//! reset seed when `randomize_layout` is set); the agent start cell is drawn
//! uniformly from all cells using the reset seed.
//!
//! Observation: three one-hot `size × size` planes (agent, remaining
//! resources, depot) followed by the harvest count.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnvSpec, Environment, StepResult};
use crate::dist::{ActionSpaceSpec, CompoundAction};
use crate::error::{Error, Result};

pub const STEP_PENALTY: f64 = 0.01;
pub const HARVEST_REWARD: f64 = 1.0;
pub const BUILD_REWARD: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridHarvestConfig {
    pub size: usize,
    pub resources: usize,
    pub max_steps: usize,
    pub build_requirement: usize,
    pub layout_seed: u64,
    pub randomize_layout: bool,
}

impl Default for GridHarvestConfig {
    fn default() -> Self {
        Self {
            size: 7,
            resources: 4,
            max_steps: 64,
            build_requirement: 3,
            layout_seed: 0,
            randomize_layout: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Move {
    pub const ALL: [Move; 5] = [Move::Up, Move::Down, Move::Left, Move::Right, Move::Stay];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Harvest,
    Build,
    Idle,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Harvest, Mode::Build, Mode::Idle];
}

#[derive(Debug, Clone)]
pub struct GridHarvest {
    config: GridHarvestConfig,
    spec: EnvSpec,
    depot: (usize, usize),
    /// Resource cells of the current episode and whether each is still present.
    resources: Vec<((usize, usize), bool)>,
    agent: (usize, usize),
    harvested: usize,
    steps: usize,
    done: bool,
}

impl GridHarvest {
    pub fn new(config: GridHarvestConfig) -> Result<Self> {
        let cells = config.size * config.size;
        if config.size < 2 || config.resources + 1 > cells || config.max_steps == 0 {
            return Err(Error::Config(format!("invalid gridharvest parameters {config:?}")));
        }
        let spec = EnvSpec {
            name: "gridharvest".into(),
            obs_dim: 3 * cells + 1,
            action_space: ActionSpaceSpec::discrete(vec![Move::ALL.len(), Mode::ALL.len()])?,
            max_episode_steps: config.max_steps,
            reward_range: (-STEP_PENALTY, BUILD_REWARD - STEP_PENALTY),
            reward_description: format!(
                "+{HARVEST_REWARD} per harvested resource, +{BUILD_REWARD} for building on the depot after {} harvests, -{STEP_PENALTY} per step",
                config.build_requirement
            ),
        };
        let mut env = Self {
            spec,
            depot: (0, 0),
            resources: Vec::new(),
            agent: (0, 0),
            harvested: 0,
            steps: 0,
            done: true,
            config,
        };
        env.place_layout(env.config.layout_seed);
        Ok(env)
    }

    fn place_layout(&mut self, seed: u64) {
        let n = self.config.size;
        let mut cells: Vec<(usize, usize)> = (0..n * n).map(|c| (c / n, c % n)).collect();
        cells.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        self.depot = cells[0];
        self.resources = cells[1..=self.config.resources].iter().map(|&c| (c, true)).collect();
    }

    pub fn config(&self) -> &GridHarvestConfig {
        &self.config
    }

    pub fn depot(&self) -> (usize, usize) {
        self.depot
    }

    /// Resource cells that have not been harvested yet.
    pub fn remaining_resources(&self) -> Vec<(usize, usize)> {
        self.resources.iter().filter(|r| r.1).map(|r| r.0).collect()
    }

    pub fn agent(&self) -> (usize, usize) {
        self.agent
    }

    pub fn harvested(&self) -> usize {
        self.harvested
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Decodes a compound action into its move and mode.
    pub fn decode(action: &CompoundAction) -> Result<(Move, Mode)> {
        match action {
            CompoundAction::Discrete(idx) if idx.len() == 2 => {
                let mv = *Move::ALL
                    .get(idx[0])
                    .ok_or_else(|| Error::InvalidAction(format!("move index {}", idx[0])))?;
                let mode = *Mode::ALL
                    .get(idx[1])
                    .ok_or_else(|| Error::InvalidAction(format!("mode index {}", idx[1])))?;
                Ok((mv, mode))
            }
            _ => Err(Error::InvalidAction(format!("gridharvest expects (move, mode), got {action:?}"))),
        }
    }

    pub fn encode(mv: Move, mode: Mode) -> CompoundAction {
        let m = Move::ALL.iter().position(|&x| x == mv).expect("listed");
        let d = Mode::ALL.iter().position(|&x| x == mode).expect("listed");
        CompoundAction::Discrete(vec![m, d])
    }

    pub fn observation(&self) -> Vec<f64> {
        let n = self.config.size;
        let cells = n * n;
        let mut obs = vec![0.0; 3 * cells + 1];
        obs[self.agent.0 * n + self.agent.1] = 1.0;
        for &((r, c), present) in &self.resources {
            if present {
                obs[cells + r * n + c] = 1.0;
            }
        }
        obs[2 * cells + self.depot.0 * n + self.depot.1] = 1.0;
        obs[3 * cells] = self.harvested as f64;
        obs
    }
}

impl Environment for GridHarvest {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if self.config.randomize_layout {
            self.place_layout(rng.random());
        } else {
            self.place_layout(self.config.layout_seed);
        }
        let n = self.config.size;
        let cell = rng.random_range(0..n * n);
        self.agent = (cell / n, cell % n);
        self.harvested = 0;
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    fn step(&mut self, action: &CompoundAction) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let (mv, mode) = Self::decode(action)?;
        let last = self.config.size - 1;
        let (r, c) = self.agent;
        self.agent = match mv {
            Move::Up => (r.saturating_sub(1), c),
            Move::Down => ((r + 1).min(last), c),
            Move::Left => (r, c.saturating_sub(1)),
            Move::Right => (r, (c + 1).min(last)),
            Move::Stay => (r, c),
        };
        let mut reward = -STEP_PENALTY;
        let mut built = false;
        match mode {
            Mode::Harvest => {
                if let Some(res) = self.resources.iter_mut().find(|res| res.1 && res.0 == self.agent) {
                    res.1 = false;
                    self.harvested += 1;
                    reward += HARVEST_REWARD;
                }
            }
            Mode::Build => {
                if self.agent == self.depot && self.harvested >= self.config.build_requirement {
                    reward += BUILD_REWARD;
                    built = true;
                }
            }
            Mode::Idle => {}
        }
        self.steps += 1;
        self.done = built || self.steps >= self.config.max_steps;
        let mut info = BTreeMap::new();
        info.insert("harvested", self.harvested as f64);
        info.insert("built", if built { 1.0 } else { 0.0 });
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
