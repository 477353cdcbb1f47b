//! Rollout collection over a set of environments driven by one agent.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::agent::Agent;
use crate::env::{EnvConfig, Environment};
use crate::error::Result;
use crate::nn::Matrix;
use crate::rollout::{RewardScaler, RunningNorm, Trajectory, Transition};

/// How observation statistics are treated while collecting.
pub enum NormMode<'a> {
    Off,
    /// Update with every raw observation, then normalize.
    Update(&'a mut RunningNorm),
    /// Normalize with fixed statistics.
    Frozen(&'a RunningNorm),
}

impl NormMode<'_> {
    fn process(&mut self, raw: &[f64]) -> Result<Vec<f64>> {
        match self {
            NormMode::Off => Ok(raw.to_vec()),
            NormMode::Update(n) => {
                n.update(raw)?;
                n.apply(raw)
            }
            NormMode::Frozen(n) => n.apply(raw),
        }
    }
}

/// One call to [`Collector::collect`].
#[derive(Debug, Clone, Default)]
pub struct Collected {
    /// One trajectory per environment.
    pub trajectories: Vec<Trajectory>,
    /// Raw observations the agent acted on, row-major.
    pub raw_obs: Vec<f64>,
    /// Undiscounted, unscaled returns of episodes that ended during collection.
    pub episode_returns: Vec<f64>,
}

pub struct Collector {
    envs: Vec<Box<dyn Environment>>,
    raw_obs: Vec<Vec<f64>>,
    ep_returns: Vec<f64>,
    reward_scaler: Option<RewardScaler>,
    reset_rng: ChaCha8Rng,
    obs_dim: usize,
}

impl Collector {
    pub fn new(env: &EnvConfig, num_envs: usize, reward_scale: Option<f64>, mut reset_rng: ChaCha8Rng) -> Result<Self> {
        let mut envs = Vec::with_capacity(num_envs);
        let mut raw_obs = Vec::with_capacity(num_envs);
        for _ in 0..num_envs {
            let mut e = env.build()?;
            raw_obs.push(e.reset(reset_rng.random()));
            envs.push(e);
        }
        let obs_dim = envs[0].spec().obs_dim;
        Ok(Self {
            envs,
            raw_obs,
            ep_returns: vec![0.0; num_envs],
            reward_scaler: reward_scale.map(|gamma| RewardScaler::new(num_envs, gamma)),
            reset_rng,
            obs_dim,
        })
    }

    /// Runs `steps` steps in every environment with actions sampled from `agent`.
    pub fn collect(
        &mut self,
        agent: &Agent,
        norm: &mut NormMode<'_>,
        steps: usize,
        rng: &mut ChaCha8Rng,
        keep_raw: bool,
    ) -> Result<Collected> {
        let n = self.envs.len();
        let mut out = Collected {
            trajectories: vec![Trajectory::default(); n],
            ..Default::default()
        };
        for t in &mut out.trajectories {
            t.transitions.reserve(steps);
        }
        let mut states = Matrix::zeros(n, self.obs_dim);
        for _ in 0..steps {
            for (i, raw) in self.raw_obs.iter().enumerate() {
                states.row_mut(i).copy_from_slice(&norm.process(raw)?);
                if keep_raw {
                    out.raw_obs.extend_from_slice(raw);
                }
            }
            let acted = agent.act_batch(&states, Some(&mut *rng))?;
            for (i, ((action, logps), value)) in acted
                .actions
                .into_iter()
                .zip(acted.logps)
                .zip(acted.values)
                .enumerate()
            {
                let res = self.envs[i].step(&action)?;
                self.ep_returns[i] += res.reward;
                let reward = match &mut self.reward_scaler {
                    Some(s) => s.scale(i, res.reward, res.done),
                    None => res.reward,
                };
                out.trajectories[i].transitions.push(Transition {
                    state: states.row(i).to_vec(),
                    action,
                    old_logps: logps,
                    reward,
                    value,
                    done: res.done,
                });
                self.raw_obs[i] = if res.done {
                    out.episode_returns.push(self.ep_returns[i]);
                    self.ep_returns[i] = 0.0;
                    self.envs[i].reset(self.reset_rng.random())
                } else {
                    res.observation
                };
            }
        }
        // bootstrap from the state following the last step
        for (i, raw) in self.raw_obs.iter().enumerate() {
            let s = match norm {
                NormMode::Off => raw.clone(),
                NormMode::Update(n) => n.apply(raw)?,
                NormMode::Frozen(n) => n.apply(raw)?,
            };
            states.row_mut(i).copy_from_slice(&s);
        }
        let boot = agent.values(&states)?;
        for (t, v) in out.trajectories.iter_mut().zip(boot) {
            t.bootstrap_value = v;
        }
        Ok(out)
    }
}
