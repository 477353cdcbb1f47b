//! Greedy policy evaluation and the uniform-random baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::Agent;
use crate::dist::{ActionKind, CompoundAction};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::nn::{Matrix, ParamVector};

/// z-value of a two-sided 95% normal interval.
const Z95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub returns: Vec<f64>,
    pub mean: f64,
    /// Half-width of the 95% normal-approximation interval.
    pub ci95: f64,
}

impl EvalReport {
    pub fn from_returns(returns: Vec<f64>) -> Result<Self> {
        if returns.is_empty() {
            return Err(Error::InvalidArgument("evaluation needs at least one episode".into()));
        }
        let n = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let ci95 = if returns.len() < 2 {
            0.0
        } else {
            let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
            Z95 * (var / n).sqrt()
        };
        Ok(Self { returns, mean, ci95 })
    }
}

fn run_episodes(
    env_cfg: &EnvConfig,
    episodes: usize,
    seed: u64,
    mut choose: impl FnMut(&[f64], &mut ChaCha8Rng) -> Result<CompoundAction>,
) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("evaluation needs at least one episode".into()));
    }
    let mut env = env_cfg.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = env.reset(rng.random());
        let mut total = 0.0;
        loop {
            let action = choose(&obs, &mut rng)?;
            let res = env.step(&action)?;
            total += res.reward;
            if res.done {
                break;
            }
            obs = res.observation;
        }
        returns.push(total);
    }
    EvalReport::from_returns(returns)
}

/// Runs `episodes` episodes with the checkpoint's greedy (mode) actions.
pub fn evaluate(checkpoint: &ParamVector, env_cfg: &EnvConfig, episodes: usize, seed: u64) -> Result<EvalReport> {
    let spec = env_cfg.spec()?;
    let (agent, norm) = Agent::from_checkpoint(checkpoint, &spec)?;
    run_episodes(env_cfg, episodes, seed, |obs, _| {
        let x = match &norm {
            Some(n) => n.apply(obs)?,
            None => obs.to_vec(),
        };
        let state = Matrix::from_vec(1, x.len(), x)?;
        let acted = agent.act_batch::<ChaCha8Rng>(&state, None)?;
        Ok(acted.actions.into_iter().next().expect("one row"))
    })
}

/// Mean return of uniformly random actions (continuous actions uniform in `[-1, 1]`).
pub fn random_baseline(env_cfg: &EnvConfig, episodes: usize, seed: u64) -> Result<EvalReport> {
    let space = env_cfg.spec()?.action_space;
    run_episodes(env_cfg, episodes, seed, |_, rng| {
        Ok(match space.kind {
            ActionKind::Discrete => {
                CompoundAction::Discrete(space.sub_action_dims.iter().map(|&n| rng.random_range(0..n)).collect())
            }
            ActionKind::Continuous => {
                CompoundAction::Continuous((0..space.sub_action_dims.len()).map(|_| rng.random_range(-1.0..=1.0)).collect())
            }
        })
    })
}
