//! Experience storage, generalized advantage estimation and the running
//! statistics used for observation normalization and reward scaling.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::CompoundAction;
use crate::error::{check_len, Error, Result};
use crate::nn::Matrix;

/// Observation clip applied after normalization.
pub const OBS_CLIP: f64 = 10.0;
const NORM_EPS: f64 = 1e-8;
const ADV_STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: CompoundAction,
    pub old_logps: Vec<f64>,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
}

/// Contiguous steps from one environment, plus the value estimate of the
/// state that follows the last step (used when that step is not terminal).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    pub bootstrap_value: f64,
}

/// Flattened training batch with advantages and value targets filled in.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    pub states: Matrix,
    pub actions: Vec<CompoundAction>,
    pub old_logps: Matrix,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBatch {
    /// Runs GAE on each trajectory and concatenates the results.
    pub fn from_trajectories(trajectories: &[Trajectory], gamma: f64, lam: f64) -> Result<Self> {
        let first = trajectories
            .iter()
            .flat_map(|t| t.transitions.first())
            .next()
            .ok_or_else(|| Error::InvalidArgument("rollout batch needs at least one transition".into()))?;
        let obs_dim = first.state.len();
        let n_sub = first.old_logps.len();
        let total: usize = trajectories.iter().map(|t| t.transitions.len()).sum();

        let mut states = Vec::with_capacity(total * obs_dim);
        let mut old_logps = Vec::with_capacity(total * n_sub);
        let mut batch = RolloutBatch {
            states: Matrix::zeros(0, obs_dim),
            actions: Vec::with_capacity(total),
            old_logps: Matrix::zeros(0, n_sub),
            rewards: Vec::with_capacity(total),
            values: Vec::with_capacity(total),
            dones: Vec::with_capacity(total),
            advantages: Vec::with_capacity(total),
            returns: Vec::with_capacity(total),
        };
        for traj in trajectories.iter().filter(|t| !t.transitions.is_empty()) {
            let rewards: Vec<f64> = traj.transitions.iter().map(|t| t.reward).collect();
            let values: Vec<f64> = traj.transitions.iter().map(|t| t.value).collect();
            let dones: Vec<bool> = traj.transitions.iter().map(|t| t.done).collect();
            let (adv, ret) = compute_gae(&rewards, &values, &dones, traj.bootstrap_value, gamma, lam)?;
            for t in &traj.transitions {
                check_len("transition state", obs_dim, t.state.len())?;
                check_len("transition old_logps", n_sub, t.old_logps.len())?;
                states.extend_from_slice(&t.state);
                old_logps.extend_from_slice(&t.old_logps);
                batch.actions.push(t.action.clone());
            }
            batch.rewards.extend(rewards);
            batch.values.extend(values);
            batch.dones.extend(dones);
            batch.advantages.extend(adv);
            batch.returns.extend(ret);
        }
        batch.states = Matrix::from_vec(total, obs_dim, states)?;
        batch.old_logps = Matrix::from_vec(total, n_sub, old_logps)?;
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Generalized advantage estimation over one contiguous sequence.
///
/// `δ_t = r_t + γ·V_{t+1}·(1 - done_t) - V_t` and
/// `Â_t = δ_t + γλ·(1 - done_t)·Â_{t+1}`, where `V_T` is `bootstrap_value`.
/// Returns `(advantages, returns)` with `returns = advantages + values`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lam: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if rewards.is_empty() {
        return Err(Error::InvalidArgument("GAE on an empty sequence".into()));
    }
    check_len("compute_gae values", rewards.len(), values.len())?;
    check_len("compute_gae dones", rewards.len(), dones.len())?;
    if !(0.0..=1.0).contains(&gamma) || !(0.0..=1.0).contains(&lam) {
        return Err(Error::InvalidArgument(format!(
            "gamma {gamma} and lambda {lam} must lie in [0, 1]"
        )));
    }
    let n = rewards.len();
    let mut advantages = vec![0.0; n];
    let mut next_value = bootstrap_value;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lam * live * next_adv;
        advantages[t] = next_adv;
        next_value = values[t];
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

/// Shifts and scales to mean 0 and (population) standard deviation 1.
/// Constant inputs become all zeros.
pub fn normalize_advantages(advantages: &mut [f64]) {
    if advantages.is_empty() {
        return;
    }
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(ADV_STD_FLOOR);
    for a in advantages.iter_mut() {
        *a = (*a - mean) / std;
    }
}

/// Random permutation of `0..len` cut into chunks of `size` (the last chunk may be shorter).
pub fn minibatches<R: Rng + ?Sized>(len: usize, size: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if size == 0 {
        return Err(Error::InvalidArgument("minibatch size must be positive".into()));
    }
    if size > len {
        return Err(Error::InvalidArgument(format!(
            "minibatch size {size} exceeds batch length {len}"
        )));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    Ok(order.chunks(size).map(<[usize]>::to_vec).collect())
}

/// Streaming per-coordinate mean and variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub count: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningNorm {
    /// Empty statistics; the first update sets the mean to that observation.
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; dim],
            var: vec![0.0; dim],
        }
    }

    /// Starts from mean 0, variance 1 with negligible weight.
    pub fn with_prior(dim: usize) -> Self {
        Self {
            count: 1e-4,
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn update(&mut self, x: &[f64]) -> Result<()> {
        check_len("RunningNorm::update", self.dim(), x.len())?;
        let count = self.count + 1.0;
        for ((m, v), &xi) in self.mean.iter_mut().zip(self.var.iter_mut()).zip(x) {
            let delta = xi - *m;
            let new_mean = *m + delta / count;
            *v = (*v * self.count + delta * (xi - new_mean)) / count;
            *m = new_mean;
        }
        self.count = count;
        Ok(())
    }

    /// `(x - mean) / sqrt(var + 1e-8)`, clipped to `±OBS_CLIP`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("RunningNorm::apply", self.dim(), x.len())?;
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.var)
            .map(|((xi, m), v)| ((xi - m) / (v + NORM_EPS).sqrt()).clamp(-OBS_CLIP, OBS_CLIP))
            .collect())
    }

    pub fn std(&self) -> Vec<f64> {
        self.var.iter().map(|v| v.sqrt()).collect()
    }
}

/// Divides rewards by the running standard deviation of the discounted return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardScaler {
    gamma: f64,
    returns: Vec<f64>,
    stats: RunningNorm,
}

impl RewardScaler {
    pub fn new(num_envs: usize, gamma: f64) -> Self {
        Self {
            gamma,
            returns: vec![0.0; num_envs],
            stats: RunningNorm::with_prior(1),
        }
    }

    pub fn scale(&mut self, env: usize, reward: f64, done: bool) -> f64 {
        self.returns[env] = self.gamma * self.returns[env] + reward;
        self.stats
            .update(&[self.returns[env]])
            .expect("scalar statistics");
        if done {
            self.returns[env] = 0.0;
        }
        reward / (self.stats.var[0] + NORM_EPS).sqrt()
    }
}
