//! One PPO update: several epochs of minibatch ascent on `J` over a rollout batch.

use rand_chacha::ChaCha8Rng;

use super::agent::{Agent, MinibatchRef, ObjectiveConfig};
use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::loss::LossBreakdown;
use crate::nn::{AdamState, ParamVector};
use crate::rollout::{minibatches, normalize_advantages, RolloutBatch};

/// Rescales `grad` in place so its global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn gradient_clip(grad: &mut ParamVector, max_norm: f64) -> f64 {
    debug_assert!(max_norm > 0.0);
    let norm = grad.l2_norm();
    if norm > max_norm {
        grad.scale(max_norm / norm);
    }
    norm
}

pub fn objective_config(config: &TrainConfig) -> Result<ObjectiveConfig> {
    Ok(ObjectiveConfig {
        policy: config.policy_loss_config()?,
        c1: config.c1,
        c2: config.c2,
        value_clip: config.value_clip.then_some(config.value_clip_range),
    })
}

/// Runs `config.epochs` passes of shuffled minibatch updates over `batch`.
///
/// Returns the mean breakdown over all minibatches and the clip counts
/// summed over them. On error `agent` holds the parameters from before the
/// failing minibatch.
pub fn ppo_update(
    agent: &mut Agent,
    adam: &mut AdamState,
    batch: &mut RolloutBatch,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<LossBreakdown> {
    let obj = objective_config(config)?;
    if config.adv_norm {
        normalize_advantages(&mut batch.advantages);
    }
    let mut sum = LossBreakdown::default();
    let mut count = 0usize;
    let mut params = agent.params();
    for _ in 0..config.epochs {
        for idx in minibatches(batch.len(), config.minibatch, rng)? {
            let states = batch.states.select_rows(&idx);
            let old_logps = batch.old_logps.select_rows(&idx);
            let actions: Vec<_> = idx.iter().map(|&i| batch.actions[i].clone()).collect();
            let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let (advantages, returns, old_values) = (pick(&batch.advantages), pick(&batch.returns), pick(&batch.values));
            let mb = MinibatchRef {
                states: &states,
                actions: &actions,
                old_logps: &old_logps,
                advantages: &advantages,
                returns: &returns,
                old_values: &old_values,
            };
            let (loss, mut grad) = agent.loss_and_grad(&obj, mb)?;
            if !loss.total_objective.is_finite() {
                return Err(Error::NonFinite {
                    context: "objective",
                    detail: format!("{loss:?}"),
                });
            }
            if let Some((seg, i, v)) = grad.first_non_finite() {
                return Err(Error::NonFinite {
                    context: "gradient",
                    detail: format!("{seg}[{i}] = {v}"),
                });
            }
            if config.grad_clip {
                gradient_clip(&mut grad, config.max_grad_norm);
            }
            adam.step(&mut params, &grad)?;
            agent.set_params(params.values())?;

            sum.policy_objective += loss.policy_objective;
            sum.value_loss += loss.value_loss;
            sum.entropy += loss.entropy;
            sum.clip_stats.merge(&loss.clip_stats);
            count += 1;
        }
    }
    let inv = 1.0 / count as f64;
    let (p, v, e) = (sum.policy_objective * inv, sum.value_loss * inv, sum.entropy * inv);
    Ok(LossBreakdown {
        policy_objective: p,
        value_loss: v,
        entropy: e,
        total_objective: crate::loss::total_objective(p, v, e, config.c1, config.c2),
        clip_stats: sum.clip_stats,
    })
}
