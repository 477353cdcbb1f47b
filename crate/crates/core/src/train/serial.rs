//! Single-threaded loop: collect, estimate advantages, update, repeat.

use std::path::Path;

use super::agent::Agent;
use super::collect::{Collector, NormMode};
use super::config::TrainConfig;
use super::metrics::{MetricsRow, ReturnWindow, RunDir};
use super::update::ppo_update;
use super::{diverged, finish_run, rng_stream, OnUpdate, Stream, TrainOutcome};
use crate::error::Result;
use crate::nn::AdamState;
use crate::rollout::{RolloutBatch, RunningNorm};

pub fn serial_train(
    config: &TrainConfig,
    run_dir: Option<&Path>,
    on_update: &mut OnUpdate<'_>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let spec = config.env.spec()?;
    let mut agent = Agent::new(&spec, config.hidden, config.log_std_init, &mut rng_stream(config.seed, Stream::Init))?;
    let mut adam = AdamState::new(agent.params().len(), config.lr);
    let mut norm = config.obs_norm.then(|| RunningNorm::new(spec.obs_dim));
    let mut collector = Collector::new(
        &config.env,
        config.num_envs,
        config.reward_scale.then_some(config.gamma),
        rng_stream(config.seed, Stream::Reset(0)),
    )?;
    let mut act_rng = rng_stream(config.seed, Stream::Act(0));
    let mut mb_rng = rng_stream(config.seed, Stream::Minibatch);
    let mut run = run_dir.map(|d| RunDir::create(d, config)).transpose()?;
    let mut window = ReturnWindow::new(config.return_window);
    let mut metrics = Vec::with_capacity(config.num_updates());

    for update in 1..=config.num_updates() {
        let before = (agent.clone(), norm.clone());
        let result = (|| {
            let mut mode = match norm.as_mut() {
                Some(n) => NormMode::Update(n),
                None => NormMode::Off,
            };
            let collected = collector.collect(&agent, &mut mode, config.rollout_len, &mut act_rng, false)?;
            window.extend(&collected.episode_returns);
            let mut batch = RolloutBatch::from_trajectories(&collected.trajectories, config.gamma, config.lam)?;
            ppo_update(&mut agent, &mut adam, &mut batch, config, &mut mb_rng)
        })();
        let loss = match result {
            Ok(loss) => loss,
            Err(e) => return Err(diverged(update, e, run.as_ref(), &before.0, before.1.as_ref())),
        };
        let step = update as u64 * config.steps_per_update();
        let row = MetricsRow::new(step, update, config, &loss, window.mean(), 0.0);
        if let Some(run) = run.as_mut() {
            run.record(&row)?;
            if config.checkpoint_every > 0 && update.is_multiple_of(config.checkpoint_every) {
                run.save_step(step, &agent.checkpoint(norm.as_ref())?)?;
            }
        }
        let flow = on_update(&row);
        metrics.push(row);
        if flow.is_break() {
            break;
        }
    }
    finish_run(agent, norm, metrics, None, run.as_ref())
}
