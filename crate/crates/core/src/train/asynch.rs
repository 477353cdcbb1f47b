//! Sampler/trainer training. Samplers roll out with the latest published
//! parameters and push frames into a bounded queue; trainers pop frames,
//! estimate advantages from the frame's recorded values and take turns
//! (via an update token) applying updates and publishing new versions.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use super::agent::Agent;
use super::collect::{Collector, NormMode};
use super::config::TrainConfig;
use super::metrics::{MetricsRow, ReturnWindow, RunDir};
use super::queue::{ExperienceQueue, Pop, QueueCounts};
use super::store::ParamStore;
use super::update::ppo_update;
use super::{diverged, finish_run, rng_stream, OnUpdate, Stream, TrainOutcome};
use crate::error::{Error, Result};
use crate::nn::AdamState;
use crate::rollout::{RolloutBatch, RunningNorm, Trajectory};

const POLL: Duration = Duration::from_millis(20);

/// One sampler rollout, tagged with the policy version that produced it.
#[derive(Debug, Clone)]
pub struct ExperienceFrame {
    pub policy_version: u64,
    pub sampler: usize,
    pub trajectories: Vec<Trajectory>,
    /// Raw observations, present when observation normalization is on.
    pub raw_obs: Vec<f64>,
    pub episode_returns: Vec<f64>,
}

/// Telemetry of an asynchronous run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AsyncStats {
    pub queue: QueueCounts,
    /// Versions in publication order.
    pub published_versions: Vec<u64>,
    /// Trainer version minus frame version, one entry per update.
    pub staleness: Vec<u64>,
    pub snapshot_reads: u64,
    pub torn_reads: u64,
    /// Times a trainer found the queue empty.
    pub trainer_waits: u64,
}

impl AsyncStats {
    pub fn staleness_histogram(&self) -> BTreeMap<u64, u64> {
        let mut h = BTreeMap::new();
        for &s in &self.staleness {
            *h.entry(s).or_insert(0) += 1;
        }
        h
    }

    pub fn mean_staleness(&self) -> f64 {
        if self.staleness.is_empty() {
            0.0
        } else {
            self.staleness.iter().sum::<u64>() as f64 / self.staleness.len() as f64
        }
    }

    pub fn versions_monotone(&self) -> bool {
        self.published_versions
            .iter()
            .enumerate()
            .all(|(i, &v)| v == i as u64 + 1)
    }
}

struct TrainerState<'a> {
    agent: Agent,
    adam: AdamState,
    norm: Option<RunningNorm>,
    mb_rng: rand_chacha::ChaCha8Rng,
    window: ReturnWindow,
    updates: usize,
    halted: bool,
    metrics: Vec<MetricsRow>,
    run: Option<RunDir>,
    published: Vec<u64>,
    staleness: Vec<u64>,
    error: Option<Error>,
    on_update: &'a mut OnUpdate<'a>,
}

pub fn async_train(
    config: &TrainConfig,
    run_dir: Option<&Path>,
    on_update: &mut OnUpdate<'_>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let spec = config.env.spec()?;
    let agent = Agent::new(&spec, config.hidden, config.log_std_init, &mut rng_stream(config.seed, Stream::Init))?;
    let norm = config.obs_norm.then(|| RunningNorm::new(spec.obs_dim));
    let store = ParamStore::new(agent.params(), norm.clone());
    let queue: ExperienceQueue<ExperienceFrame> = ExperienceQueue::new(config.queue_capacity);
    let stop = AtomicBool::new(false);
    let torn = AtomicU64::new(0);
    let waits = AtomicU64::new(0);
    let num_updates = config.num_updates();
    let state = Mutex::new(TrainerState {
        adam: AdamState::new(agent.params().len(), config.lr),
        agent: agent.clone(),
        norm,
        mb_rng: rng_stream(config.seed, Stream::Minibatch),
        window: ReturnWindow::new(config.return_window),
        updates: 0,
        halted: false,
        metrics: Vec::with_capacity(num_updates),
        run: run_dir.map(|d| RunDir::create(d, config)).transpose()?,
        published: Vec::with_capacity(num_updates),
        staleness: Vec::with_capacity(num_updates),
        error: None,
        on_update,
    });
    let shutdown = || {
        stop.store(true, Ordering::SeqCst);
        queue.close();
    };

    let sampler_results: Vec<Result<()>> = thread::scope(|s| {
        let samplers: Vec<_> = (0..config.samplers)
            .map(|id| {
                let (store, queue, stop, torn, agent) = (&store, &queue, &stop, &torn, agent.clone());
                let shutdown = &shutdown;
                s.spawn(move || {
                    let r = run_sampler(id, config, agent, store, queue, stop, torn);
                    if r.is_err() {
                        shutdown();
                    }
                    r
                })
            })
            .collect();
        for _ in 0..config.trainers {
            let (store, queue, stop, waits, state) = (&store, &queue, &stop, &waits, &state);
            let shutdown = &shutdown;
            s.spawn(move || run_trainer(config, num_updates, store, queue, stop, waits, state, shutdown));
        }
        samplers.into_iter().map(|h| h.join().expect("sampler thread")).collect()
    });

    let st = state.into_inner().expect("trainer state");
    if let Some(e) = st.error {
        return Err(e);
    }
    for r in sampler_results {
        r?;
    }
    let stats = AsyncStats {
        queue: queue.counts(),
        published_versions: st.published,
        staleness: st.staleness,
        snapshot_reads: store.reads(),
        torn_reads: torn.load(Ordering::SeqCst),
        trainer_waits: waits.load(Ordering::SeqCst),
    };
    if let Some(run) = st.run.as_ref() {
        let mut w = csv::Writer::from_path(run.root().join("staleness.csv"))?;
        w.write_record(["staleness", "updates"])?;
        for (k, v) in stats.staleness_histogram() {
            w.write_record([k.to_string(), v.to_string()])?;
        }
        w.flush()?;
    }
    finish_run(st.agent, st.norm, st.metrics, Some(stats), st.run.as_ref())
}

fn run_sampler(
    id: usize,
    config: &TrainConfig,
    mut agent: Agent,
    store: &ParamStore,
    queue: &ExperienceQueue<ExperienceFrame>,
    stop: &AtomicBool,
    torn: &AtomicU64,
) -> Result<()> {
    let mut collector = Collector::new(
        &config.env,
        config.num_envs,
        config.reward_scale.then_some(config.gamma),
        rng_stream(config.seed, Stream::Reset(id)),
    )?;
    let mut act_rng = rng_stream(config.seed, Stream::Act(id));
    let mut last_version = None;
    while !stop.load(Ordering::SeqCst) {
        if let (true, Some(v)) = (config.sync_handshake, last_version) {
            if store.wait_for_version(v + 1, POLL) <= v {
                continue;
            }
        }
        let snap = match store.read() {
            Ok(s) => s,
            Err(Error::TornSnapshot { .. }) => {
                torn.fetch_add(1, Ordering::SeqCst);
                continue;
            }
            Err(e) => return Err(e),
        };
        agent.set_params(snap.params.values())?;
        let mut mode = match &snap.obs_norm {
            Some(n) => NormMode::Frozen(n),
            None => NormMode::Off,
        };
        let collected = collector.collect(&agent, &mut mode, config.rollout_len, &mut act_rng, config.obs_norm)?;
        last_version = Some(snap.version);
        let frame = ExperienceFrame {
            policy_version: snap.version,
            sampler: id,
            trajectories: collected.trajectories,
            raw_obs: collected.raw_obs,
            episode_returns: collected.episode_returns,
        };
        if !queue.push(frame) {
            break;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_trainer(
    config: &TrainConfig,
    num_updates: usize,
    store: &ParamStore,
    queue: &ExperienceQueue<ExperienceFrame>,
    stop: &AtomicBool,
    waits: &AtomicU64,
    state: &Mutex<TrainerState<'_>>,
    shutdown: &(dyn Fn() + Sync),
) {
    while !stop.load(Ordering::SeqCst) {
        let frame = match queue.pop(POLL) {
            Pop::Item(f) => f,
            Pop::TimedOut => {
                waits.fetch_add(1, Ordering::SeqCst);
                continue;
            }
            Pop::Closed => break,
        };
        // holding the state lock is the update token
        let mut guard = state.lock().expect("trainer state");
        let st = &mut *guard;
        if st.updates >= num_updates || st.halted || st.error.is_some() {
            break;
        }
        let update = st.updates + 1;
        let staleness = store.version() - frame.policy_version;
        let before = (st.agent.clone(), st.norm.clone());
        let result = (|| {
            if let Some(n) = st.norm.as_mut() {
                for row in frame.raw_obs.chunks(n.dim()) {
                    n.update(row)?;
                }
            }
            st.window.extend(&frame.episode_returns);
            let mut batch = RolloutBatch::from_trajectories(&frame.trajectories, config.gamma, config.lam)?;
            ppo_update(&mut st.agent, &mut st.adam, &mut batch, config, &mut st.mb_rng)
        })();
        let outcome = result.and_then(|loss| {
            let version = store.publish(st.agent.params(), st.norm.clone());
            st.published.push(version);
            st.staleness.push(staleness);
            st.updates = update;
            let step = update as u64 * config.steps_per_update();
            let row = MetricsRow::new(step, update, config, &loss, st.window.mean(), staleness as f64);
            if let Some(run) = st.run.as_mut() {
                run.record(&row)?;
                if config.checkpoint_every > 0 && update.is_multiple_of(config.checkpoint_every) {
                    run.save_step(step, &st.agent.checkpoint(st.norm.as_ref())?)?;
                }
            }
            st.halted = (st.on_update)(&row).is_break();
            st.metrics.push(row);
            Ok(())
        });
        if let Err(e) = outcome {
            st.error = Some(diverged(update, e, st.run.as_ref(), &before.0, before.1.as_ref()));
            shutdown();
            break;
        }
        if st.updates >= num_updates || st.halted {
            shutdown();
            break;
        }
    }
}
