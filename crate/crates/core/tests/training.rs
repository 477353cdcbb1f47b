use std::fs;
use std::ops::ControlFlow;

use compound_ppo::env::EnvConfig;
use compound_ppo::loss::LossKind;
use compound_ppo::nn::checkpoint;
use compound_ppo::train::{
    evaluate, random_baseline, read_metrics, train, train_with, TrainConfig, TrainMode, CONFIG_SNAPSHOT, FINAL_CHECKPOINT,
    METRICS_COLUMNS, METRICS_FILE,
};
use compound_ppo::Error;

fn tiny(env: &str) -> TrainConfig {
    TrainConfig {
        env: EnvConfig::by_name(env).unwrap(),
        rollout_len: 32,
        num_envs: 2,
        minibatch: 32,
        epochs: 2,
        hidden: 16,
        total_steps: 64 * 5,
        ..TrainConfig::default()
    }
}

#[test]
fn one_rollout_one_update() {
    let cfg = TrainConfig { total_steps: 32, ..tiny("gridharvest") };
    let out = train(&cfg, None).unwrap();
    assert_eq!(out.metrics.len(), 1);
    assert_eq!(out.metrics[0].update, 1);
    assert_eq!(out.metrics[0].step, 64);
}

#[test]
fn run_directory_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig { checkpoint_every: 2, ..tiny("chainreach") };
    let out = train(&cfg, Some(dir.path())).unwrap();
    for f in [CONFIG_SNAPSHOT, METRICS_FILE, FINAL_CHECKPOINT, "checkpoints/step_128", "checkpoints/step_256"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let header = fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(header.lines().next().unwrap(), METRICS_COLUMNS.join(","));
    assert_eq!(read_metrics(&dir.path().join(METRICS_FILE)).unwrap(), out.metrics);
    let saved = checkpoint::load(&dir.path().join(FINAL_CHECKPOINT)).unwrap();
    assert_eq!(saved, out.checkpoint().unwrap());
}

#[test]
fn breakdown_satisfies_objective_identity() {
    for kind in LossKind::ALL {
        let cfg = TrainConfig { loss: kind, ..tiny("gridharvest") };
        for row in train(&cfg, None).unwrap().metrics {
            let j = row.policy_obj - cfg.c1 * row.value_loss + cfg.c2 * row.entropy;
            assert!((row.total_obj - j).abs() <= 1e-12, "{kind}: {row:?}");
            assert!(row.unclipped_samples <= row.total_samples);
            assert!(row.unclipped_sub_entries <= row.total_sub_entries);
        }
    }
}

#[test]
fn serial_runs_are_bit_identical() {
    let cfg = TrainConfig { obs_norm: true, reward_scale: true, value_clip: true, ..tiny("chainreach") };
    let a = train(&cfg, None).unwrap();
    let b = train(&cfg, None).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.checkpoint().unwrap().values(), b.checkpoint().unwrap().values());
    let c = train(&TrainConfig { seed: 1, ..cfg }, None).unwrap();
    assert_ne!(a.checkpoint().unwrap().values(), c.checkpoint().unwrap().values());
}

#[test]
fn early_stop_from_callback() {
    let cfg = tiny("gridharvest");
    let out = train_with(&cfg, None, &mut |row| {
        if row.update == 2 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .unwrap();
    assert_eq!(out.metrics.len(), 2);
}

#[test]
fn divergence_reports_last_good_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig { lr: 1e300, grad_clip: false, ..tiny("chainreach") };
    match train(&cfg, Some(dir.path())) {
        Err(Error::Diverged { update, last_good, .. }) => {
            assert!(update >= 1);
            let path = last_good.expect("checkpoint written");
            let params = checkpoint::load(&path).unwrap();
            assert!(params.first_non_finite().is_none());
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn async_single_sampler_handshake() {
    let cfg = TrainConfig {
        mode: TrainMode::Async,
        sync_handshake: true,
        ..tiny("gridharvest")
    };
    let out = train(&cfg, None).unwrap();
    let stats = out.async_stats.unwrap();
    assert_eq!(out.metrics.len(), cfg.num_updates());
    assert!(stats.versions_monotone());
    assert!(stats.queue.conserved());
    // each rollout waits for the previous update, so no frame is ever stale
    assert!(stats.staleness.iter().all(|&s| s == 0), "{:?}", stats.staleness);
    assert_eq!(stats.torn_reads, 0);
}

#[test]
fn async_many_trainers_with_obs_norm() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        mode: TrainMode::Async,
        samplers: 2,
        trainers: 3,
        obs_norm: true,
        ..tiny("chainreach")
    };
    let out = train(&cfg, Some(dir.path())).unwrap();
    let stats = out.async_stats.unwrap();
    assert_eq!(stats.published_versions.len(), cfg.num_updates());
    assert!(stats.versions_monotone());
    assert!(stats.queue.conserved());
    assert!(out.obs_norm.is_some());
    assert!(dir.path().join("staleness.csv").exists());
    assert!(out.metrics.iter().all(|r| r.staleness_mean >= 0.0));
}

#[test]
fn evaluation_is_pure_and_checks_the_env() {
    let cfg = tiny("gridharvest");
    let ckpt = train(&cfg, None).unwrap().checkpoint().unwrap();
    let env = EnvConfig::by_name("gridharvest").unwrap();
    let a = evaluate(&ckpt, &env, 10, 3).unwrap();
    assert_eq!(a, evaluate(&ckpt, &env, 10, 3).unwrap());
    assert_eq!(a.returns.len(), 10);
    assert!(evaluate(&ckpt, &env, 0, 3).is_err());
    let other = EnvConfig::by_name("chainreach").unwrap();
    assert!(matches!(evaluate(&ckpt, &other, 5, 0), Err(Error::SpecMismatch(_))));
}

#[test]
fn untrained_policy_is_near_random_baseline() {
    // a fresh policy's output layer is tiny, so its sampled actions are nearly uniform
    let env = EnvConfig::by_name("gridharvest").unwrap();
    let cfg = TrainConfig { total_steps: 1, rollout_len: 64, num_envs: 1, minibatch: 64, lr: 1e-12, ..TrainConfig::default() };
    let out = train(&cfg, None).unwrap();
    let fresh_mean = out.metrics[0].mean_ep_return;
    let baseline = random_baseline(&env, 400, 1).unwrap();
    assert!(fresh_mean.is_nan() || (fresh_mean - baseline.mean).abs() < 1.5, "{fresh_mean} vs {}", baseline.mean);
    let ckpt = out.checkpoint().unwrap();
    let greedy = evaluate(&ckpt, &env, 50, 1).unwrap();
    // the greedy policy of an untrained net repeats one action; it cannot beat the optimum
    assert!(greedy.mean <= 8.95);
}
