mod common;

use common::GridOracle;
use compound_ppo::dist::CompoundAction;
use compound_ppo::env::{EnvConfig, Environment, GridHarvest, GridHarvestConfig, Mode, Move};
use proptest::prelude::*;

fn oracle_for(env: &GridHarvest) -> GridOracle {
    let cfg = env.config();
    GridOracle::new(cfg.size, env.depot(), env.remaining_resources(), cfg.build_requirement, cfg.max_steps)
}

#[test]
fn optimal_sequences_replay_exactly() {
    let mut env = GridHarvest::new(GridHarvestConfig::default()).unwrap();
    env.reset(0);
    let oracle = oracle_for(&env);
    let bound = oracle.upper_bound();
    // four harvests and a build cost at least five steps
    assert!(bound <= 4.0 + 5.0 - 0.05 + 1e-12, "{bound}");
    for seed in 0..20 {
        env.reset(seed);
        let start = env.agent();
        let plan = oracle.optimal_actions(start);
        let mut total = 0.0;
        for (m, d) in plan {
            let out = env.step(&GridHarvest::encode(Move::ALL[m], Mode::ALL[d])).unwrap();
            total += out.reward;
            if out.done {
                break;
            }
        }
        assert!((total - oracle.optimal_return(start)).abs() < 1e-9, "seed {seed}: {total}");
        assert!(total <= bound + 1e-12);
    }
}

fn action_strategy(env: &str) -> BoxedStrategy<CompoundAction> {
    match env {
        "gridharvest" => (0usize..5, 0usize..3)
            .prop_map(|(m, d)| CompoundAction::Discrete(vec![m, d]))
            .boxed(),
        _ => proptest::collection::vec(-3.0f64..3.0, 6).prop_map(CompoundAction::Continuous).boxed(),
    }
}

fn rollout(env: &mut Box<dyn Environment>, seed: u64, actions: &[CompoundAction]) -> Vec<(Vec<f64>, f64, bool)> {
    let mut out = vec![(env.reset(seed), 0.0, false)];
    for a in actions {
        let r = env.step(a).unwrap();
        let done = r.done;
        out.push((r.observation, r.reward, done));
        if done {
            break;
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn same_seed_and_actions_same_trajectory(
        seed in any::<u64>(),
        name in prop_oneof![Just("gridharvest"), Just("chainreach")],
        actions in proptest::collection::vec(action_strategy("gridharvest"), 0..80),
        cont in proptest::collection::vec(action_strategy("chainreach"), 0..80),
    ) {
        let cfg = EnvConfig::by_name(name).unwrap();
        let acts = if name == "gridharvest" { actions } else { cont };
        let mut a = cfg.build().unwrap();
        let mut b = cfg.build().unwrap();
        let ta = rollout(&mut a, seed, &acts);
        prop_assert_eq!(&ta, &rollout(&mut b, seed, &acts));
        let (lo, hi) = a.spec().reward_range;
        for (obs, r, _) in &ta {
            prop_assert_eq!(obs.len(), a.spec().obs_dim);
            prop_assert!(obs.iter().all(|x| x.is_finite()));
            prop_assert!(*r >= lo && *r <= hi, "reward {} outside [{}, {}]", r, lo, hi);
        }
    }

    #[test]
    fn gridharvest_rewards_within_stated_bounds(seed in any::<u64>(), acts in proptest::collection::vec((0usize..5, 0usize..3), 64)) {
        let mut env = GridHarvest::new(GridHarvestConfig::default()).unwrap();
        env.reset(seed);
        for (m, d) in acts {
            let r = env.step(&CompoundAction::Discrete(vec![m, d])).unwrap();
            prop_assert!(r.reward >= -0.01 - 1e-12 && r.reward <= 4.99 + 1e-12);
            if r.done { break; }
        }
    }
}

#[test]
fn every_episode_ends_by_the_cap() {
    for name in ["gridharvest", "chainreach"] {
        let mut env = EnvConfig::by_name(name).unwrap().build().unwrap();
        let cap = env.spec().max_episode_steps;
        env.reset(11);
        let zero = match name {
            "gridharvest" => CompoundAction::Discrete(vec![4, 2]),
            _ => CompoundAction::Continuous(vec![0.0; 6]),
        };
        let mut steps = 0;
        while !env.step(&zero).unwrap().done {
            steps += 1;
            assert!(steps < cap);
        }
        assert_eq!(steps + 1, cap);
    }
}
