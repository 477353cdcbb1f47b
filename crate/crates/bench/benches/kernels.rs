use std::hint::black_box;

use compound_ppo::env::EnvConfig;
use compound_ppo::loss::{policy_loss, LossKind, LossVariant, PolicyLossConfig};
use compound_ppo::nn::{Matrix, MlpNet};
use compound_ppo::rollout::compute_gae;
use compound_ppo::train::{Agent, MinibatchRef, ObjectiveConfig};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BATCH: usize = 256;

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn mlp(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    // GridHarvest-sized policy network
    let net = MlpNet::init(vec![148, 64, 64, 8], 0.01, &mut rng).unwrap();
    let x = random_matrix(BATCH, 148, &mut rng);
    let up = random_matrix(BATCH, 8, &mut rng);
    c.bench_function("mlp_forward_256x148", |b| b.iter(|| net.forward_batch(black_box(&x)).unwrap()));
    let cache = net.forward_batch(&x).unwrap();
    c.bench_function("mlp_backward_256x148", |b| b.iter(|| net.backward_batch(black_box(&cache), &up).unwrap()));
}

fn losses(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let new = random_matrix(BATCH, 6, &mut rng);
    let old = random_matrix(BATCH, 6, &mut rng);
    let adv: Vec<f64> = (0..BATCH).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut group = c.benchmark_group("policy_loss_256x6");
    for kind in LossKind::ALL {
        let cfg = PolicyLossConfig::new(LossVariant::of(kind), 0.2);
        group.bench_function(kind.name(), |b| b.iter(|| policy_loss(&cfg, black_box(&new), &old, &adv).unwrap()));
    }
    group.finish();
}

fn full_objective(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let spec = EnvConfig::by_name("gridharvest").unwrap().spec().unwrap();
    let agent = Agent::new(&spec, 64, 0.0, &mut rng).unwrap();
    let states = random_matrix(BATCH, spec.obs_dim, &mut rng);
    let acted = agent.act_batch(&states, Some(&mut rng)).unwrap();
    let old = Matrix::from_rows(&acted.logps).unwrap();
    let adv: Vec<f64> = (0..BATCH).map(|_| rng.random_range(-1.0..1.0)).collect();
    let obj = ObjectiveConfig {
        policy: PolicyLossConfig::new(LossVariant::of(LossKind::MixLoss), 0.2),
        c1: 0.5,
        c2: 0.01,
        value_clip: None,
    };
    c.bench_function("agent_loss_and_grad_256", |b| {
        b.iter(|| {
            let mb = MinibatchRef {
                states: &states,
                actions: &acted.actions,
                old_logps: &old,
                advantages: &adv,
                returns: &adv,
                old_values: &acted.values,
            };
            agent.loss_and_grad(&obj, mb).unwrap()
        })
    });
}

fn gae(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 4096;
    let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let values: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dones: Vec<bool> = (0..n).map(|_| rng.random_bool(0.02)).collect();
    c.bench_function("gae_4096", |b| {
        b.iter(|| compute_gae(black_box(&rewards), &values, &dones, 0.0, 0.99, 0.95).unwrap())
    });
}

criterion_group!(benches, mlp, losses, full_objective, gae);
criterion_main!(benches);
