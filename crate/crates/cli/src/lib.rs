//! The `compound-ppo` experiment runner: `train`, `sweep` and `eval`.
//!
//! Every run directory holds `manifest.json` (written before training
//! starts and finalized afterwards) next to the library's `config.snapshot`,
//! `metrics.csv`, `checkpoints/` and `final`.

pub mod args;
pub mod manifest;

use std::fmt;
use std::ops::ControlFlow;
use std::path::Path;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use anyhow::Context;
use compound_ppo::env::EnvConfig;
use compound_ppo::loss::LossKind;
use compound_ppo::nn::checkpoint;
use compound_ppo::train::{self as training, MetricsRow, TrainConfig, TrainOutcome, CONFIG_SNAPSHOT};
use serde::Serialize;

pub use args::{Cli, Command, ConfigArgs, EvalArgs, SweepArgs, TrainArgs};
pub use manifest::{RunManifest, RunStatus, MANIFEST_FILE};

pub const SWEEP_SUMMARY: &str = "summary.csv";

/// A bad flag or flag combination; reported with the usage exit code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(e: anyhow::Error) -> anyhow::Error {
    UsageError(format!("{e:#}")).into()
}

pub fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Eval(a) => cmd_eval(&a),
    }
}

fn eps_label(eps: f64) -> String {
    if eps.is_infinite() {
        "noclip".to_string()
    } else {
        format!("{eps}")
    }
}

/// Trains `config` into `run_dir`, bracketing the run with manifest writes.
/// `progress` receives every metrics row.
pub fn run_training(
    config: &TrainConfig,
    run_dir: &Path,
    progress: &mut (dyn FnMut(&MetricsRow) + Send),
) -> anyhow::Result<TrainOutcome> {
    if run_dir.read_dir().is_ok_and(|mut d| d.next().is_some()) {
        anyhow::bail!("run directory {} already exists and is not empty", run_dir.display());
    }
    let mut manifest = RunManifest::start(config)?;
    manifest.write(run_dir)?;
    let result = training::train_with(config, Some(run_dir), &mut |row: &MetricsRow| {
        progress(row);
        ControlFlow::Continue(())
    });
    manifest.finish(result.as_ref().err().map(|e| e.to_string()));
    manifest.write(run_dir)?;
    Ok(result?)
}

fn print_every(config: &TrainConfig) -> usize {
    (config.num_updates() / 20).max(1)
}

pub fn cmd_train(args: &TrainArgs) -> anyhow::Result<ExitCode> {
    let config = args.resolve().map_err(usage)?;
    let name = args.name.clone().unwrap_or_else(|| {
        format!(
            "{}-{}-eps{}-seed{}-{}",
            config.env.name(),
            config.loss,
            eps_label(config.clip_eps),
            config.seed,
            chrono::Utc::now().format("%Y%m%dT%H%M%S")
        )
    });
    let run_dir = args.config.out_dir.join(name);
    eprintln!(
        "training {} on {} for {} updates ({} steps) into {}",
        config.loss,
        config.env.name(),
        config.num_updates(),
        config.num_updates() as u64 * config.steps_per_update(),
        run_dir.display()
    );
    let every = print_every(&config);
    let outcome = run_training(&config, &run_dir, &mut |row| {
        if row.update % every == 0 {
            eprintln!(
                "update {:>5}  step {:>9}  mean return {:>9.3}  unclipped {:.3}",
                row.update,
                row.step,
                row.mean_ep_return,
                row.unclipped_fraction()
            );
        }
    })?;
    if let Some(last) = outcome.metrics.last() {
        println!("final mean return {:.4} after {} steps", last.mean_ep_return, last.step);
    }
    println!("run directory: {}", run_dir.display());
    Ok(ExitCode::SUCCESS)
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub loss_variant: String,
    pub eps: f64,
    pub status: String,
    pub updates: usize,
    pub final_step: u64,
    pub final_mean_return: f64,
    /// Mean over updates of the unclipped-sample fraction.
    pub unclipped_fraction: f64,
    pub run_dir: String,
    pub error: String,
}

fn sweep_row(loss: LossKind, eps: f64, dir: &Path, result: anyhow::Result<TrainOutcome>) -> SweepRow {
    let mut row = SweepRow {
        loss_variant: loss.name().to_string(),
        eps,
        status: "ok".into(),
        updates: 0,
        final_step: 0,
        final_mean_return: f64::NAN,
        unclipped_fraction: f64::NAN,
        run_dir: dir.display().to_string(),
        error: String::new(),
    };
    match result {
        Ok(out) => {
            let m = &out.metrics;
            row.updates = m.len();
            if let Some(last) = m.last() {
                row.final_step = last.step;
                row.final_mean_return = last.mean_ep_return;
                row.unclipped_fraction = m.iter().map(MetricsRow::unclipped_fraction).sum::<f64>() / m.len() as f64;
            }
        }
        Err(e) => {
            row.status = "failed".into();
            row.error = format!("{e:#}");
        }
    }
    row
}

pub fn cmd_sweep(args: &SweepArgs) -> anyhow::Result<ExitCode> {
    let base = args.config.resolve().map_err(usage)?;
    let mut jobs: Vec<(LossKind, f64, TrainConfig)> = Vec::new();
    for loss in args.losses() {
        for eps in args.epsilons() {
            let config = TrainConfig { loss, clip_eps: eps, ..base.clone() };
            config.validate().map_err(|e| usage(e.into()))?;
            jobs.push((loss, eps, config));
        }
    }
    let root = &args.config.out_dir;
    std::fs::create_dir_all(root).with_context(|| format!("cannot create {}", root.display()))?;
    eprintln!("sweep: {} runs, {} at a time, into {}", jobs.len(), args.jobs, root.display());

    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<SweepRow>>> = Mutex::new(vec![None; jobs.len()]);
    thread::scope(|s| {
        for _ in 0..(args.jobs as usize).min(jobs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((loss, eps, config)) = jobs.get(i) else { break };
                let dir = root.join(format!("{loss}-eps{}", eps_label(*eps)));
                let result = run_training(config, &dir, &mut |_| {});
                let row = sweep_row(*loss, *eps, &dir, result);
                eprintln!(
                    "[{}/{}] {} eps {}: {} (final return {:.3}, unclipped {:.3}){}",
                    i + 1,
                    jobs.len(),
                    row.loss_variant,
                    eps_label(*eps),
                    row.status,
                    row.final_mean_return,
                    row.unclipped_fraction,
                    if row.error.is_empty() { String::new() } else { format!(": {}", row.error) }
                );
                rows.lock().expect("sweep rows")[i] = Some(row);
            });
        }
    });
    let rows: Vec<SweepRow> = rows.into_inner().expect("sweep rows").into_iter().flatten().collect();

    let path = root.join(SWEEP_SUMMARY);
    let mut w = csv::Writer::from_path(&path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    println!("{:<10} {:>7} {:>7} {:>12} {:>10}", "loss", "eps", "status", "final_return", "unclipped");
    for r in &rows {
        println!(
            "{:<10} {:>7} {:>7} {:>12.4} {:>10.4}",
            r.loss_variant,
            eps_label(r.eps),
            r.status,
            r.final_mean_return,
            r.unclipped_fraction
        );
    }
    println!("summary: {}", path.display());
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed", rows.len());
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

/// The environment recorded next to a checkpoint: `final` sits in the run
/// directory, `checkpoints/step_<N>` one level below it.
fn snapshot_env(checkpoint: &Path) -> Option<EnvConfig> {
    let parent = checkpoint.parent()?;
    [Some(parent), parent.parent()].into_iter().flatten().find_map(|dir| {
        let text = std::fs::read_to_string(dir.join(CONFIG_SNAPSHOT)).ok()?;
        TrainConfig::from_toml(&text).ok().map(|c| c.env)
    })
}

pub fn cmd_eval(args: &EvalArgs) -> anyhow::Result<ExitCode> {
    if args.episodes == 0 {
        return Err(UsageError("--episodes must be at least 1".into()).into());
    }
    let params = checkpoint::load(&args.checkpoint)
        .with_context(|| format!("cannot read checkpoint {}", args.checkpoint.display()))?;
    let env = match &args.env {
        Some(name) => EnvConfig::by_name(name).map_err(|e| usage(e.into()))?,
        None => snapshot_env(&args.checkpoint).ok_or_else(|| {
            UsageError(format!(
                "no {CONFIG_SNAPSHOT} found next to {}; pass --env",
                args.checkpoint.display()
            ))
        })?,
    };
    let report = training::evaluate(&params, &env, args.episodes, args.seed)?;
    println!(
        "{}: mean return {:.4} ± {:.4} (95% CI, {} episodes)",
        env.name(),
        report.mean,
        report.ci95,
        args.episodes
    );
    if args.baseline {
        let base = training::random_baseline(&env, args.episodes, args.seed)?;
        println!("random baseline: mean return {:.4} ± {:.4}", base.mean, base.ci95);
    }
    Ok(ExitCode::SUCCESS)
}
