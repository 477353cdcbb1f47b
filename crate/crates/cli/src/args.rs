//! Command-line flags and their resolution into a [`TrainConfig`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use compound_ppo::env::EnvConfig;
use compound_ppo::loss::LossKind;
use compound_ppo::train::{TrainConfig, TrainMode, PRESETS};

/// Default output root when neither `--out-dir` nor `COMPOUND_PPO_OUT` is set.
pub const DEFAULT_OUT_ROOT: &str = "runs";

#[derive(Debug, Parser)]
#[command(name = "compound-ppo", version = env!("COMPOUND_PPO_BUILD"), about = "PPO with compound-action policy losses")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one policy and write a run directory.
    Train(TrainArgs),
    /// Train every (loss, clip eps) combination and summarize the runs.
    Sweep(SweepArgs),
    /// Evaluate a checkpoint with greedy actions.
    Eval(EvalArgs),
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse().map_err(|_| {
        let names: Vec<_> = LossKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown loss `{s}`; valid losses: {}", names.join(", "))
    })
}

/// Accepts any float including `inf`, which disables clipping.
fn parse_eps(s: &str) -> Result<f64, String> {
    let eps: f64 = s.parse().map_err(|_| format!("`{s}` is not a number (use `inf` to disable clipping)"))?;
    if eps.is_nan() || eps <= 0.0 {
        return Err(format!("clip eps must be positive, got {s}"));
    }
    Ok(eps)
}

fn parse_mode(s: &str) -> Result<TrainMode, String> {
    s.parse().map_err(|e: compound_ppo::Error| e.to_string())
}

fn parse_preset(s: &str) -> Result<String, String> {
    if PRESETS.contains(&s) {
        Ok(s.to_string())
    } else {
        Err(format!("unknown preset `{s}`; valid presets: {}", PRESETS.join(", ")))
    }
}

/// Flags shared by `train` and `sweep`. Unset flags keep the value from the
/// base configuration (`--config`, else `--preset`, else the defaults).
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML configuration, e.g. a run's `config.snapshot`.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_preset)]
    pub preset: Option<String>,
    /// gridharvest or chainreach.
    #[arg(long)]
    pub env: Option<String>,
    /// Weight of the joint term in mix-ratio and mix-loss.
    #[arg(long)]
    pub w: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub lam: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Value-loss coefficient.
    #[arg(long)]
    pub c1: Option<f64>,
    /// Entropy coefficient.
    #[arg(long)]
    pub c2: Option<f64>,
    /// Total environment steps.
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub rollout_len: Option<usize>,
    #[arg(long)]
    pub num_envs: Option<usize>,
    #[arg(long)]
    pub minibatch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<TrainMode>,
    #[arg(long)]
    pub samplers: Option<usize>,
    #[arg(long)]
    pub trainers: Option<usize>,
    /// Output root; run directories are created beneath it.
    #[arg(long, env = "COMPOUND_PPO_OUT", default_value = DEFAULT_OUT_ROOT)]
    pub out_dir: PathBuf,
}

impl ConfigArgs {
    /// Base configuration with every set flag applied, validated.
    pub fn resolve(&self) -> anyhow::Result<TrainConfig> {
        let mut c = match (&self.config, &self.preset) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
                TrainConfig::from_toml(&text)?
            }
            (None, Some(name)) => TrainConfig::preset(name)?,
            (None, None) => TrainConfig::default(),
        };
        // switching environments resets its parameters; naming the current one keeps them
        if let Some(env) = &self.env {
            if env != c.env.name() {
                c.env = EnvConfig::by_name(env)?;
            }
        }
        macro_rules! apply {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = self.$field { c.$target = v; })*
            };
        }
        apply!(
            w => w, gamma => gamma, lam => lam, lr => lr, c1 => c1, c2 => c2, steps => total_steps,
            rollout_len => rollout_len, num_envs => num_envs, minibatch => minibatch, epochs => epochs,
            seed => seed, mode => mode, samplers => samplers, trainers => trainers,
        );
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<LossKind>,
    /// Clip coefficient; `inf` disables clipping.
    #[arg(long, value_parser = parse_eps)]
    pub clip_eps: Option<f64>,
    /// Run directory name under the output root (default: derived from the
    /// configuration and the start time).
    #[arg(long)]
    pub name: Option<String>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

impl TrainArgs {
    pub fn resolve(&self) -> anyhow::Result<TrainConfig> {
        let mut c = self.config.resolve()?;
        if let Some(loss) = self.loss {
            c.loss = loss;
        }
        if let Some(eps) = self.clip_eps {
            c.clip_eps = eps;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated losses (default: all four).
    #[arg(long, value_parser = parse_loss, value_delimiter = ',')]
    pub loss: Vec<LossKind>,
    /// Comma-separated clip coefficients.
    #[arg(long, value_parser = parse_eps, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.5")]
    pub clip_eps: Vec<f64>,
    /// Also run every loss with clipping disabled.
    #[arg(long)]
    pub include_noclip: bool,
    /// Runs trained concurrently.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: u32,
    #[command(flatten)]
    pub config: ConfigArgs,
}

impl SweepArgs {
    pub fn losses(&self) -> Vec<LossKind> {
        if self.loss.is_empty() {
            LossKind::ALL.to_vec()
        } else {
            self.loss.clone()
        }
    }

    pub fn epsilons(&self) -> Vec<f64> {
        let mut eps = self.clip_eps.clone();
        if self.include_noclip && !eps.contains(&f64::INFINITY) {
            eps.push(f64::INFINITY);
        }
        eps
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint file (a run's `final` or `checkpoints/step_<N>`).
    pub checkpoint: PathBuf,
    /// Environment to evaluate in (default: from the run's config.snapshot).
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also report the uniform-random baseline on the same episode seeds.
    #[arg(long)]
    pub baseline: bool,
}
