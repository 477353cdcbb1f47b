//! PPO objectives for compound actions.
//!
//! Four policy losses are implemented, all built from the clipped surrogate
//! `min(r·Â, clip(r, 1-ε, 1+ε)·Â)`:
//!
//! * [`LossKind::Compound`]: one ratio for the whole action, the product of
//!   the sub-action probability ratios.
//! * [`LossKind::SubAction`]: one clipped surrogate per sub-action ratio,
//!   aggregated over sub-actions.
//! * [`LossKind::MixRatio`]: a single surrogate of `w·r1 + (1-w)·r2`.
//! * [`LossKind::MixLoss`]: `w·L_compound + (1-w)·L_sub`.
//!
//! Gradients follow the piecewise form of the surrogate: a term whose ratio
//! sits in a clipped branch (`r ≤ 1-ε` with `Â < 0`, or `r ≥ 1+ε` with
//! `Â > 0`) contributes exactly zero. Clip telemetry counts the samples and
//! sub-action entries that still receive gradient.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::nn::Matrix;

/// Log-ratios are clamped to this magnitude before exponentiation.
pub const LOG_RATIO_LIMIT: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Compound,
    SubAction,
    MixRatio,
    MixLoss,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [
        LossKind::Compound,
        LossKind::SubAction,
        LossKind::MixRatio,
        LossKind::MixLoss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Compound => "compound",
            LossKind::SubAction => "sub-action",
            LossKind::MixRatio => "mix-ratio",
            LossKind::MixLoss => "mix-loss",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown loss `{s}`; expected one of compound, sub-action, mix-ratio, mix-loss"
                ))
            })
    }
}

/// Loss choice plus the mixing weight used by the two mixed variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossVariant {
    pub kind: LossKind,
    pub w: f64,
}

impl LossVariant {
    pub const DEFAULT_W: f64 = 0.5;

    pub fn new(kind: LossKind, w: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::InvalidArgument(format!("mixing weight w = {w} not in [0, 1]")));
        }
        Ok(Self { kind, w })
    }

    pub fn of(kind: LossKind) -> Self {
        Self {
            kind,
            w: Self::DEFAULT_W,
        }
    }
}

/// How per-sub-action surrogates are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubAggregation {
    #[default]
    Mean,
    Sum,
}

/// How the sub-action ratios enter the mixed ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixReduction {
    /// `w·r1 + (1-w)·mean_i r2_i`, one surrogate per sample.
    #[default]
    MeanRatio,
    /// `w·r1 + (1-w)·r2_i` per sub-action, aggregated like the sub-action loss.
    PerSubAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyLossConfig {
    pub variant: LossVariant,
    /// Clip range ε; `f64::INFINITY` disables clipping.
    pub eps: f64,
    pub sub_agg: SubAggregation,
    pub mix_reduction: MixReduction,
}

impl PolicyLossConfig {
    pub fn new(variant: LossVariant, eps: f64) -> Self {
        Self {
            variant,
            eps,
            sub_agg: SubAggregation::Mean,
            mix_reduction: MixReduction::MeanRatio,
        }
    }
}

/// Counts of samples and sub-action entries that still carry gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClipStats {
    pub total_samples: u64,
    pub unclipped_samples: u64,
    pub total_sub_entries: u64,
    pub unclipped_sub_entries: u64,
}

impl ClipStats {
    pub fn merge(&mut self, other: &ClipStats) {
        self.total_samples += other.total_samples;
        self.unclipped_samples += other.unclipped_samples;
        self.total_sub_entries += other.total_sub_entries;
        self.unclipped_sub_entries += other.unclipped_sub_entries;
    }

    pub fn unclipped_sample_fraction(&self) -> f64 {
        ratio(self.unclipped_samples, self.total_samples)
    }

    pub fn unclipped_entry_fraction(&self) -> f64 {
        ratio(self.unclipped_sub_entries, self.total_sub_entries)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-batch means of the parts of the PPO objective.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub policy_objective: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total_objective: f64,
    pub clip_stats: ClipStats,
}

/// True when the surrogate sits in one of its zero-gradient branches.
pub fn is_clipped(r: f64, adv: f64, eps: f64) -> bool {
    (r <= 1.0 - eps && adv < 0.0) || (r >= 1.0 + eps && adv > 0.0)
}

/// Value of `min(r·Â, clip(r, 1-ε, 1+ε)·Â)`.
pub fn clipped_surrogate(r: f64, adv: f64, eps: f64) -> f64 {
    let clipped = r.clamp(1.0 - eps, 1.0 + eps);
    f64::min(r * adv, clipped * adv)
}

/// Surrogate value together with its derivative with respect to `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateTerm {
    pub value: f64,
    pub grad_ratio: f64,
    pub clipped: bool,
}

pub fn surrogate_term(r: f64, adv: f64, eps: f64) -> SurrogateTerm {
    let clipped = is_clipped(r, adv, eps);
    SurrogateTerm {
        value: clipped_surrogate(r, adv, eps),
        grad_ratio: if clipped { 0.0 } else { adv },
        clipped,
    }
}

/// `exp(log_ratio)` with the log-ratio clamped, plus `d ratio / d log_ratio`.
fn ratio_from_log(log_ratio: f64) -> Result<(f64, f64)> {
    if !log_ratio.is_finite() {
        return Err(Error::NonFinite {
            context: "log-probability ratio",
            detail: log_ratio.to_string(),
        });
    }
    let r = log_ratio.clamp(-LOG_RATIO_LIMIT, LOG_RATIO_LIMIT).exp();
    let dr = if log_ratio.abs() <= LOG_RATIO_LIMIT { r } else { 0.0 };
    Ok((r, dr))
}

fn check_pair(new_logps: &[f64], old_logps: &[f64]) -> Result<()> {
    check_len("ratio log-probs", new_logps.len(), old_logps.len())?;
    if new_logps.is_empty() {
        return Err(Error::InvalidArgument("ratio needs at least one sub-action".into()));
    }
    Ok(())
}

/// Joint ratio `Π π_new^i / Π π_old^i`, evaluated in log space.
pub fn compound_ratio(new_logps: &[f64], old_logps: &[f64]) -> Result<f64> {
    check_pair(new_logps, old_logps)?;
    let log_ratio: f64 = new_logps.iter().sum::<f64>() - old_logps.iter().sum::<f64>();
    ratio_from_log(log_ratio)
        .map(|(r, _)| r)
        .map_err(|_| Error::NonFinite {
            context: "compound ratio",
            detail: format!("new {new_logps:?} old {old_logps:?}"),
        })
}

/// Per-sub-action ratios `π_new^i / π_old^i`.
pub fn sub_action_ratios(new_logps: &[f64], old_logps: &[f64]) -> Result<Vec<f64>> {
    check_pair(new_logps, old_logps)?;
    new_logps
        .iter()
        .zip(old_logps)
        .map(|(n, o)| {
            ratio_from_log(n - o).map(|(r, _)| r).map_err(|_| Error::NonFinite {
                context: "sub-action ratio",
                detail: format!("new {n} old {o}"),
            })
        })
        .collect()
}

/// Counts unclipped entries of a `samples × sub-actions` ratio matrix.
/// A sample counts as unclipped when any of its entries is.
pub fn count_unclipped(ratios: &Matrix, advs: &[f64], eps: f64) -> Result<ClipStats> {
    check_len("count_unclipped", ratios.rows(), advs.len())?;
    let mut stats = ClipStats::default();
    for (b, &adv) in advs.iter().enumerate() {
        let open = ratios
            .row(b)
            .iter()
            .filter(|&&r| !is_clipped(r, adv, eps))
            .count() as u64;
        stats.total_samples += 1;
        stats.total_sub_entries += ratios.cols() as u64;
        stats.unclipped_sub_entries += open;
        if open > 0 {
            stats.unclipped_samples += 1;
        }
    }
    Ok(stats)
}

/// Result of [`policy_loss`].
#[derive(Debug, Clone)]
pub struct PolicyLoss {
    /// Batch mean of the per-sample clipped objective.
    pub objective: f64,
    pub clip_stats: ClipStats,
    /// `∂ objective / ∂ new_logps`, same shape as the input.
    pub grad_new_logps: Matrix,
    /// Joint ratio per sample.
    pub compound_ratios: Vec<f64>,
    /// Per-sub-action ratios.
    pub sub_ratios: Matrix,
}

/// Batch-mean clipped policy objective of the chosen variant and its gradient.
pub fn policy_loss(
    cfg: &PolicyLossConfig,
    new_logps: &Matrix,
    old_logps: &Matrix,
    advantages: &[f64],
) -> Result<PolicyLoss> {
    let batch = new_logps.rows();
    let n = new_logps.cols();
    if batch == 0 {
        return Err(Error::InvalidArgument("policy loss on an empty batch".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("policy loss needs at least one sub-action".into()));
    }
    check_len("policy_loss old_logps rows", batch, old_logps.rows())?;
    check_len("policy_loss old_logps cols", n, old_logps.cols())?;
    check_len("policy_loss advantages", batch, advantages.len())?;
    if !(cfg.eps > 0.0) {
        return Err(Error::InvalidArgument(format!("clip eps must be > 0, got {}", cfg.eps)));
    }
    let w = cfg.variant.w;
    let eps = cfg.eps;
    let agg = match cfg.sub_agg {
        SubAggregation::Mean => 1.0 / n as f64,
        SubAggregation::Sum => 1.0,
    };

    let mut objective = 0.0;
    let mut stats = ClipStats::default();
    let mut grad = Matrix::zeros(batch, n);
    let mut compound_ratios = Vec::with_capacity(batch);
    let mut sub_ratios = Matrix::zeros(batch, n);
    let mut r2 = vec![0.0; n];
    let mut dr2 = vec![0.0; n];
    let mut open = vec![false; n];

    for b in 0..batch {
        let adv = advantages[b];
        let new = new_logps.row(b);
        let old = old_logps.row(b);
        let mut log_r1 = 0.0;
        for i in 0..n {
            let d = new[i] - old[i];
            log_r1 += d;
            let (r, dr) = ratio_from_log(d)?;
            r2[i] = r;
            dr2[i] = dr;
        }
        let (r1, dr1) = ratio_from_log(log_r1)?;
        compound_ratios.push(r1);
        sub_ratios.row_mut(b).copy_from_slice(&r2);
        let g = grad.row_mut(b);

        let value = match cfg.variant.kind {
            LossKind::Compound => {
                let t = surrogate_term(r1, adv, eps);
                g.iter_mut().for_each(|x| *x = t.grad_ratio * dr1);
                open.iter_mut().for_each(|o| *o = !t.clipped);
                t.value
            }
            LossKind::SubAction => {
                let mut v = 0.0;
                for i in 0..n {
                    let t = surrogate_term(r2[i], adv, eps);
                    v += t.value;
                    g[i] = agg * t.grad_ratio * dr2[i];
                    open[i] = !t.clipped;
                }
                agg * v
            }
            LossKind::MixRatio => match cfg.mix_reduction {
                MixReduction::MeanRatio => {
                    let mean_r2 = r2.iter().sum::<f64>() / n as f64;
                    let t = surrogate_term(w * r1 + (1.0 - w) * mean_r2, adv, eps);
                    for i in 0..n {
                        g[i] = t.grad_ratio * (w * dr1 + (1.0 - w) * dr2[i] / n as f64);
                    }
                    open.iter_mut().for_each(|o| *o = !t.clipped);
                    t.value
                }
                MixReduction::PerSubAction => {
                    let mut v = 0.0;
                    let mut through_joint = 0.0;
                    for i in 0..n {
                        let t = surrogate_term(w * r1 + (1.0 - w) * r2[i], adv, eps);
                        v += t.value;
                        through_joint += t.grad_ratio;
                        g[i] = agg * t.grad_ratio * (1.0 - w) * dr2[i];
                        open[i] = !t.clipped;
                    }
                    g.iter_mut().for_each(|x| *x += agg * through_joint * w * dr1);
                    agg * v
                }
            },
            LossKind::MixLoss => {
                let joint = surrogate_term(r1, adv, eps);
                let mut sub = 0.0;
                for i in 0..n {
                    let t = surrogate_term(r2[i], adv, eps);
                    sub += t.value;
                    g[i] = w * joint.grad_ratio * dr1 + (1.0 - w) * agg * t.grad_ratio * dr2[i];
                    open[i] = !joint.clipped || !t.clipped;
                }
                w * joint.value + (1.0 - w) * agg * sub
            }
        };
        objective += value;

        let open_count = open.iter().filter(|&&o| o).count() as u64;
        stats.total_samples += 1;
        stats.total_sub_entries += n as u64;
        stats.unclipped_sub_entries += open_count;
        if open_count > 0 {
            stats.unclipped_samples += 1;
        }
    }

    let inv = 1.0 / batch as f64;
    grad.as_mut_slice().iter_mut().for_each(|x| *x *= inv);
    Ok(PolicyLoss {
        objective: objective * inv,
        clip_stats: stats,
        grad_new_logps: grad,
        compound_ratios,
        sub_ratios,
    })
}

/// Batch mean of `(V_pred - V_target)^2`.
pub fn value_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    Ok(value_loss_and_grad(pred, target, None)?.0)
}

/// Value loss and its gradient with respect to the predictions.
///
/// With `clip = Some((old_values, range))` the PPO clipped form is used:
/// `max((V - T)^2, (V_old + clip(V - V_old, -range, range) - T)^2)`.
pub fn value_loss_and_grad(
    pred: &[f64],
    target: &[f64],
    clip: Option<(&[f64], f64)>,
) -> Result<(f64, Vec<f64>)> {
    check_len("value_loss", pred.len(), target.len())?;
    if pred.is_empty() {
        return Err(Error::InvalidArgument("value loss on an empty batch".into()));
    }
    if let Some((old, _)) = clip {
        check_len("value_loss old values", pred.len(), old.len())?;
    }
    let inv = 1.0 / pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (i, (&v, &t)) in pred.iter().zip(target).enumerate() {
        let plain = (v - t) * (v - t);
        match clip {
            None => {
                loss += plain;
                grad.push(2.0 * (v - t) * inv);
            }
            Some((old, range)) => {
                let delta = v - old[i];
                let vc = old[i] + delta.clamp(-range, range);
                let clipped = (vc - t) * (vc - t);
                if plain >= clipped {
                    loss += plain;
                    grad.push(2.0 * (v - t) * inv);
                } else {
                    loss += clipped;
                    let inside = delta.abs() < range;
                    grad.push(if inside { 2.0 * (vc - t) * inv } else { 0.0 });
                }
            }
        }
    }
    Ok((loss * inv, grad))
}

/// `J = L_clip - c1·L_value + c2·S`. Training minimizes `-J`.
pub fn total_objective(policy_objective: f64, value_loss: f64, entropy: f64, c1: f64, c2: f64) -> f64 {
    policy_objective - c1 * value_loss + c2 * entropy
}
