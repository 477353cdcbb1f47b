//! Compound action distributions.
//!
//! A compound action is a tuple of sub-actions, each drawn independently from
//! its own head given the same state. Discrete heads are categorical over a
//! slice of the policy output (logits); continuous heads are diagonal
//! Gaussians whose means come from the policy output and whose log standard
//! deviations are free parameters shared across states.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Discrete,
    Continuous,
}

/// Shape of a compound action space.
///
/// For discrete spaces `sub_action_dims` holds the class count of each
/// sub-action; for continuous spaces every entry is 1 (one scalar per
/// sub-action).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpaceSpec {
    pub kind: ActionKind,
    pub sub_action_dims: Vec<usize>,
}

impl ActionSpaceSpec {
    pub fn discrete(class_counts: Vec<usize>) -> Result<Self> {
        let spec = Self {
            kind: ActionKind::Discrete,
            sub_action_dims: class_counts,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn continuous(dims: usize) -> Result<Self> {
        let spec = Self {
            kind: ActionKind::Continuous,
            sub_action_dims: vec![1; dims],
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sub_action_dims.is_empty() {
            return Err(Error::InvalidArgument("action space needs at least one sub-action".into()));
        }
        match self.kind {
            ActionKind::Discrete if self.sub_action_dims.contains(&0) => Err(Error::InvalidArgument(
                "every discrete sub-action needs at least one class".into(),
            )),
            ActionKind::Continuous if self.sub_action_dims.iter().any(|&d| d != 1) => Err(
                Error::InvalidArgument("continuous sub-actions are scalars".into()),
            ),
            _ => Ok(()),
        }
    }

    pub fn num_sub_actions(&self) -> usize {
        self.sub_action_dims.len()
    }

    /// Number of policy-network outputs consumed by the heads.
    pub fn head_size(&self) -> usize {
        self.sub_action_dims.iter().sum()
    }

    /// Number of free log-std parameters (zero for discrete spaces).
    pub fn log_std_size(&self) -> usize {
        match self.kind {
            ActionKind::Discrete => 0,
            ActionKind::Continuous => self.num_sub_actions(),
        }
    }

    pub fn check_action(&self, action: &CompoundAction) -> Result<()> {
        match (self.kind, action) {
            (ActionKind::Discrete, CompoundAction::Discrete(idx)) => {
                check_len("discrete action", self.num_sub_actions(), idx.len())?;
                for (i, (&a, &n)) in idx.iter().zip(&self.sub_action_dims).enumerate() {
                    if a >= n {
                        return Err(Error::InvalidAction(format!(
                            "sub-action {i}: class {a} out of range 0..{n}"
                        )));
                    }
                }
                Ok(())
            }
            (ActionKind::Continuous, CompoundAction::Continuous(x)) => {
                check_len("continuous action", self.num_sub_actions(), x.len())?;
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidAction("non-finite continuous action".into()));
                }
                Ok(())
            }
            _ => Err(Error::InvalidAction("action kind does not match action space".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CompoundAction {
    Discrete(Vec<usize>),
    Continuous(Vec<f64>),
}

impl CompoundAction {
    pub fn len(&self) -> usize {
        match self {
            CompoundAction::Discrete(v) => v.len(),
            CompoundAction::Continuous(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sub-actions as reals (class indices become their integer value).
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            CompoundAction::Discrete(v) => v.iter().map(|&a| a as f64).collect(),
            CompoundAction::Continuous(v) => v.clone(),
        }
    }
}

/// Per-sub-action entropies and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct Entropy {
    pub per_sub: Vec<f64>,
    pub total: f64,
}

/// Distribution over compound actions for one state.
#[derive(Debug, Clone, PartialEq)]
pub enum CompoundDistribution {
    /// One log-softmax row per sub-action.
    Categorical { log_probs: Vec<Vec<f64>> },
    Gaussian { mean: Vec<f64>, log_std: Vec<f64> },
}

fn effective_log_std(s: f64) -> f64 {
    s.clamp(LOG_STD_MIN, LOG_STD_MAX)
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

impl CompoundDistribution {
    /// Builds the distribution from the policy network's output row.
    pub fn from_head(spec: &ActionSpaceSpec, head: &[f64], log_std: &[f64]) -> Result<Self> {
        check_len("CompoundDistribution head", spec.head_size(), head.len())?;
        check_len("CompoundDistribution log_std", spec.log_std_size(), log_std.len())?;
        if let Some(v) = head.iter().chain(log_std).find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "distribution parameters",
                detail: v.to_string(),
            });
        }
        Ok(match spec.kind {
            ActionKind::Discrete => {
                let mut offset = 0;
                let log_probs = spec
                    .sub_action_dims
                    .iter()
                    .map(|&n| {
                        let row = log_softmax(&head[offset..offset + n]);
                        offset += n;
                        row
                    })
                    .collect();
                CompoundDistribution::Categorical { log_probs }
            }
            ActionKind::Continuous => CompoundDistribution::Gaussian {
                mean: head.to_vec(),
                log_std: log_std.to_vec(),
            },
        })
    }

    pub fn num_sub_actions(&self) -> usize {
        match self {
            CompoundDistribution::Categorical { log_probs } => log_probs.len(),
            CompoundDistribution::Gaussian { mean, .. } => mean.len(),
        }
    }

    /// Probabilities of each class of each categorical head.
    pub fn probabilities(&self) -> Option<Vec<Vec<f64>>> {
        match self {
            CompoundDistribution::Categorical { log_probs } => Some(
                log_probs
                    .iter()
                    .map(|row| row.iter().map(|l| l.exp()).collect())
                    .collect(),
            ),
            CompoundDistribution::Gaussian { .. } => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CompoundAction {
        match self {
            CompoundDistribution::Categorical { log_probs } => CompoundAction::Discrete(
                log_probs
                    .iter()
                    .map(|row| {
                        let u: f64 = rng.random();
                        let mut acc = 0.0;
                        for (k, l) in row.iter().enumerate() {
                            acc += l.exp();
                            if u < acc {
                                return k;
                            }
                        }
                        // rounding left the cumulative sum just below 1
                        row.iter()
                            .enumerate()
                            .rev()
                            .find(|(_, l)| l.exp() > 0.0)
                            .map_or(row.len() - 1, |(k, _)| k)
                    })
                    .collect(),
            ),
            CompoundDistribution::Gaussian { mean, log_std } => CompoundAction::Continuous(
                mean.iter()
                    .zip(log_std)
                    .map(|(m, s)| {
                        let z: f64 = rng.sample(StandardNormal);
                        m + effective_log_std(*s).exp() * z
                    })
                    .collect(),
            ),
        }
    }

    /// Most likely action: argmax class per head, or the Gaussian mean.
    pub fn mode(&self) -> CompoundAction {
        match self {
            CompoundDistribution::Categorical { log_probs } => CompoundAction::Discrete(
                log_probs
                    .iter()
                    .map(|row| {
                        let mut best = 0;
                        for (k, &l) in row.iter().enumerate() {
                            if l > row[best] {
                                best = k;
                            }
                        }
                        best
                    })
                    .collect(),
            ),
            CompoundDistribution::Gaussian { mean, .. } => CompoundAction::Continuous(mean.clone()),
        }
    }

    pub fn log_probs(&self, action: &CompoundAction) -> Result<Vec<f64>> {
        check_len("log_probs action", self.num_sub_actions(), action.len())?;
        match (self, action) {
            (CompoundDistribution::Categorical { log_probs }, CompoundAction::Discrete(idx)) => log_probs
                .iter()
                .zip(idx)
                .enumerate()
                .map(|(i, (row, &a))| {
                    row.get(a).copied().ok_or_else(|| {
                        Error::InvalidAction(format!("sub-action {i}: class {a} out of range 0..{}", row.len()))
                    })
                })
                .collect(),
            (CompoundDistribution::Gaussian { mean, log_std }, CompoundAction::Continuous(x)) => Ok(mean
                .iter()
                .zip(log_std)
                .zip(x)
                .map(|((m, s), a)| {
                    let s = effective_log_std(*s);
                    let z = (a - m) / s.exp();
                    -0.5 * z * z - s - HALF_LN_2PI
                })
                .collect()),
            _ => Err(Error::InvalidAction("action kind does not match distribution".into())),
        }
    }

    pub fn entropy(&self) -> Entropy {
        let per_sub: Vec<f64> = match self {
            CompoundDistribution::Categorical { log_probs } => log_probs
                .iter()
                .map(|row| {
                    -row.iter()
                        .map(|&l| {
                            let p = l.exp();
                            if p > 0.0 {
                                p * l
                            } else {
                                0.0
                            }
                        })
                        .sum::<f64>()
                })
                .collect(),
            CompoundDistribution::Gaussian { log_std, .. } => log_std
                .iter()
                .map(|s| 0.5 + HALF_LN_2PI + effective_log_std(*s))
                .collect(),
        };
        let total = per_sub.iter().sum();
        Entropy { per_sub, total }
    }

    /// Accumulates `Σ_i coeffs[i] · ∂ log π_i(a_i) / ∂θ` into the head-output
    /// gradient and the log-std gradient.
    pub fn accumulate_log_prob_grad(
        &self,
        action: &CompoundAction,
        coeffs: &[f64],
        head_grad: &mut [f64],
        log_std_grad: &mut [f64],
    ) -> Result<()> {
        check_len("log-prob grad coeffs", self.num_sub_actions(), coeffs.len())?;
        match (self, action) {
            (CompoundDistribution::Categorical { log_probs }, CompoundAction::Discrete(idx)) => {
                let mut offset = 0;
                for ((row, &a), &c) in log_probs.iter().zip(idx).zip(coeffs) {
                    if c != 0.0 {
                        for (k, &l) in row.iter().enumerate() {
                            let indicator = if k == a { 1.0 } else { 0.0 };
                            head_grad[offset + k] += c * (indicator - l.exp());
                        }
                    }
                    offset += row.len();
                }
                Ok(())
            }
            (CompoundDistribution::Gaussian { mean, log_std }, CompoundAction::Continuous(x)) => {
                for i in 0..mean.len() {
                    let c = coeffs[i];
                    if c == 0.0 {
                        continue;
                    }
                    let s = effective_log_std(log_std[i]);
                    let var = (2.0 * s).exp();
                    let diff = x[i] - mean[i];
                    head_grad[i] += c * diff / var;
                    if (LOG_STD_MIN..=LOG_STD_MAX).contains(&log_std[i]) {
                        log_std_grad[i] += c * (diff * diff / var - 1.0);
                    }
                }
                Ok(())
            }
            _ => Err(Error::InvalidAction("action kind does not match distribution".into())),
        }
    }

    /// Accumulates `coeff · ∂ H_total / ∂θ`.
    pub fn accumulate_entropy_grad(&self, coeff: f64, head_grad: &mut [f64], log_std_grad: &mut [f64]) {
        if coeff == 0.0 {
            return;
        }
        match self {
            CompoundDistribution::Categorical { log_probs } => {
                let mut offset = 0;
                for row in log_probs {
                    let h: f64 = -row.iter().map(|&l| l.exp() * l).sum::<f64>();
                    for (k, &l) in row.iter().enumerate() {
                        let p = l.exp();
                        // dH/dz_k = -p_k (log p_k + H)
                        head_grad[offset + k] += coeff * (-p * (l + h));
                    }
                    offset += row.len();
                }
            }
            CompoundDistribution::Gaussian { log_std, .. } => {
                for (g, s) in log_std_grad.iter_mut().zip(log_std) {
                    if (LOG_STD_MIN..=LOG_STD_MAX).contains(s) {
                        *g += coeff;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{numeric_partial, relative_error, FD_STEP};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn discrete(counts: Vec<usize>, head: &[f64]) -> CompoundDistribution {
        let spec = ActionSpaceSpec::discrete(counts).unwrap();
        CompoundDistribution::from_head(&spec, head, &[]).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(ActionSpaceSpec::discrete(vec![]).is_err());
        assert!(ActionSpaceSpec::discrete(vec![3, 0]).is_err());
        assert!(ActionSpaceSpec::continuous(0).is_err());
        let spec = ActionSpaceSpec::discrete(vec![5, 3]).unwrap();
        assert_eq!(spec.head_size(), 8);
        assert!(spec.check_action(&CompoundAction::Discrete(vec![4, 2])).is_ok());
        assert!(spec.check_action(&CompoundAction::Discrete(vec![5, 0])).is_err());
        assert!(spec.check_action(&CompoundAction::Continuous(vec![0.0, 0.0])).is_err());
    }

    #[test]
    fn degenerate_softmax_samples_dominant_class() {
        let d = discrete(vec![3], &[1e9, 0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            assert_eq!(d.sample(&mut rng), CompoundAction::Discrete(vec![0]));
        }
    }

    #[test]
    fn tiny_std_samples_at_mean() {
        let spec = ActionSpaceSpec::continuous(2).unwrap();
        let d = CompoundDistribution::from_head(&spec, &[0.0, 0.0], &[-20.0, -20.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let CompoundAction::Continuous(x) = d.sample(&mut rng) else { unreachable!() };
            assert!(x.iter().all(|v| v.abs() < 1e-6));
        }
    }

    #[test]
    fn monte_carlo_frequencies_of_fair_head() {
        let d = discrete(vec![2], &[0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| d.sample(&mut rng) == CompoundAction::Discrete(vec![1]))
            .count();
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.01, "{freq}");
    }

    #[test]
    fn log_prob_examples() {
        let d = discrete(vec![4], &[0.3; 4]);
        for a in 0..4 {
            let lp = d.log_probs(&CompoundAction::Discrete(vec![a])).unwrap();
            assert!((lp[0] - (0.25f64).ln()).abs() < 1e-12);
            assert!((lp[0] + 1.386_294_361).abs() < 1e-9);
        }
        let spec = ActionSpaceSpec::continuous(1).unwrap();
        let g = CompoundDistribution::from_head(&spec, &[0.0], &[0.0]).unwrap();
        let lp = g.log_probs(&CompoundAction::Continuous(vec![0.0])).unwrap();
        assert!((lp[0] + 0.918_938_533).abs() < 1e-9);
        assert!(d.log_probs(&CompoundAction::Discrete(vec![4])).is_err());
    }

    #[test]
    fn entropy_examples() {
        let h = discrete(vec![2], &[0.0, 0.0]).entropy();
        assert!((h.total - 2f64.ln()).abs() < 1e-12);
        let one_hot = discrete(vec![3], &[0.0, -1e9, -1e9]).entropy();
        assert!(one_hot.total.abs() < 1e-12);
        let spec = ActionSpaceSpec::continuous(3).unwrap();
        let g = CompoundDistribution::from_head(&spec, &[0.1, 0.2, 0.3], &[0.0; 3]).unwrap();
        let e = g.entropy();
        for v in &e.per_sub {
            assert!((v - 1.418_938_533).abs() < 1e-9);
        }
        assert!((e.total - e.per_sub.iter().sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn probabilities_sum_to_one_and_joint_is_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = ActionSpaceSpec::discrete(vec![5, 3, 4]).unwrap();
        for _ in 0..50 {
            let head: Vec<f64> = (0..spec.head_size()).map(|_| rng.random_range(-5.0..5.0)).collect();
            let d = CompoundDistribution::from_head(&spec, &head, &[]).unwrap();
            for row in d.probabilities().unwrap() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            let action = d.sample(&mut rng);
            let lp = d.log_probs(&action).unwrap();
            let CompoundAction::Discrete(idx) = &action else { unreachable!() };
            let probs = d.probabilities().unwrap();
            let product: f64 = idx.iter().zip(&probs).map(|(&a, row)| row[a]).product();
            assert!((lp.iter().sum::<f64>().exp() - product).abs() < 1e-12);
            let e = d.entropy();
            assert!((e.total - e.per_sub.iter().sum::<f64>()).abs() < 1e-12);
            for (h, &n) in e.per_sub.iter().zip(&spec.sub_action_dims) {
                assert!(*h >= 0.0 && *h <= (n as f64).ln() + 1e-12);
            }
        }
    }

    #[test]
    fn log_prob_and_entropy_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        // discrete
        let spec = ActionSpaceSpec::discrete(vec![4, 3]).unwrap();
        let head: Vec<f64> = (0..7).map(|_| rng.random_range(-2.0..2.0)).collect();
        let action = CompoundAction::Discrete(vec![2, 0]);
        let coeffs = [0.7, -1.3];
        let ent_coeff = 0.4;
        let objective = |p: &[f64]| {
            let d = CompoundDistribution::from_head(&spec, p, &[]).unwrap();
            let lp = d.log_probs(&action).unwrap();
            lp[0] * coeffs[0] + lp[1] * coeffs[1] + ent_coeff * d.entropy().total
        };
        let d = CompoundDistribution::from_head(&spec, &head, &[]).unwrap();
        let mut g = vec![0.0; 7];
        d.accumulate_log_prob_grad(&action, &coeffs, &mut g, &mut []).unwrap();
        d.accumulate_entropy_grad(ent_coeff, &mut g, &mut []);
        let mut f = objective;
        for i in 0..7 {
            let n = numeric_partial(&mut f, &head, i, FD_STEP).unwrap();
            assert!(relative_error(g[i], n) < 1e-4, "coord {i}: {} vs {n}", g[i]);
        }

        // continuous: parameters are means then log-stds
        let spec = ActionSpaceSpec::continuous(3).unwrap();
        let params: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let action = CompoundAction::Continuous(vec![0.3, -0.7, 1.1]);
        let coeffs = [1.0, 0.5, -2.0];
        let objective = |p: &[f64]| {
            let d = CompoundDistribution::from_head(&spec, &p[..3], &p[3..]).unwrap();
            let lp = d.log_probs(&action).unwrap();
            lp.iter().zip(&coeffs).map(|(l, c)| l * c).sum::<f64>() + ent_coeff * d.entropy().total
        };
        let d = CompoundDistribution::from_head(&spec, &params[..3], &params[3..]).unwrap();
        let (mut gh, mut gs) = (vec![0.0; 3], vec![0.0; 3]);
        d.accumulate_log_prob_grad(&action, &coeffs, &mut gh, &mut gs).unwrap();
        d.accumulate_entropy_grad(ent_coeff, &mut gh, &mut gs);
        let analytic: Vec<f64> = gh.into_iter().chain(gs).collect();
        let mut f = objective;
        for i in 0..6 {
            let n = numeric_partial(&mut f, &params, i, FD_STEP).unwrap();
            assert!(relative_error(analytic[i], n) < 1e-4, "coord {i}: {} vs {n}", analytic[i]);
        }
    }

    #[test]
    fn clamped_log_std_has_no_gradient() {
        let spec = ActionSpaceSpec::continuous(1).unwrap();
        let d = CompoundDistribution::from_head(&spec, &[0.0], &[5.0]).unwrap();
        let (mut gh, mut gs) = (vec![0.0], vec![0.0]);
        d.accumulate_log_prob_grad(&CompoundAction::Continuous(vec![0.5]), &[1.0], &mut gh, &mut gs)
            .unwrap();
        d.accumulate_entropy_grad(1.0, &mut gh, &mut gs);
        assert_eq!(gs[0], 0.0);
        assert!((d.entropy().total - (0.5 + HALF_LN_2PI + LOG_STD_MAX)).abs() < 1e-12);
    }

    #[test]
    fn mode_is_argmax_or_mean() {
        let d = discrete(vec![3, 2], &[0.1, 2.0, -1.0, 0.5, 0.4]);
        assert_eq!(d.mode(), CompoundAction::Discrete(vec![1, 0]));
    }
}
