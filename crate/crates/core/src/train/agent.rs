//! Actor-critic pair: a policy MLP producing distribution heads, a value MLP
//! and (for continuous actions) a state-independent log-std vector.

use rand::Rng;

use crate::dist::{ActionKind, ActionSpaceSpec, CompoundAction, CompoundDistribution};
use crate::env::EnvSpec;
use crate::error::{check_len, Error, Result};
use crate::loss::{policy_loss, total_objective, value_loss_and_grad, LossBreakdown, PolicyLossConfig};
use crate::nn::{Matrix, MlpNet, ParamVector, Segment};
use crate::rollout::RunningNorm;

const POLICY_OUTPUT_GAIN: f64 = 0.01;
const VALUE_OUTPUT_GAIN: f64 = 1.0;
const LOG_STD: &str = "log_std";
const NORM_COUNT: &str = "obs_norm.count";
const NORM_MEAN: &str = "obs_norm.mean";
const NORM_VAR: &str = "obs_norm.var";

/// Coefficients of the full objective `J = L - c1·VL + c2·S`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub policy: PolicyLossConfig,
    pub c1: f64,
    pub c2: f64,
    /// PPO value clipping range, if enabled.
    pub value_clip: Option<f64>,
}

/// Training rows drawn from a rollout batch.
#[derive(Debug, Clone, Copy)]
pub struct MinibatchRef<'a> {
    pub states: &'a Matrix,
    pub actions: &'a [CompoundAction],
    pub old_logps: &'a Matrix,
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
    pub old_values: &'a [f64],
}

/// Output of [`Agent::act_batch`].
#[derive(Debug, Clone)]
pub struct Acted {
    pub actions: Vec<CompoundAction>,
    pub logps: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    action_space: ActionSpaceSpec,
    policy: MlpNet,
    value: MlpNet,
    log_std: Vec<f64>,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(spec: &EnvSpec, hidden: usize, log_std_init: f64, rng: &mut R) -> Result<Self> {
        let space = spec.action_space.clone();
        let policy = MlpNet::init(
            vec![spec.obs_dim, hidden, hidden, space.head_size()],
            POLICY_OUTPUT_GAIN,
            rng,
        )?;
        let value = MlpNet::init(vec![spec.obs_dim, hidden, hidden, 1], VALUE_OUTPUT_GAIN, rng)?;
        Ok(Self {
            log_std: vec![log_std_init; space.log_std_size()],
            action_space: space,
            policy,
            value,
        })
    }

    pub fn action_space(&self) -> &ActionSpaceSpec {
        &self.action_space
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.input_size()
    }

    pub fn policy(&self) -> &MlpNet {
        &self.policy
    }

    pub fn value_net(&self) -> &MlpNet {
        &self.value
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    /// Trainable parameters as segments `pi.*`, `v.*` and (continuous only) `log_std`.
    pub fn params(&self) -> ParamVector {
        let mut layout = Vec::new();
        let mut values = Vec::new();
        for (prefix, net) in [("pi", &self.policy), ("v", &self.value)] {
            for seg in net.params().layout() {
                layout.push(Segment::new(format!("{prefix}.{}", seg.name), seg.shape.clone()));
            }
            values.extend_from_slice(net.params().values());
        }
        if !self.log_std.is_empty() {
            layout.push(Segment::new(LOG_STD, vec![self.log_std.len()]));
            values.extend_from_slice(&self.log_std);
        }
        ParamVector::from_values(layout, values).expect("layout built from live networks")
    }

    /// Overwrites all trainable parameters from a flat vector in [`Agent::params`] order.
    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        let np = self.policy.params().len();
        let nv = self.value.params().len();
        check_len("Agent::set_params", np + nv + self.log_std.len(), values.len())?;
        self.policy.set_values(&values[..np])?;
        self.value.set_values(&values[np..np + nv])?;
        self.log_std.copy_from_slice(&values[np + nv..]);
        Ok(())
    }

    /// Parameters plus, optionally, observation-normalization statistics.
    pub fn checkpoint(&self, obs_norm: Option<&RunningNorm>) -> Result<ParamVector> {
        let params = self.params();
        let Some(norm) = obs_norm else { return Ok(params) };
        let mut layout = params.layout().to_vec();
        let mut values = params.into_values();
        let d = norm.dim();
        layout.push(Segment::new(NORM_COUNT, vec![1]));
        layout.push(Segment::new(NORM_MEAN, vec![d]));
        layout.push(Segment::new(NORM_VAR, vec![d]));
        values.push(norm.count);
        values.extend_from_slice(&norm.mean);
        values.extend_from_slice(&norm.var);
        ParamVector::from_values(layout, values)
    }

    /// Rebuilds an agent from a checkpoint, checking it against `spec`.
    pub fn from_checkpoint(checkpoint: &ParamVector, spec: &EnvSpec) -> Result<(Self, Option<RunningNorm>)> {
        let mismatch = |msg: String| Error::SpecMismatch(msg);
        let policy = MlpNet::from_params(checkpoint.extract("pi")?)?;
        let value = MlpNet::from_params(checkpoint.extract("v")?)?;
        let space = spec.action_space.clone();
        if policy.input_size() != spec.obs_dim || value.input_size() != spec.obs_dim {
            return Err(mismatch(format!(
                "networks take {} inputs, environment `{}` produces {}",
                policy.input_size(),
                spec.name,
                spec.obs_dim
            )));
        }
        if policy.output_size() != space.head_size() || value.output_size() != 1 {
            return Err(mismatch(format!(
                "policy head has {} outputs, environment `{}` needs {}",
                policy.output_size(),
                spec.name,
                space.head_size()
            )));
        }
        let log_std = checkpoint.segment(LOG_STD).map(<[f64]>::to_vec).unwrap_or_default();
        if log_std.len() != space.log_std_size() {
            return Err(mismatch(format!(
                "checkpoint has {} log-std entries, environment `{}` needs {}",
                log_std.len(),
                spec.name,
                space.log_std_size()
            )));
        }
        let norm = match (
            checkpoint.segment(NORM_COUNT),
            checkpoint.segment(NORM_MEAN),
            checkpoint.segment(NORM_VAR),
        ) {
            (Some(c), Some(m), Some(v)) if m.len() == spec.obs_dim && v.len() == spec.obs_dim => Some(RunningNorm {
                count: c[0],
                mean: m.to_vec(),
                var: v.to_vec(),
            }),
            (None, None, None) => None,
            _ => return Err(Error::Checkpoint("incomplete observation statistics".into())),
        };
        Ok((
            Self {
                action_space: space,
                policy,
                value,
                log_std,
            },
            norm,
        ))
    }

    pub fn distribution(&self, head: &[f64]) -> Result<CompoundDistribution> {
        CompoundDistribution::from_head(&self.action_space, head, &self.log_std)
    }

    /// Samples one action per row (or takes the mode when `rng` is `None`).
    pub fn act_batch<R: Rng + ?Sized>(&self, states: &Matrix, mut rng: Option<&mut R>) -> Result<Acted> {
        let heads = self.policy.forward_batch(states)?;
        let values = self.value.forward_batch(states)?;
        let mut out = Acted {
            actions: Vec::with_capacity(states.rows()),
            logps: Vec::with_capacity(states.rows()),
            values: values.output().as_slice().to_vec(),
        };
        for b in 0..states.rows() {
            let dist = self.distribution(heads.output().row(b))?;
            let action = match rng.as_deref_mut() {
                Some(r) => dist.sample(r),
                None => dist.mode(),
            };
            out.logps.push(dist.log_probs(&action)?);
            out.actions.push(action);
        }
        Ok(out)
    }

    pub fn values(&self, states: &Matrix) -> Result<Vec<f64>> {
        Ok(self.value.forward_batch(states)?.output().as_slice().to_vec())
    }

    /// Evaluates `J` on a minibatch and returns its parts together with the
    /// gradient of `-J` in [`Agent::params`] layout.
    pub fn loss_and_grad(&self, obj: &ObjectiveConfig, mb: MinibatchRef<'_>) -> Result<(LossBreakdown, ParamVector)> {
        let batch = mb.states.rows();
        check_len("minibatch actions", batch, mb.actions.len())?;
        check_len("minibatch returns", batch, mb.returns.len())?;
        check_len("minibatch old values", batch, mb.old_values.len())?;
        let n_sub = self.action_space.num_sub_actions();

        let pcache = self.policy.forward_batch(mb.states)?;
        let mut dists = Vec::with_capacity(batch);
        let mut new_logps = Matrix::zeros(batch, n_sub);
        let mut entropy = 0.0;
        for b in 0..batch {
            let dist = self.distribution(pcache.output().row(b))?;
            new_logps.row_mut(b).copy_from_slice(&dist.log_probs(&mb.actions[b])?);
            entropy += dist.entropy().total;
            dists.push(dist);
        }
        let inv = 1.0 / batch as f64;
        entropy *= inv;
        let pl = policy_loss(&obj.policy, &new_logps, mb.old_logps, mb.advantages)?;

        let vcache = self.value.forward_batch(mb.states)?;
        let clip = obj.value_clip.map(|range| (mb.old_values, range));
        let (vloss, vgrad) = value_loss_and_grad(vcache.output().as_slice(), mb.returns, clip)?;

        // upstream gradients of -J
        let mut head_grad = Matrix::zeros(batch, self.action_space.head_size());
        let mut log_std_grad = vec![0.0; self.log_std.len()];
        let mut coeffs = vec![0.0; n_sub];
        for (b, dist) in dists.iter().enumerate() {
            for (c, g) in coeffs.iter_mut().zip(pl.grad_new_logps.row(b)) {
                *c = -g;
            }
            let row = head_grad.row_mut(b);
            dist.accumulate_log_prob_grad(&mb.actions[b], &coeffs, row, &mut log_std_grad)?;
            dist.accumulate_entropy_grad(-obj.c2 * inv, row, &mut log_std_grad);
        }
        let gpi = self.policy.backward_batch(&pcache, &head_grad)?;
        let value_up = Matrix::from_vec(batch, 1, vgrad.iter().map(|g| obj.c1 * g).collect())?;
        let gv = self.value.backward_batch(&vcache, &value_up)?;

        let mut grad = Vec::with_capacity(gpi.len() + gv.len() + log_std_grad.len());
        grad.extend_from_slice(gpi.values());
        grad.extend_from_slice(gv.values());
        grad.extend_from_slice(&log_std_grad);
        let grad = ParamVector::from_values(self.params().layout().to_vec(), grad)?;

        let breakdown = LossBreakdown {
            policy_objective: pl.objective,
            value_loss: vloss,
            entropy,
            total_objective: total_objective(pl.objective, vloss, entropy, obj.c1, obj.c2),
            clip_stats: pl.clip_stats,
        };
        Ok((breakdown, grad))
    }

    pub fn is_continuous(&self) -> bool {
        self.action_space.kind == ActionKind::Continuous
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::loss::{LossKind, LossVariant};
    use crate::nn::gradcheck::{grad_check, FD_STEP};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(name: &str) -> EnvSpec {
        EnvConfig::by_name(name).unwrap().spec().unwrap()
    }

    #[test]
    fn params_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for name in ["gridharvest", "chainreach"] {
            let s = spec(name);
            let a = Agent::new(&s, 8, -0.5, &mut rng).unwrap();
            let mut b = Agent::new(&s, 8, 0.0, &mut rng).unwrap();
            b.set_params(a.params().values()).unwrap();
            assert_eq!(a, b);
            let norm = RunningNorm::with_prior(s.obs_dim);
            let (c, n) = Agent::from_checkpoint(&a.checkpoint(Some(&norm)).unwrap(), &s).unwrap();
            assert_eq!(c, a);
            assert_eq!(n, Some(norm));
        }
    }

    #[test]
    fn checkpoint_for_other_env_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = Agent::new(&spec("gridharvest"), 8, 0.0, &mut rng).unwrap();
        let err = Agent::from_checkpoint(&a.params(), &spec("chainreach")).unwrap_err();
        assert!(matches!(err, Error::SpecMismatch(_)));
    }

    #[test]
    fn small_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = spec("chainreach");
        let agent = Agent::new(&s, 6, -0.3, &mut rng).unwrap();
        let states = Matrix::from_vec(4, 12, (0..48).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let acted = agent.act_batch(&states, Some(&mut rng)).unwrap();
        let old: Vec<f64> = acted.logps.iter().flatten().map(|l| l + 0.01).collect();
        let old = Matrix::from_vec(4, 6, old).unwrap();
        let adv = [0.5, -1.0, 0.3, 1.2];
        let ret = [0.1, 0.2, -0.3, 0.0];
        let obj = ObjectiveConfig {
            policy: PolicyLossConfig::new(LossVariant::of(LossKind::MixLoss), f64::INFINITY),
            c1: 0.5,
            c2: 0.01,
            value_clip: None,
        };
        let mb = MinibatchRef {
            states: &states,
            actions: &acted.actions,
            old_logps: &old,
            advantages: &adv,
            returns: &ret,
            old_values: &acted.values,
        };
        let err = grad_check(
            |p| {
                let mut a = agent.clone();
                a.set_params(p).unwrap();
                let (l, g) = a.loss_and_grad(&obj, mb).unwrap();
                (-l.total_objective, g.into_values())
            },
            agent.params().values(),
        )
        .unwrap();
        assert!(err < 1e-5, "relative error {err} (step {FD_STEP})");
    }
}
