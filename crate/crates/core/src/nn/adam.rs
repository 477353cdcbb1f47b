use serde::{Deserialize, Serialize};

use super::params::ParamVector;
use crate::error::{check_len, Error, Result};

/// Adam optimizer state. Updates minimize the loss whose gradient is supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Applies one update in place. A gradient with NaN or infinite
    /// entries is rejected and leaves both state and parameters untouched.
    pub fn step(&mut self, params: &mut ParamVector, grad: &ParamVector) -> Result<()> {
        check_len("AdamState::step params", self.m.len(), params.len())?;
        check_len("AdamState::step grad", self.m.len(), grad.len())?;
        if let Some((name, idx, value)) = grad.first_non_finite() {
            return Err(Error::NonFinite {
                context: "gradient",
                detail: format!("{name}[{idx}] = {value}"),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for (((p, &g), m), v) in params
            .values_mut()
            .iter_mut()
            .zip(grad.values())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Segment;

    fn vector(values: Vec<f64>) -> ParamVector {
        ParamVector::from_values(vec![Segment::new("p", vec![values.len()])], values).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = AdamState::new(3, 1e-3);
        let mut p = vector(vec![1.0, -2.0, 3.0]);
        let g = vector(vec![0.0; 3]);
        for _ in 0..10 {
            adam.step(&mut p, &g).unwrap();
        }
        assert_eq!(p.values(), &[1.0, -2.0, 3.0]);
        assert_eq!(adam.step_count(), 10);
    }

    #[test]
    fn moves_against_gradient() {
        let mut adam = AdamState::new(2, 0.1);
        let mut p = vector(vec![0.0, 0.0]);
        adam.step(&mut p, &vector(vec![2.0, -0.5])).unwrap();
        assert!(p.values()[0] < 0.0 && p.values()[1] > 0.0);
    }

    #[test]
    fn constant_gradient_step_approaches_lr() {
        // Direct iteration: with a constant gradient the bias-corrected ratio
        // m_hat / sqrt(v_hat) is exactly g/|g|, so each step has size lr / (1 + eps/|g|).
        let lr = 1e-3;
        let mut adam = AdamState::new(2, lr);
        let mut p = vector(vec![0.0, 0.0]);
        let g = vector(vec![0.3, -4.0]);
        let mut last = p.values().to_vec();
        for _ in 0..500 {
            adam.step(&mut p, &g).unwrap();
            let now = p.values().to_vec();
            for (a, b) in now.iter().zip(&last) {
                assert!(((a - b).abs() - lr).abs() < 1e-9);
            }
            last = now;
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut adam = AdamState::new(2, 1e-3);
        let mut p = vector(vec![1.0, 1.0]);
        let before = adam.clone();
        let err = adam.step(&mut p, &vector(vec![f64::NAN, 0.0]));
        assert!(err.is_err());
        assert_eq!(adam, before);
        assert_eq!(p.values(), &[1.0, 1.0]);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut adam = AdamState::new(2, 1e-2);
            let mut p = vector(vec![0.5, 0.5]);
            for i in 0..20 {
                adam.step(&mut p, &vector(vec![i as f64 * 0.1, -0.2])).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn length_mismatch() {
        let mut adam = AdamState::new(2, 1e-3);
        let mut p = vector(vec![0.0; 3]);
        assert!(adam.step(&mut p, &vector(vec![0.0; 3])).is_err());
    }
}
