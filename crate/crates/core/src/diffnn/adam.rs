use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::DiffError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }

    fn validate(&self) -> Result<(), DiffError> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(DiffError::InvalidOptimizer(format!("{self:?}")))
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

/// Adam with the bias correction folded into the step size:
///
/// `p -= lr * sqrt(1 - b2^t) / (1 - b1^t) * m / (sqrt(v) + eps)`
///
/// so epsilon acts on the uncorrected second moment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    config: AdamConfig,
    step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl Adam {
    /// Moments are shaped after `params`.
    pub fn new(config: AdamConfig, params: &[&Tensor]) -> Result<Self, DiffError> {
        config.validate()?;
        Ok(Self {
            config,
            step_count: 0,
            first_moment: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            second_moment: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second_moment
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<(), DiffError> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(DiffError::ShapeMismatch {
                op: "adam",
                left: vec![self.first_moment.len()],
                right: vec![params.len(), grads.len()],
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first_moment) {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(DiffError::ShapeMismatch {
                    op: "adam",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(DiffError::NonFinite("adam gradient"));
            }
        }

        self.step_count += 1;
        let AdamConfig { lr, beta1, beta2, epsilon } = self.config;
        let t = self.step_count as i32;
        let step_size = lr * (1.0 - beta2.powi(t)).sqrt() / (1.0 - beta1.powi(t));

        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            for (((pv, &gv), mv), vv) in p.values_mut().iter_mut().zip(g.values()).zip(m).zip(v) {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                *pv -= step_size * *mv / (vv.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params_and_decays_moments() {
        let mut p = Tensor::matrix(1, 2, vec![1.0, -2.0]).unwrap();
        let mut adam = Adam::new(AdamConfig::with_lr(0.1), &[&p]).unwrap();
        adam.step(&mut [&mut p], &[&Tensor::matrix(1, 2, vec![0.5, 0.5]).unwrap()]).unwrap();
        let after_one = p.clone();
        let m1 = adam.first_moment()[0].clone();
        adam.step(&mut [&mut p], &[&Tensor::zeros(vec![1, 2])]).unwrap();
        // the first moment still carries the previous gradient, so params move;
        // from a fresh state zero gradients must not move anything
        assert!(adam.first_moment()[0].iter().zip(&m1).all(|(a, b)| a.abs() < b.abs()));
        let mut q = after_one.clone();
        let mut fresh = Adam::new(AdamConfig::with_lr(0.1), &[&q]).unwrap();
        fresh.step(&mut [&mut q], &[&Tensor::zeros(vec![1, 2])]).unwrap();
        assert_eq!(q, after_one);
        assert_eq!(fresh.step_count(), 1);
    }

    #[test]
    fn first_step_is_signed_lr() {
        let g = 0.37;
        let mut p = Tensor::scalar(0.0);
        let mut adam = Adam::new(AdamConfig::with_lr(0.1), &[&p]).unwrap();
        adam.step(&mut [&mut p], &[&Tensor::scalar(g)]).unwrap();
        let eps_hat = 1e-7 / (1.0f64 - 0.999).sqrt();
        let expected = -0.1 * g / (g + eps_hat);
        assert!((p.item().unwrap() - expected).abs() < 1e-15);
        assert!((p.item().unwrap() + 0.1).abs() < 1e-5);
    }

    #[test]
    fn nan_gradient_rejected() {
        let mut p = Tensor::scalar(1.0);
        let mut adam = Adam::new(AdamConfig::default(), &[&p]).unwrap();
        assert!(adam.step(&mut [&mut p], &[&Tensor::scalar(f64::NAN)]).is_err());
        assert_eq!(p.item(), Some(1.0));
        assert_eq!(adam.step_count(), 0);
    }

    #[test]
    fn invalid_config_rejected() {
        let p = Tensor::scalar(0.0);
        let bad = AdamConfig { beta1: 1.0, ..AdamConfig::default() };
        assert!(Adam::new(bad, &[&p]).is_err());
        let bad = AdamConfig { epsilon: 0.0, ..AdamConfig::default() };
        assert!(Adam::new(bad, &[&p]).is_err());
    }
}
