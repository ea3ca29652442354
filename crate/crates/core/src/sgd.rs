//! Stochastic gradient descent with heavy-ball momentum and L2 weight decay.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// One update of a single tensor:
/// `v ← momentum·v + grad + weight_decay·param`, then `param ← param − lr·v`.
pub fn sgd_update(param: &mut [f64], grad: &[f64], velocity: &mut [f64], cfg: &SgdConfig) {
    for ((p, &g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = cfg.momentum * *v + g + cfg.weight_decay * *p;
        *p -= cfg.learning_rate * *v;
    }
}

/// Applies [`sgd_update`] across matched collections of parameters, gradients and velocities.
pub fn sgd_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    velocity: &mut [Tensor],
    cfg: &SgdConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::Dimension {
            op: "sgd_step",
            lhs: vec![params.len()],
            rhs: vec![grads.len(), velocity.len()],
        });
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(Error::Dimension {
                op: "sgd_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        sgd_update(p.data_mut(), g.data(), v.data_mut(), cfg);
    }
    Ok(())
}

/// Momentum SGD over a fixed, ordered parameter list whose gradients live in
/// each tensor's gradient slot.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub cfg: SgdConfig,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(cfg: SgdConfig) -> Self {
        Self {
            cfg,
            velocity: Vec::new(),
        }
    }

    pub fn velocity_mut(&mut self, index: usize) -> Option<&mut [f64]> {
        self.velocity.get_mut(index).map(Vec::as_mut_slice)
    }

    /// Updates every parameter that has a gradient. The parameter list must
    /// keep the same order and shapes across calls.
    pub fn step(&mut self, params: Vec<&mut Tensor>) -> Result<()> {
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        if self.velocity.len() != params.len() {
            return Err(Error::Dimension {
                op: "sgd_step",
                lhs: vec![params.len()],
                rhs: vec![self.velocity.len()],
            });
        }
        for (p, v) in params.into_iter().zip(&mut self.velocity) {
            if p.len() != v.len() {
                return Err(Error::Dimension {
                    op: "sgd_step",
                    lhs: p.shape().to_vec(),
                    rhs: vec![v.len()],
                });
            }
            if let (data, Some(g)) = p.data_mut_and_grad() {
                sgd_update(data, g, v, &self.cfg);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor {
        Tensor::from_vec(&[1], vec![v]).unwrap()
    }

    #[test]
    fn zero_grad_leaves_params() {
        let mut p = vec![Tensor::from_vec(&[2], vec![1.0, -3.0]).unwrap()];
        let g = vec![Tensor::zeros(&[2])];
        let mut v = vec![Tensor::zeros(&[2])];
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
        };
        sgd_step(&mut p, &g, &mut v, &cfg).unwrap();
        assert_eq!(p[0].data(), &[1.0, -3.0]);
    }

    #[test]
    fn single_plain_step() {
        let mut p = vec![scalar(1.0)];
        let mut v = vec![scalar(0.0)];
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
        };
        sgd_step(&mut p, &[scalar(0.5)], &mut v, &cfg).unwrap();
        assert_eq!(p[0].data()[0], 0.95);
    }

    #[test]
    fn two_momentum_steps_match_unrolled_recurrence() {
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 0.01,
        };
        let mut p = vec![scalar(2.0)];
        let mut v = vec![scalar(0.0)];
        sgd_step(&mut p, &[scalar(0.5)], &mut v, &cfg).unwrap();
        sgd_step(&mut p, &[scalar(-0.25)], &mut v, &cfg).unwrap();

        // v1 = 0.5 + 0.02 = 0.52, p1 = 2 - 0.052 = 1.948
        // v2 = 0.9·0.52 - 0.25 + 0.01·1.948 = 0.23748, p2 = 1.948 - 0.023748
        let v1 = 0.5 + 0.01 * 2.0;
        let p1 = 2.0 - 0.1 * v1;
        let v2 = 0.9 * v1 - 0.25 + 0.01 * p1;
        let p2 = p1 - 0.1 * v2;
        assert!((p[0].data()[0] - p2).abs() < 1e-15);
        assert!((v[0].data()[0] - v2).abs() < 1e-15);
        assert!((p2 - 1.924252).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = vec![Tensor::zeros(&[2])];
        let mut v = vec![Tensor::zeros(&[2])];
        assert!(sgd_step(&mut p, &[Tensor::zeros(&[3])], &mut v, &SgdConfig::default()).is_err());
        assert!(sgd_step(&mut p, &[], &mut v, &SgdConfig::default()).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = SgdConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.learning_rate = 0.0;
        assert!(cfg.validate().is_err());
        cfg.learning_rate = 0.1;
        cfg.momentum = 1.0;
        assert!(cfg.validate().is_err());
    }
}
