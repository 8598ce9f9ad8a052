//! Gradient clipping and the Adam optimizer.

use serde::{Deserialize, Serialize};

use super::tensor::TensorData;
use super::{NumError, Scalar};

/// Euclidean norm over all gradient tensors jointly, accumulated in f64.
pub fn global_norm<S: Scalar>(grads: &[&TensorData<S>]) -> f64 {
    let mut total = 0.0;
    for g in grads {
        for &v in g.data() {
            let v = v.to_f64();
            total += v * v;
        }
    }
    total.sqrt()
}

/// Scales all gradients by `max_norm / norm` when the joint norm exceeds
/// `max_norm`; returns the pre-clip norm.
pub fn clip_global_norm<S: Scalar>(grads: &mut [&mut TensorData<S>], max_norm: f64) -> f64 {
    let views: Vec<&TensorData<S>> = grads.iter().map(|g| &**g).collect();
    let norm = global_norm(&views);
    if norm > max_norm && norm > 0.0 {
        let scale = S::from_f64(max_norm / norm);
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are allocated lazily on the
/// first step and keyed by slot order, so callers must pass parameters in a
/// stable order every step.
pub struct Adam<S: Scalar> {
    cfg: AdamConfig,
    t: u64,
    m: Vec<TensorData<S>>,
    v: Vec<TensorData<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn config(&self) -> AdamConfig {
        self.cfg
    }

    /// Number of completed steps.
    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(
        &mut self,
        params: &mut [&mut TensorData<S>],
        grads: &[&TensorData<S>],
    ) -> Result<(), NumError> {
        if params.len() != grads.len() {
            return Err(NumError::InvalidArg {
                op: "adam",
                message: format!("{} params but {} gradients", params.len(), grads.len()),
            });
        }
        if self.m.is_empty() {
            self.m = params
                .iter()
                .map(|p| TensorData::zeros(p.shape().to_vec()))
                .collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len() {
            return Err(NumError::InvalidArg {
                op: "adam",
                message: format!(
                    "optimizer tracks {} slots but was given {}",
                    self.m.len(),
                    params.len()
                ),
            });
        }
        self.t += 1;
        let b1 = S::from_f64(self.cfg.beta1);
        let b2 = S::from_f64(self.cfg.beta2);
        let one = S::ONE;
        let corr1 = S::from_f64(1.0 - self.cfg.beta1.powi(self.t as i32));
        let corr2 = S::from_f64(1.0 - self.cfg.beta2.powi(self.t as i32));
        let lr = S::from_f64(self.cfg.lr);
        let eps = S::from_f64(self.cfg.eps);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(NumError::ShapeMismatch {
                    op: "adam",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                let m_hat = *mv / corr1;
                let v_hat = *vv / corr2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn global_norm_matches_hand_value() {
        let a = TensorData::vector(vec![3.0f64]);
        let b = TensorData::vector(vec![4.0f64]);
        assert!((global_norm(&[&a, &b]) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn clip_rescales_only_when_above_threshold() {
        let mut a = TensorData::vector(vec![3.0f64]);
        let mut b = TensorData::vector(vec![4.0f64]);
        let norm = clip_global_norm(&mut [&mut a, &mut b], 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        assert!((a.data()[0] - 0.6).abs() < 1e-12);
        assert!((b.data()[0] - 0.8).abs() < 1e-12);

        let mut c = TensorData::vector(vec![0.3f64]);
        let before = c.data()[0];
        clip_global_norm(&mut [&mut c], 1.0);
        assert_eq!(c.data()[0], before);
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        // With bias correction the very first update is lr·g/(|g|+ε), i.e.
        // almost exactly lr in magnitude regardless of gradient scale.
        let mut p = TensorData::vector(vec![1.0f64]);
        let g = TensorData::vector(vec![0.5f64]);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut p], &[&g]).unwrap();
        assert!((p.data()[0] - (1.0 - 0.001)).abs() < 1e-6);
    }

    #[test]
    fn adam_descends_a_quadratic() {
        // Minimize (x - 3)² starting at 0; gradient is 2(x - 3).
        let mut p = TensorData::vector(vec![0.0f64]);
        let mut adam = Adam::new(AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        });
        for _ in 0..200 {
            let g = TensorData::vector(vec![2.0 * (p.data()[0] - 3.0)]);
            adam.step(&mut [&mut p], &[&g]).unwrap();
        }
        assert!((p.data()[0] - 3.0).abs() < 0.2, "got {}", p.data()[0]);
    }

    #[test]
    fn mismatched_slot_counts_are_rejected() {
        let mut p = TensorData::vector(vec![0.0f64]);
        let g = TensorData::vector(vec![1.0f64]);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut p], &[&g]).unwrap();
        let err = adam.step(&mut [], &[]);
        assert!(matches!(err, Err(NumError::InvalidArg { .. })));
    }
}
