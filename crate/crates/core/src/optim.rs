//! Adam with decoupled weight decay and a linear warmup-then-linear-decay
//! learning-rate schedule.

use crate::error::{OmniBindError, Result};
use crate::tensor::Tensor;

/// Learning-rate schedule: ramp linearly from 0 to `base_lr` over
/// `warmup_steps`, then decay linearly to 0 at `total_steps`.
#[derive(Clone, Debug)]
pub struct WarmupLinearSchedule {
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl WarmupLinearSchedule {
    pub fn lr_at(&self, step: u64) -> f64 {
        if self.warmup_steps > 0 && step < self.warmup_steps {
            return self.base_lr * step as f64 / self.warmup_steps as f64;
        }
        if self.total_steps <= self.warmup_steps {
            return self.base_lr;
        }
        let remaining = self.total_steps.saturating_sub(step) as f64;
        let span = (self.total_steps - self.warmup_steps) as f64;
        self.base_lr * (remaining / span).clamp(0.0, 1.0)
    }
}

/// Per-parameter first/second moment estimates plus the step counter and
/// schedule. One instance drives one parameter group.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub schedule: WarmupLinearSchedule,
    step: u64,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
}

impl AdamW {
    /// Defaults: β₁ = 0.9, β₂ = 0.999, ε = 1e-8, weight decay 0.01.
    pub fn new(params: &[&Tensor], schedule: WarmupLinearSchedule) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
            schedule,
            step: 0,
            first_moment: params
                .iter()
                .map(|p| Tensor::zeros(p.rows(), p.cols()))
                .collect(),
            second_moment: params
                .iter()
                .map(|p| Tensor::zeros(p.rows(), p.cols()))
                .collect(),
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Effective learning rate the next `step` call will use.
    pub fn next_lr(&self) -> f64 {
        self.schedule.lr_at(self.step)
    }

    /// One update. `grads[i]` may be `None` when no gradient reached the
    /// parameter this step; its moments still decay.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Option<&Tensor>]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(OmniBindError::DimensionMismatch {
                what: "optimizer parameter group",
                expected: self.first_moment.len(),
                got: params.len(),
            });
        }
        let lr = self.schedule.lr_at(self.step);
        self.step += 1;
        let bias1 = 1.0 - self.beta1.powi(self.step as i32);
        let bias2 = 1.0 - self.beta2.powi(self.step as i32);

        for (i, param) in params.iter_mut().enumerate() {
            if param.shape() != self.first_moment[i].shape() {
                return Err(OmniBindError::ShapeMismatch {
                    op: "optimizer_step",
                    left: param.shape(),
                    right: self.first_moment[i].shape(),
                });
            }
            if let Some(g) = grads[i] {
                if g.shape() != param.shape() {
                    return Err(OmniBindError::ShapeMismatch {
                        op: "optimizer_step gradient",
                        left: param.shape(),
                        right: g.shape(),
                    });
                }
            }
            let m = self.first_moment[i].as_mut_slice();
            let v = self.second_moment[i].as_mut_slice();
            let zero = 0.0;
            for (k, p) in param.as_mut_slice().iter_mut().enumerate() {
                let g = grads[i].map_or(zero, |g| g.as_slice()[k]);
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                let m_hat = m[k] / bias1;
                let v_hat = v[k] / bias2;
                // Decoupled weight decay: applied to the parameter directly,
                // not through the moments.
                *p -= lr * (m_hat / (v_hat.sqrt() + self.epsilon) + self.weight_decay * *p);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schedule(lr: f64) -> WarmupLinearSchedule {
        WarmupLinearSchedule {
            base_lr: lr,
            warmup_steps: 0,
            total_steps: 0,
        }
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged_without_decay() {
        let mut p = Tensor::row_vector(&[1.5, -2.0]);
        let g = Tensor::zeros(1, 2);
        let mut opt = AdamW::new(&[&p], schedule(0.1)).with_weight_decay(0.0);
        let before = p.clone();
        opt.step(&mut [&mut p], &[Some(&g)]).unwrap();
        opt.step(&mut [&mut p], &[Some(&g)]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_matches_hand_evaluation() {
        // Scalar parameter, g = 1, lr = 0.1: bias-corrected m̂ = v̂ = 1, so the
        // update is -0.1 / (1 + ε).
        let mut p = Tensor::row_vector(&[0.0]);
        let g = Tensor::row_vector(&[1.0]);
        let mut opt = AdamW::new(&[&p], schedule(0.1)).with_weight_decay(0.0);
        opt.step(&mut [&mut p], &[Some(&g)]).unwrap();
        let want = -0.1 / (1.0 + 1e-8);
        assert!((p.get(0, 0) - want).abs() < 1e-15);
        assert!((p.get(0, 0) + 0.1).abs() < 1e-8);
    }

    #[test]
    fn runs_are_bitwise_deterministic() {
        let run = || {
            let mut p = Tensor::row_vector(&[0.3, -0.7, 2.0]);
            let mut opt = AdamW::new(
                &[&p],
                WarmupLinearSchedule {
                    base_lr: 0.05,
                    warmup_steps: 3,
                    total_steps: 10,
                },
            );
            for s in 0..10u64 {
                let g = Tensor::row_vector(&[0.1 * s as f64, -0.2, 0.05]);
                opt.step(&mut [&mut p], &[Some(&g)]).unwrap();
            }
            p
        };
        let a = run();
        let b = run();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn schedule_ramps_then_decays() {
        let s = WarmupLinearSchedule {
            base_lr: 1.0,
            warmup_steps: 10,
            total_steps: 110,
        };
        assert_eq!(s.lr_at(0), 0.0);
        assert!((s.lr_at(5) - 0.5).abs() < 1e-12);
        assert!((s.lr_at(10) - 1.0).abs() < 1e-12);
        assert!((s.lr_at(60) - 0.5).abs() < 1e-12);
        assert_eq!(s.lr_at(110), 0.0);
        assert_eq!(s.lr_at(200), 0.0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Tensor::row_vector(&[1.0, 2.0]);
        let g = Tensor::row_vector(&[1.0]);
        let mut opt = AdamW::new(&[&p], schedule(0.1));
        assert!(matches!(
            opt.step(&mut [&mut p], &[Some(&g)]),
            Err(OmniBindError::ShapeMismatch { .. })
        ));
    }
}
