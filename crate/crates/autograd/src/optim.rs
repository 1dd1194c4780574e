use serde::{Deserialize, Serialize};

use crate::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamMoments {
    pub m: Tensor,
    pub v: Tensor,
}

/// Adam over a fixed, ordered list of parameter tensors.
///
/// Slots are created lazily the first time a parameter receives a gradient,
/// so parameters that are never updated carry no optimizer state.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    slots: Vec<Option<AdamMoments>>,
}

impl Adam {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        Self {
            config,
            step: 0,
            slots: vec![None; n_params],
        }
    }

    pub fn from_state(config: AdamConfig, step: u64, slots: Vec<Option<AdamMoments>>) -> Self {
        Self {
            config,
            step,
            slots,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn slots(&self) -> &[Option<AdamMoments>] {
        &self.slots
    }

    /// Applies one update. `grads[i] == None` leaves parameter `i` (and its
    /// moments) untouched.
    pub fn update(&mut self, params: &mut [Tensor], grads: &[Option<Tensor>]) {
        assert_eq!(params.len(), self.slots.len());
        assert_eq!(grads.len(), self.slots.len());
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), slot) in params.iter_mut().zip(grads).zip(&mut self.slots) {
            let Some(g) = g else { continue };
            let mom = slot.get_or_insert_with(|| AdamMoments {
                m: Tensor::zeros(g.rows(), g.cols()),
                v: Tensor::zeros(g.rows(), g.cols()),
            });
            let iter = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(mom.m.data_mut().iter_mut().zip(mom.v.data_mut()));
            for ((w, gi), (m, v)) in iter {
                *m = beta1 * *m + (1.0 - beta1) * gi;
                *v = beta2 * *v + (1.0 - beta2) * gi * gi;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Option<Tensor>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flatten()
        .map(|g| g.sum_sq())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let f = max_norm / norm;
        for g in grads.iter_mut().flatten() {
            g.scale_in_place(f);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut adam = Adam::new(
            AdamConfig {
                lr: 0.1,
                ..Default::default()
            },
            2,
        );
        let mut params = vec![Tensor::scalar(1.0), Tensor::scalar(5.0)];
        adam.update(&mut params, &[Some(Tensor::scalar(3.0)), None]);
        assert!((params[0].item() - 0.9).abs() < 1e-6);
        assert_eq!(params[1].item(), 5.0);
        assert!(adam.slots()[1].is_none());
    }

    #[test]
    fn minimises_quadratic() {
        let mut adam = Adam::new(
            AdamConfig {
                lr: 0.05,
                ..Default::default()
            },
            1,
        );
        let mut p = vec![Tensor::scalar(3.0)];
        for _ in 0..2000 {
            let g = Tensor::scalar(2.0 * (p[0].item() - 1.0));
            adam.update(&mut p, &[Some(g)]);
        }
        assert!((p[0].item() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn clipping() {
        let mut g = vec![Some(Tensor::row_vector(vec![3.0, 4.0])), None];
        let n = clip_global_norm(&mut g, 1.0);
        assert_eq!(n, 5.0);
        let clipped = g[0].as_ref().unwrap();
        assert!((clipped.sum_sq().sqrt() - 1.0).abs() < 1e-12);
        let mut small = vec![Some(Tensor::scalar(0.5))];
        assert_eq!(clip_global_norm(&mut small, 1.0), 0.5);
        assert_eq!(small[0].as_ref().unwrap().item(), 0.5);
    }
}
