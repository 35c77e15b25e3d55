use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Adam with bias correction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: vec![0.0; num_params],
            second: vec![0.0; num_params],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. Parameters are untouched if any gradient
    /// is non-finite.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::Shape(format!(
                "adam state holds {} moments, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::nan(format!("gradient entry {i} is {}", grads[i])));
        }
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - self.beta1.powf(t);
        let c2 = 1.0 - self.beta2.powf(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
        debug_assert!(params.iter().all(|p| p.is_finite()));
        Ok(())
    }
}

/// Rescales `grads` so its global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut adam = AdamState::new(3, 1e-3);
        let mut p = vec![1.0, -2.0, 3.5];
        for _ in 0..10 {
            adam.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
        assert_eq!(adam.step_count(), 10);
    }

    #[test]
    fn constant_gradient_moves_by_lr_times_sign() {
        let mut adam = AdamState::new(2, 1e-3);
        let mut p = vec![0.0, 0.0];
        let mut last = p.clone();
        for _ in 0..2000 {
            last.clone_from(&p);
            adam.step(&mut p, &[0.3, -5.0]).unwrap();
        }
        assert!(((p[0] - last[0]) + 1e-3).abs() < 1e-6);
        assert!(((p[1] - last[1]) - 1e-3).abs() < 1e-6);
    }

    #[test]
    fn minimizes_a_two_dimensional_quadratic() {
        // f(x, y) = 3 (x - 1)^2 + (y + 2)^2 + x y
        // grad = (6(x-1) + y, 2(y+2) + x); optimum solves 6x + y = 6, x + 2y = -4.
        let opt = [16.0 / 11.0, -30.0 / 11.0];
        let mut adam = AdamState::new(2, 0.05);
        let mut p = vec![4.0, 3.0];
        for _ in 0..500 {
            let g = [6.0 * (p[0] - 1.0) + p[1], 2.0 * (p[1] + 2.0) + p[0]];
            adam.step(&mut p, &g).unwrap();
        }
        let dist = ((p[0] - opt[0]).powi(2) + (p[1] - opt[1]).powi(2)).sqrt();
        assert!(dist < 1e-3, "distance {dist}");
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut adam = AdamState::new(2, 1e-3);
        let mut p = vec![1.0, 1.0];
        let err = adam.step(&mut p, &[f64::NAN, 0.0]).unwrap_err();
        assert!(err.to_string().starts_with("nan-gradient"));
        assert_eq!(p, vec![1.0, 1.0]);
    }

    #[test]
    fn clipping_below_threshold_is_identity_and_above_rescales() {
        let mut g = vec![0.3, 0.4];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 0.5);
        assert_eq!(g, vec![0.3, 0.4]);
        let mut g = vec![6.0, 8.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 10.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn clipped_norm_never_exceeds_max(
            g in proptest::collection::vec(-1e6f64..1e6, 1..64),
            max in 1e-3f64..100.0,
        ) {
            let mut clipped = g.clone();
            clip_grad_norm(&mut clipped, max);
            let norm = clipped.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(norm <= max + 1e-12);
            // direction preserved
            let scale = clipped[0] / g[0];
            if g[0] != 0.0 {
                for (a, b) in clipped.iter().zip(&g) {
                    prop_assert!((a - b * scale).abs() <= 1e-9 * b.abs().max(1.0));
                }
            }
        }
    }
}
