use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        AdamState {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if grads.len() != params.len() || grads.len() != self.first_moment.len() {
            return Err(Error::shape(format!(
                "adam step: {} params, {} grads, state for {}",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::numeric("gradient passed to optimizer", None));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::numeric("parameter after optimizer step", None));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut state = AdamState::new(3, 0.001);
        let mut p = vec![1.0, -2.0, 0.5];
        state.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let mut state = AdamState::new(4, 0.001);
        let g = [3.0, -0.25, 1e-3, -40.0];
        let mut p = vec![0.0; 4];
        state.step(&mut p, &g).unwrap();
        for (pi, gi) in p.iter().zip(g) {
            let expected = -0.001 * gi / (gi.abs() + 1e-8);
            assert!((pi - expected).abs() < 1e-15, "{pi} vs {expected}");
            assert!((pi.abs() - 0.001).abs() < 1e-7);
        }
    }

    #[test]
    fn identical_steps_are_deterministic() {
        let g = [0.2, -0.7];
        let run = || {
            let mut s = AdamState::new(2, 0.01);
            let mut p = vec![1.0, 1.0];
            s.step(&mut p, &g).unwrap();
            s.step(&mut p, &g).unwrap();
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_bad_gradients() {
        let mut s = AdamState::new(2, 0.01);
        let mut p = vec![0.0; 2];
        assert!(s.step(&mut p, &[f64::NAN, 0.0]).is_err());
        assert!(s.step(&mut p, &[0.0]).is_err());
    }
}
