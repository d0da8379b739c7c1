use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bias-corrected Adam accumulators for a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// One Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(Error::Dimension(format!(
            "adam: {} params, {} grads, {} accumulators",
            params.len(),
            grads.len(),
            state.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_hand_trace() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let mut p = [1.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[0.5], &mut s, 0.01).unwrap();
        let expected = 1.0 - 0.01 * 0.5 / (0.5 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((p[0] - 0.99).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_no_update() {
        let mut p = [0.3, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, 5.0).unwrap();
        assert_eq!(p, [0.3, -2.0]);
    }

    #[test]
    fn sign_flip_flips_update() {
        let mut a = [0.0, 0.0];
        let mut b = [0.0, 0.0];
        let (mut sa, mut sb) = (AdamState::new(2), AdamState::new(2));
        adam_step(&mut a, &[0.7, -0.2], &mut sa, 0.1).unwrap();
        adam_step(&mut b, &[-0.7, 0.2], &mut sb, 0.1).unwrap();
        assert_eq!(a[0], -b[0]);
        assert_eq!(a[1], -b[1]);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = [0.0; 3];
        assert!(adam_step(&mut p, &[0.0; 2], &mut AdamState::new(3), 0.1).is_err());
    }
}
