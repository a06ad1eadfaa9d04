//! Adam and the cosine learning-rate schedule.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments for a list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = sizes.into_iter().map(|n| (vec![0.0; n], vec![0.0; n])).unzip();
        Self { step: 0, m, v }
    }
}

/// One bias-corrected Adam update of `params` in place. Nothing is changed
/// if any gradient is non-finite.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [&mut [f32]],
    grads: &[&[f32]],
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::argument("parameter, gradient and moment lists differ in length"));
    }
    for (k, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.m[k].len() {
            return Err(Error::argument(format!("tensor {k}: parameter and gradient sizes differ")));
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::Training(format!(
                "non-finite gradient {} in tensor {k} at element {i} (step {})",
                g[i],
                state.step + 1
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for i in 0..p.len() {
            let gi = f64::from(g[i]);
            let mi = cfg.beta1 * f64::from(m[i]) + (1.0 - cfg.beta1) * gi;
            let vi = cfg.beta2 * f64::from(v[i]) + (1.0 - cfg.beta2) * gi * gi;
            m[i] = mi as f32;
            v[i] = vi as f32;
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            p[i] = (f64::from(p[i]) - lr * m_hat / (v_hat.sqrt() + cfg.eps)) as f32;
        }
    }
    Ok(())
}

/// `lr(e) = lr_min + ½ (lr0 - lr_min)(1 + cos(π e / epochs))` for `0 ≤ e ≤ epochs`.
pub fn cosine_lr(epoch: usize, epochs: usize, lr0: f64, lr_min: f64) -> Result<f64> {
    if epochs == 0 || epoch > epochs {
        return Err(Error::argument(format!("epoch {epoch} outside 0..={epochs}")));
    }
    Ok(lr_min + 0.5 * (lr0 - lr_min) * (1.0 + (PI * epoch as f64 / epochs as f64).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(p: &mut Vec<f32>, g: &[f32], state: &mut AdamState, lr: f64, cfg: &AdamConfig) -> Result<()> {
        adam_step(state, &mut [p.as_mut_slice()], &[g], lr, cfg)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![1.5f32, -2.0];
        let mut s = AdamState::new([2]);
        step(&mut p, &[0.0, 0.0], &mut s, 0.01, &AdamConfig::default()).unwrap();
        assert_eq!(p, vec![1.5, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![0.0f32];
        let mut s = AdamState::new([1]);
        step(&mut p, &[1.0], &mut s, 0.01, &AdamConfig::default()).unwrap();
        assert!((f64::from(p[0]) + 0.01).abs() < 1e-8, "{}", p[0]);
    }

    #[test]
    fn identical_states_step_identically() {
        let cfg = AdamConfig::default();
        let mut a = (vec![0.3f32, 0.7], AdamState::new([2]));
        let mut b = a.clone();
        for g in [[0.1f32, -0.4], [2.0, 0.5]] {
            step(&mut a.0, &g, &mut a.1, 0.01, &cfg).unwrap();
            step(&mut b.0, &g, &mut b.1, 0.01, &cfg).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn zero_betas_give_normalized_sgd() {
        let cfg = AdamConfig {
            beta1: 0.0,
            beta2: 0.0,
            eps: 0.5,
        };
        let mut p = vec![1.0f32];
        let mut s = AdamState::new([1]);
        step(&mut p, &[2.0], &mut s, 0.1, &cfg).unwrap();
        let want = 1.0 - 0.1 * 2.0 / (2.0 + 0.5);
        assert!((f64::from(p[0]) - want).abs() < 1e-7);
    }

    #[test]
    fn non_finite_gradient_is_a_training_error() {
        let mut p = vec![1.0f32, 2.0];
        let mut s = AdamState::new([2]);
        let err = step(&mut p, &[0.5, f32::NAN], &mut s, 0.1, &AdamConfig::default());
        assert!(matches!(err, Err(Error::Training(_))));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(s.step, 0);
    }

    #[test]
    fn cosine_endpoints_and_monotonicity() {
        assert!((cosine_lr(0, 30, 1e-2, 0.0).unwrap() - 1e-2).abs() < 1e-12);
        assert!(cosine_lr(30, 30, 1e-2, 0.0).unwrap().abs() < 1e-12);
        assert!((cosine_lr(15, 30, 1e-2, 0.0).unwrap() - 5e-3).abs() < 1e-12);
        let lrs: Vec<f64> = (0..=30).map(|e| cosine_lr(e, 30, 1e-2, 0.0).unwrap()).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
        assert!(cosine_lr(31, 30, 1e-2, 0.0).is_err());
        assert!(cosine_lr(0, 0, 1e-2, 0.0).is_err());
    }
}
