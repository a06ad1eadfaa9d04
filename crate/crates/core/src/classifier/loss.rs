//! Softmax and focal loss, `FL(p_t) = -α_t (1 - p_t)^γ ln p_t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{ActivityClass, NUM_CLASSES};

const P_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocalLossConfig {
    pub gamma: f64,
    pub alpha: [f64; NUM_CLASSES],
}

impl Default for FocalLossConfig {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            alpha: [1.0; NUM_CLASSES],
        }
    }
}

impl FocalLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!("focal gamma {} must be finite and ≥ 0", self.gamma)));
        }
        if self.alpha.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(Error::config("focal alpha weights must be finite and ≥ 0"));
        }
        Ok(())
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn sample_loss(p_t: f64, alpha: f64, gamma: f64) -> f64 {
    let p = p_t.clamp(P_FLOOR, 1.0);
    -alpha * (1.0 - p).powf(gamma) * p.ln()
}

/// Mean focal loss over a batch of probability vectors.
pub fn focal_loss(probs: &[[f64; NUM_CLASSES]], targets: &[ActivityClass], cfg: &FocalLossConfig) -> Result<f64> {
    cfg.validate()?;
    if probs.is_empty() || probs.len() != targets.len() {
        return Err(Error::argument(format!(
            "focal loss needs matching non-empty batches, got {} and {}",
            probs.len(),
            targets.len()
        )));
    }
    let mut total = 0.0;
    for (p, &t) in probs.iter().zip(targets) {
        let sum: f64 = p.iter().sum();
        if p.iter().any(|v| !(0.0..=1.0).contains(v)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::argument(format!("{p:?} is not a probability distribution")));
        }
        total += sample_loss(p[t.index()], cfg.alpha[t.index()], cfg.gamma);
    }
    Ok(total / probs.len() as f64)
}

/// Loss of one sample and its gradient with respect to the logits.
///
/// With `p = softmax(z)` and `t` the target,
/// `∂FL/∂z_j = α_t [γ (1-p_t)^(γ-1) p_t ln p_t - (1-p_t)^γ] (δ_tj - p_j)`.
/// The gradient is that of the unclamped loss.
pub fn focal_loss_grad(
    logits: &[f64; NUM_CLASSES],
    target: ActivityClass,
    cfg: &FocalLossConfig,
) -> (f64, [f64; NUM_CLASSES]) {
    let p = softmax(logits);
    let t = target.index();
    let pt = p[t];
    let alpha = cfg.alpha[t];
    let gamma = cfg.gamma;
    let loss = sample_loss(pt, alpha, gamma);
    let q = 1.0 - pt;
    let focal_term = if gamma == 0.0 || pt <= 0.0 || q <= 0.0 {
        0.0
    } else {
        gamma * q.powf(gamma - 1.0) * pt * pt.ln()
    };
    let g = alpha * (focal_term - q.powf(gamma));
    let mut grad = [0.0; NUM_CLASSES];
    for (j, gj) in grad.iter_mut().enumerate() {
        let delta = if j == t { 1.0 } else { 0.0 };
        *gj = g * (delta - p[j]);
    }
    (loss, grad)
}
