//! A small convolutional classifier over windowed differential echo profiles.
//!
//! Everything below the GEMM is implemented here: layers with hand-written
//! backward passes, focal loss, Adam and a cosine learning-rate schedule.

pub mod checkpoint;
mod layers;
pub mod loss;
mod model;
pub mod optim;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{ActivityClass, NUM_CLASSES};

pub use checkpoint::{load_model, read_model, save_model, write_model};
pub use loss::{focal_loss, focal_loss_grad, softmax, FocalLossConfig};
pub use model::{Model, Tensor};
pub use optim::{adam_step, cosine_lr, AdamConfig, AdamState};
pub use train::{inverse_frequency_alpha, train, AlphaMode, EpochLog, TrainConfig, TrainOutcome};

/// Network shape. The encoder is a stack of 3×3 stride-2 convolutions, each
/// followed by batch norm and leaky ReLU, then global average pooling and a
/// linear projection to the embedding. The head is a stack of linear layers;
/// all but the last get batch norm, leaky ReLU and dropout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// `[channels, bins, frames]` of the input windows.
    pub input_shape: [usize; 3],
    pub encoder_channels: Vec<usize>,
    pub embedding_dim: usize,
    pub head_widths: Vec<usize>,
    pub dropout_p: f64,
    pub leaky_slope: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_shape: [4, 150, 166],
            encoder_channels: vec![16, 32, 64, 128],
            embedding_dim: 256,
            head_widths: vec![128, 64, NUM_CLASSES],
            dropout_p: 0.25,
            leaky_slope: 0.01,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_shape.contains(&0) {
            return Err(Error::config(format!("input shape {:?} has a zero dimension", self.input_shape)));
        }
        if self.encoder_channels.is_empty() || self.encoder_channels.contains(&0) {
            return Err(Error::config("encoder needs at least one stage with positive width"));
        }
        if self.embedding_dim == 0 {
            return Err(Error::config("embedding_dim must be positive"));
        }
        if self.head_widths.last() != Some(&NUM_CLASSES) || self.head_widths.contains(&0) {
            return Err(Error::config(format!("head must end in {NUM_CLASSES} outputs")));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::config("dropout_p must be in [0, 1)"));
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0 && self.bn_eps > 0.0) {
            return Err(Error::config("batch-norm momentum must be in (0, 1] and eps positive"));
        }
        Ok(())
    }
}

/// Class probabilities for one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPrediction {
    pub start_time_s: f64,
    pub probs: [f64; NUM_CLASSES],
    pub label: ActivityClass,
}

impl WindowPrediction {
    pub fn from_probs(start_time_s: f64, probs: [f64; NUM_CLASSES]) -> Self {
        let best = (0..NUM_CLASSES).fold(0, |b, i| if probs[i] > probs[b] { i } else { b });
        Self {
            start_time_s,
            probs,
            label: ActivityClass::ALL[best],
        }
    }

    pub fn confidence(&self) -> f64 {
        self.probs[self.label.index()]
    }
}

/// Per-window predictions in window order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePredictions {
    pub window_s: f64,
    pub windows: Vec<WindowPrediction>,
}

impl FramePredictions {
    pub fn labels(&self) -> Vec<ActivityClass> {
        self.windows.iter().map(|w| w.label).collect()
    }
}

/// Anything that maps a window tensor to class probabilities.
pub trait Predictor {
    fn input_shape(&self) -> [usize; 3];
    fn predict_proba(&self, tensor: &[f32]) -> Result<[f64; NUM_CLASSES]>;
}

/// Runs `predictor` over windows given as `(start_time_s, tensor)` pairs.
pub fn predict<'a, P, I>(predictor: &P, window_s: f64, windows: I) -> Result<FramePredictions>
where
    P: Predictor + ?Sized,
    I: IntoIterator<Item = (f64, &'a [f32])>,
{
    let windows = windows
        .into_iter()
        .map(|(t, x)| Ok(WindowPrediction::from_probs(t, predictor.predict_proba(x)?)))
        .collect::<Result<_>>()?;
    Ok(FramePredictions { window_s, windows })
}
