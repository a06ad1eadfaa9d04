//! Mini-batch training with focal loss, Adam and a per-epoch cosine schedule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::FocalLossConfig;
use super::model::Model;
use super::optim::{adam_step, cosine_lr, AdamConfig, AdamState};
use super::ModelConfig;
use crate::dataset::{class_counts, WindowedSample};
use crate::error::{Error, Result};
use crate::labels::{ActivityClass, NUM_CLASSES};
use crate::metrics::{confusion, macro_f1};

/// How the focal-loss class weights are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    /// Inverse training-set frequency, normalized to mean 1 over the classes present.
    InverseFrequency,
    Uniform,
    Fixed([f64; NUM_CLASSES]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_min: f64,
    pub adam: AdamConfig,
    pub gamma: f64,
    pub alpha: AlphaMode,
    pub seed: u64,
    /// Spread per-sample work over the rayon pool. Results are bit-identical
    /// either way.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            epochs: 30,
            batch_size: 128,
            lr0: 1e-2,
            lr_min: 0.0,
            adam: AdamConfig::default(),
            gamma: 2.0,
            alpha: AlphaMode::InverseFrequency,
            seed: 0,
            parallel: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch_size must be positive"));
        }
        if !(self.lr0 > 0.0 && self.lr_min >= 0.0 && self.lr_min <= self.lr0) {
            return Err(Error::config("need 0 ≤ lr_min ≤ lr0 and lr0 > 0"));
        }
        FocalLossConfig {
            gamma: self.gamma,
            alpha: [1.0; NUM_CLASSES],
        }
        .validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Sample-weighted mean training loss.
    pub loss: f64,
    pub val_macro_f1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochLog>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
    pub alpha: [f64; NUM_CLASSES],
}

/// `α_c ∝ 1 / count_c`, scaled so the classes that occur average 1. Absent
/// classes get 1.
pub fn inverse_frequency_alpha(counts: &[usize; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let present: Vec<usize> = (0..NUM_CLASSES).filter(|&c| counts[c] > 0).collect();
    let mut alpha = [1.0; NUM_CLASSES];
    if present.is_empty() {
        return alpha;
    }
    let inv_sum: f64 = present.iter().map(|&c| 1.0 / counts[c] as f64).sum();
    let norm = present.len() as f64 / inv_sum;
    for &c in &present {
        alpha[c] = norm / counts[c] as f64;
    }
    alpha
}

/// Root-mean-square of every value in `samples`.
fn rms(samples: &[WindowedSample]) -> f64 {
    let (mut sum, mut n) = (0.0f64, 0usize);
    for s in samples {
        sum += s.tensor.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>();
        n += s.tensor.len();
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const SHUFFLE_STREAM: u64 = 1 << 48;
const DROPOUT_STREAM: u64 = 2 << 48;

/// Macro-F1 of `model` on `samples`.
pub(crate) fn evaluate_macro_f1(model: &Model, samples: &[WindowedSample], parallel: bool) -> Result<f64> {
    let xs: Vec<&[f32]> = samples.iter().map(|s| s.tensor.as_slice()).collect();
    let probs = model.forward_many(&xs, parallel)?;
    let pred: Vec<ActivityClass> = probs
        .iter()
        .map(|p| super::WindowPrediction::from_probs(0.0, *p).label)
        .collect();
    let truth: Vec<ActivityClass> = samples.iter().map(|s| s.label).collect();
    Ok(macro_f1(&confusion(&truth, &pred)?).macro_f1)
}

/// Trains a fresh model. With a non-empty `validation` set, the weights of the
/// epoch with the highest validation macro-F1 are returned (earliest on ties);
/// otherwise those of the last epoch.
pub fn train(train_set: &[WindowedSample], validation: &[WindowedSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::argument("training set is empty"));
    }
    let shape = cfg.model.input_shape;
    let want: usize = shape.iter().product();
    if let Some(bad) = train_set.iter().chain(validation).find(|s| s.tensor.len() != want) {
        return Err(Error::argument(format!(
            "sample of shape {:?} does not fit the model input {shape:?}",
            bad.shape
        )));
    }

    let alpha = match &cfg.alpha {
        AlphaMode::InverseFrequency => inverse_frequency_alpha(&class_counts(train_set)),
        AlphaMode::Uniform => [1.0; NUM_CLASSES],
        AlphaMode::Fixed(a) => *a,
    };
    let loss_cfg = FocalLossConfig { gamma: cfg.gamma, alpha };
    loss_cfg.validate()?;

    let mut model = Model::new(cfg.model.clone(), cfg.seed)?;
    let r = rms(train_set);
    if r > 0.0 {
        model.set_input_scale((1.0 / r) as f32)?;
    }
    let mut adam = AdamState::new(model.params().iter().map(|t| t.data.len()));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Model)> = None;

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg.epochs, cfg.lr0, cfg.lr_min)?;
        order.shuffle(&mut rng_for(cfg.seed, SHUFFLE_STREAM | epoch as u64));
        let mut loss_sum = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let xs: Vec<&[f32]> = chunk.iter().map(|&i| train_set[i].tensor.as_slice()).collect();
            let ts: Vec<ActivityClass> = chunk.iter().map(|&i| train_set[i].label).collect();
            let mut dropout = rng_for(cfg.seed, DROPOUT_STREAM | (epoch as u64) << 24 | bi as u64);
            let (loss, grads) = model.train_step(&xs, &ts, &loss_cfg, &mut dropout, cfg.parallel)?;
            let grads: Vec<&[f32]> = grads.iter().map(Vec::as_slice).collect();
            let mut params: Vec<&mut [f32]> = model.params_mut().iter_mut().map(|t| t.data.as_mut_slice()).collect();
            adam_step(&mut adam, &mut params, &grads, lr, &cfg.adam).map_err(|e| match e {
                Error::Training(m) => Error::Training(format!("epoch {epoch}, batch {bi}: {m}")),
                other => other,
            })?;
            loss_sum += loss * chunk.len() as f64;
        }
        let val_macro_f1 = if validation.is_empty() {
            None
        } else {
            let f1 = evaluate_macro_f1(&model, validation, cfg.parallel)?;
            if best.as_ref().map_or(true, |b| f1 > b.0) {
                best = Some((f1, epoch, model.clone()));
            }
            Some(f1)
        };
        log.push(EpochLog {
            epoch,
            lr,
            loss: loss_sum / train_set.len() as f64,
            val_macro_f1,
        });
    }

    let (best_epoch, model) = match best {
        Some((_, e, m)) => (e, m),
        None => (cfg.epochs - 1, model),
    };
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy_config() -> TrainConfig {
        TrainConfig {
            model: ModelConfig {
                input_shape: [1, 8, 8],
                encoder_channels: vec![4, 8],
                embedding_dim: 8,
                head_widths: vec![8, NUM_CLASSES],
                dropout_p: 0.0,
                ..Default::default()
            },
            epochs: 5,
            batch_size: 16,
            lr0: 1e-2,
            seed: 3,
            parallel: false,
            ..Default::default()
        }
    }

    /// Two classes that differ in which half of the image is bright.
    fn toy_set(n: usize, seed: u64) -> Vec<WindowedSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { ActivityClass::Chewing } else { ActivityClass::Talking };
                let tensor = (0..64)
                    .map(|k| {
                        let top = k < 32;
                        let lit = top == (label == ActivityClass::Chewing);
                        (if lit { 1.0 } else { 0.0 }) + rng.gen_range(-0.2..0.2)
                    })
                    .collect();
                WindowedSample {
                    tensor,
                    shape: [1, 8, 8],
                    label,
                    start_time_s: i as f64,
                    group: 0,
                }
            })
            .collect()
    }

    #[test]
    fn alpha_is_mean_one_over_present_classes() {
        let a = inverse_frequency_alpha(&[10, 0, 30, 0, 60, 0]);
        let present = [a[0], a[2], a[4]];
        assert!((present.iter().sum::<f64>() / 3.0 - 1.0).abs() < 1e-12);
        assert!((a[0] / a[2] - 3.0).abs() < 1e-12);
        assert_eq!([a[1], a[3], a[5]], [1.0; 3]);
        assert_eq!(inverse_frequency_alpha(&[5; 6]), [1.0; 6]);
    }

    #[test]
    fn separable_toy_problem_is_learned() {
        let data = toy_set(200, 1);
        let cfg = toy_config();
        let out = train(&data, &[], &cfg).unwrap();
        assert_eq!(out.log.len(), 5);
        assert!(out.log[4].loss < out.log[0].loss, "{:?}", out.log);
        assert_eq!(out.best_epoch, 4);
        let acc = evaluate_macro_f1(&out.model, &data, false).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn training_is_deterministic_and_thread_independent() {
        let data = toy_set(50, 2);
        let val = toy_set(20, 3);
        let mut cfg = toy_config();
        cfg.epochs = 2;
        cfg.model.dropout_p = 0.25;
        let a = train(&data, &val, &cfg).unwrap();
        cfg.parallel = true;
        let b = train(&data, &val, &cfg).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.model, b.model);
        assert!(a.log.iter().all(|l| l.val_macro_f1.is_some()));
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let cfg = toy_config();
        assert!(matches!(train(&[], &[], &cfg), Err(Error::Argument(_))));
        let mut data = toy_set(4, 0);
        data[1].tensor.pop();
        assert!(matches!(train(&data, &[], &cfg), Err(Error::Argument(_))));
        let zero = TrainConfig { epochs: 0, ..toy_config() };
        assert!(zero.validate().is_err());
    }

    #[test]
    fn lr_follows_the_cosine_schedule() {
        let data = toy_set(10, 0);
        let out = train(&data, &[], &toy_config()).unwrap();
        for l in &out.log {
            assert_eq!(l.lr, cosine_lr(l.epoch, 5, 1e-2, 0.0).unwrap());
        }
    }
}
