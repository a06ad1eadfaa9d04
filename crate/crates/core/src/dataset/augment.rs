use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::WindowedSample;
use crate::error::{Error, Result};

/// Training-time augmentation: additive Gaussian noise on a fraction of the
/// windows, and a zeroed contiguous band of range rows on another fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Fraction of windows that receive noise.
    pub noise_fraction: f64,
    /// Noise standard deviation relative to each window's own standard deviation.
    pub noise_sigma: f64,
    /// Fraction of windows that receive a range mask.
    pub mask_fraction: f64,
    /// Width of the mask as a fraction of the range axis.
    pub mask_width_fraction: f64,
    pub seed: u64,
    /// Keep the unmodified windows and append augmented copies; otherwise the
    /// selected windows are modified in place.
    pub keep_originals: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise_fraction: 0.05,
            noise_sigma: 0.05,
            mask_fraction: 0.05,
            mask_width_fraction: 0.05,
            seed: 0,
            keep_originals: true,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("noise_fraction", self.noise_fraction),
            ("mask_fraction", self.mask_fraction),
            ("mask_width_fraction", self.mask_width_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} = {v} must be in [0, 1]")));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config("noise_sigma must be finite and non-negative"));
        }
        Ok(())
    }
}

/// What [`augment`] did, by index into its input.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentLog {
    pub noised: Vec<usize>,
    /// `(sample index, first masked row)`.
    pub masked: Vec<(usize, usize)>,
    pub mask_rows: usize,
}

/// Augments `samples`. Selections are seeded draws without replacement; each
/// window's noise and mask offset come from RNG streams keyed by its index,
/// so results do not depend on processing order.
pub fn augment(mut samples: Vec<WindowedSample>, cfg: &AugmentConfig) -> Result<(Vec<WindowedSample>, AugmentLog)> {
    cfg.validate()?;
    let n = samples.len();
    let n_noise = (cfg.noise_fraction * n as f64).round() as usize;
    let n_mask = (cfg.mask_fraction * n as f64).round() as usize;

    let mut pick = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut noised = sample_indices(&mut pick, n, n_noise).into_vec();
    pick.set_stream(1);
    let mut mask_sel = sample_indices(&mut pick, n, n_mask).into_vec();
    noised.sort_unstable();
    mask_sel.sort_unstable();

    let mut log = AugmentLog {
        noised: noised.clone(),
        masked: Vec::with_capacity(n_mask),
        mask_rows: 0,
    };
    let mut touched: Vec<usize> = noised.iter().chain(&mask_sel).copied().collect();
    touched.sort_unstable();
    touched.dedup();

    let mut extra = Vec::new();
    for &i in &touched {
        let mut s = if cfg.keep_originals { samples[i].clone() } else { std::mem::replace(&mut samples[i], placeholder()) };
        if noised.binary_search(&i).is_ok() {
            add_noise(&mut s, cfg, i);
        }
        if mask_sel.binary_search(&i).is_ok() {
            let [_, n_bins, _] = s.shape;
            let width = ((cfg.mask_width_fraction * n_bins as f64).round() as usize).min(n_bins);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(2 << 32 | i as u64);
            let offset = rng.gen_range(0..=n_bins - width);
            mask_rows(&mut s, offset, width);
            log.masked.push((i, offset));
            log.mask_rows = width;
        }
        if cfg.keep_originals {
            extra.push(s);
        } else {
            samples[i] = s;
        }
    }
    samples.extend(extra);
    Ok((samples, log))
}

fn placeholder() -> WindowedSample {
    WindowedSample {
        tensor: Vec::new(),
        shape: [0; 3],
        label: crate::ActivityClass::Null,
        start_time_s: 0.0,
        group: 0,
    }
}

fn add_noise(s: &mut WindowedSample, cfg: &AugmentConfig, index: usize) {
    let n = s.tensor.len().max(1) as f64;
    let mean = s.tensor.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = s.tensor.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / n;
    let sigma = cfg.noise_sigma * var.sqrt();
    if sigma <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1 << 32 | index as u64);
    for v in &mut s.tensor {
        *v += normal.sample(&mut rng) as f32;
    }
}

fn mask_rows(s: &mut WindowedSample, offset: usize, width: usize) {
    let [channels, n_bins, frames] = s.shape;
    for c in 0..channels {
        let start = (c * n_bins + offset) * frames;
        s.tensor[start..start + width * frames].fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ActivityClass;
    use proptest::prelude::*;

    fn samples(n: usize) -> Vec<WindowedSample> {
        (0..n)
            .map(|i| WindowedSample {
                tensor: (0..2 * 20 * 6).map(|k| 1.0 + ((i * 7 + k) % 13) as f32).collect(),
                shape: [2, 20, 6],
                label: ActivityClass::ALL[i % 6],
                start_time_s: i as f64,
                group: 0,
            })
            .collect()
    }

    fn zero_rows(s: &WindowedSample) -> Vec<usize> {
        let [c, b, f] = s.shape;
        (0..b)
            .filter(|&r| (0..c).all(|ch| s.tensor[(ch * b + r) * f..][..f].iter().all(|&v| v == 0.0)))
            .collect()
    }

    #[test]
    fn hundred_windows_get_five_noised_and_five_masked() {
        let input = samples(100);
        let (out, log) = augment(input.clone(), &AugmentConfig::default()).unwrap();
        assert_eq!(log.noised.len(), 5);
        assert_eq!(log.masked.len(), 5);
        assert_eq!(log.mask_rows, 1);
        assert_eq!(&out[..100], &input[..]);
        let mut touched: Vec<usize> = log.noised.iter().copied().chain(log.masked.iter().map(|m| m.0)).collect();
        touched.sort_unstable();
        touched.dedup();
        assert_eq!(out.len(), 100 + touched.len());
        for (copy, &src) in out[100..].iter().zip(&touched) {
            assert_eq!(copy.label, input[src].label);
            assert_eq!(copy.shape, input[src].shape);
        }
    }

    #[test]
    fn mask_width_for_150_bins_is_eight() {
        let s = vec![WindowedSample {
            tensor: vec![1.0; 4 * 150 * 10],
            shape: [4, 150, 10],
            label: ActivityClass::Chewing,
            start_time_s: 0.0,
            group: 0,
        }];
        let cfg = AugmentConfig {
            mask_fraction: 1.0,
            noise_fraction: 0.0,
            keep_originals: false,
            ..Default::default()
        };
        let (out, log) = augment(s, &cfg).unwrap();
        assert_eq!(log.mask_rows, 8);
        let rows = zero_rows(&out[0]);
        assert_eq!(rows.len(), 8);
        assert_eq!(rows[0], log.masked[0].1);
        assert_eq!(rows[7] - rows[0], 7);
    }

    #[test]
    fn same_seed_same_output() {
        let cfg = AugmentConfig {
            seed: 11,
            ..Default::default()
        };
        let a = augment(samples(60), &cfg).unwrap();
        let b = augment(samples(60), &cfg).unwrap();
        assert_eq!(a, b);
        let c = augment(samples(60), &AugmentConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn empty_input_is_fine() {
        let (out, log) = augment(Vec::new(), &AugmentConfig::default()).unwrap();
        assert!(out.is_empty());
        assert!(log.noised.is_empty() && log.masked.is_empty());
    }

    proptest! {
        #[test]
        fn counts_match_formula(n in 0usize..300, seed in any::<u64>(), keep in any::<bool>()) {
            let cfg = AugmentConfig { seed, keep_originals: keep, mask_width_fraction: 0.1, ..Default::default() };
            let input = samples(n);
            let (out, log) = augment(input.clone(), &cfg).unwrap();
            let expect = (0.05 * n as f64).round() as usize;
            prop_assert_eq!(log.noised.len(), expect);
            prop_assert_eq!(log.masked.len(), expect);
            let mut sorted = log.noised.clone();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), expect);
            if !keep {
                prop_assert_eq!(out.len(), n);
                for (i, (o, s)) in out.iter().zip(&input).enumerate() {
                    prop_assert_eq!(o.label, s.label);
                    prop_assert_eq!(o.shape, s.shape);
                    let is_noised = log.noised.contains(&i);
                    let masked = log.masked.iter().find(|m| m.0 == i);
                    if let Some(&(_, off)) = masked {
                        prop_assert_eq!(zero_rows(o), (off..off + 2).collect::<Vec<_>>());
                    }
                    if !is_noised && masked.is_none() {
                        prop_assert_eq!(o, s);
                    }
                }
            }
        }
    }
}
