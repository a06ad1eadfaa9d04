use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A linear up-chirp repeated back to back by one speaker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChirpParams {
    pub f_start: f64,
    pub f_end: f64,
    pub n_samples: usize,
    pub sample_rate: f64,
    pub amplitude: f64,
    /// Apply a Hann taper to each chirp. Off by default.
    #[serde(default)]
    pub taper: bool,
}

impl ChirpParams {
    pub fn new(f_start: f64, f_end: f64, n_samples: usize, sample_rate: f64) -> Self {
        Self {
            f_start,
            f_end,
            n_samples,
            sample_rate,
            amplitude: 0.5,
            taper: false,
        }
    }

    pub fn sweep_period_s(&self) -> f64 {
        self.n_samples as f64 / self.sample_rate
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate / 2.0;
        if !(self.f_start > 0.0 && self.f_start < self.f_end && self.f_end < nyquist) {
            return Err(Error::config(format!(
                "chirp needs 0 < f_start < f_end < {nyquist} Hz, got {}..{} Hz",
                self.f_start, self.f_end
            )));
        }
        if self.n_samples < 2 {
            return Err(Error::config("chirp needs at least 2 samples"));
        }
        if !(self.amplitude > 0.0 && self.amplitude <= 1.0) {
            return Err(Error::config("chirp amplitude must be in (0, 1]"));
        }
        Ok(())
    }
}

impl ChirpParams {
    /// Chirp value at a fractional sample position `pos` in `[0, n_samples)`.
    /// At integer positions this equals [`generate_chirp`] exactly.
    pub fn value_at(&self, pos: f64) -> f64 {
        let period = self.sweep_period_s();
        let sweep_rate = (self.f_end - self.f_start) / (2.0 * period);
        let t = pos / self.sample_rate;
        let phase = 2.0 * PI * (self.f_start * t + sweep_rate * t * t);
        let window = if self.taper {
            0.5 - 0.5 * (2.0 * PI * pos / (self.n_samples - 1) as f64).cos()
        } else {
            1.0
        };
        self.amplitude * window * phase.sin()
    }
}

/// One period of the chirp:
/// `a * sin(2π (f0 t + (f1 - f0) / (2T) t²))` at `t = k / fs`.
pub fn generate_chirp(params: &ChirpParams) -> Result<Vec<f64>> {
    params.validate()?;
    Ok((0..params.n_samples).map(|k| params.value_at(k as f64)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::num_complex::Complex;
    use rustfft::FftPlanner;

    fn left_band() -> ChirpParams {
        ChirpParams::new(18_000.0, 21_500.0, 600, 50_000.0)
    }

    #[test]
    fn length_and_phase_origin() {
        let chirp = generate_chirp(&left_band()).unwrap();
        assert_eq!(chirp.len(), 600);
        assert_eq!(chirp[0], 0.0);
        assert!(chirp.iter().all(|s| s.abs() <= 0.5 + 1e-12));
    }

    #[test]
    fn sweep_period_matches_length() {
        assert_eq!(left_band().sweep_period_s(), 0.012);
    }

    #[test]
    fn rejects_nyquist_violation_and_short_chirps() {
        let mut p = left_band();
        p.f_end = 25_000.0;
        assert!(matches!(generate_chirp(&p), Err(Error::Config(_))));
        let mut p = left_band();
        p.n_samples = 1;
        assert!(generate_chirp(&p).is_err());
        let mut p = left_band();
        p.f_start = 22_000.0;
        assert!(generate_chirp(&p).is_err());
    }

    /// Short-time FFT peak tracking: the dominant frequency of successive
    /// frames must climb from the start frequency to the end frequency.
    #[test]
    fn stft_peak_frequency_rises_linearly() {
        let params = left_band();
        let chirp = generate_chirp(&params).unwrap();
        let frame = 100;
        let hop = 50;
        let nfft = 4096;
        let fft = FftPlanner::<f64>::new().plan_fft_forward(nfft);
        let mut peaks = Vec::new();
        let mut start = 0;
        while start + frame <= chirp.len() {
            let mut buf = vec![Complex::new(0.0, 0.0); nfft];
            for k in 0..frame {
                let w = 0.5 - 0.5 * (2.0 * PI * k as f64 / (frame - 1) as f64).cos();
                buf[k] = Complex::new(chirp[start + k] * w, 0.0);
            }
            fft.process(&mut buf);
            let (bin, _) = buf[..nfft / 2]
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
                .unwrap();
            let freq = bin as f64 * params.sample_rate / nfft as f64;
            let centre_t = (start as f64 + frame as f64 / 2.0) / params.sample_rate;
            let expected = params.f_start
                + (params.f_end - params.f_start) * centre_t / params.sweep_period_s();
            assert!((freq - expected).abs() < 300.0, "frame at {start}: {freq} vs {expected}");
            peaks.push(freq);
            start += hop;
        }
        assert!(peaks.windows(2).all(|w| w[1] >= w[0]), "{peaks:?}");
        assert!(peaks[0] < 18_500.0 && *peaks.last().unwrap() > 21_000.0);
    }
}
