use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Below this many multiply-adds the direct sum is cheaper than three FFTs.
const DIRECT_WORK_LIMIT: usize = 1 << 14;

/// `out[l] = Σ_k received[l + k] * template[k]` for `l` in
/// `0..=received.len() - template.len()`.
pub fn cross_correlate(received: &[f64], template: &[f64]) -> Result<Vec<f64>> {
    check_lengths(received, template)?;
    let lags = received.len() - template.len() + 1;
    if lags * template.len() <= DIRECT_WORK_LIMIT {
        cross_correlate_direct(received, template)
    } else {
        cross_correlate_fft(received, template)
    }
}

/// Direct O(n·m) evaluation of [`cross_correlate`].
pub fn cross_correlate_direct(received: &[f64], template: &[f64]) -> Result<Vec<f64>> {
    check_lengths(received, template)?;
    let lags = received.len() - template.len() + 1;
    Ok((0..lags)
        .map(|l| {
            received[l..l + template.len()]
                .iter()
                .zip(template)
                .map(|(r, t)| r * t)
                .sum()
        })
        .collect())
}

/// FFT evaluation of [`cross_correlate`]. The transform length is the next
/// power of two at or above `received.len()`, so no lag wraps around.
pub fn cross_correlate_fft(received: &[f64], template: &[f64]) -> Result<Vec<f64>> {
    check_lengths(received, template)?;
    let lags = received.len() - template.len() + 1;
    let n = received.len().next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut rx = to_complex(received, n);
    let mut tp = to_complex(template, n);
    fwd.process(&mut rx);
    fwd.process(&mut tp);
    for (r, t) in rx.iter_mut().zip(&tp) {
        *r *= t.conj();
    }
    inv.process(&mut rx);
    let scale = 1.0 / n as f64;
    Ok(rx[..lags].iter().map(|c| c.re * scale).collect())
}

fn check_lengths(received: &[f64], template: &[f64]) -> Result<()> {
    if template.is_empty() {
        return Err(Error::argument("correlation template is empty"));
    }
    if template.len() > received.len() {
        return Err(Error::argument(format!(
            "template ({} samples) longer than received signal ({} samples)",
            template.len(),
            received.len()
        )));
    }
    Ok(())
}

fn to_complex(x: &[f64], n: usize) -> Vec<Complex<f64>> {
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for (dst, &src) in buf.iter_mut().zip(x) {
        *dst = Complex::new(src, 0.0);
    }
    buf
}

/// Correlates one chirp-period frame against a periodic template.
///
/// Because the transmit train repeats every period, lag `l` of the frame's
/// correlation is `Σ_k frame[(l + k) mod n] * template[k]`, which equals
/// [`cross_correlate`] of the frame extended by its own first `n - 1`
/// samples. The template spectrum is computed once.
#[derive(Clone)]
pub struct CircularCorrelator {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    template_conj: Vec<Complex<f64>>,
    /// One-sided copy of `template_conj`: correlating against it yields the
    /// analytic signal of the correlation.
    analytic_conj: Vec<Complex<f64>>,
}

impl fmt::Debug for CircularCorrelator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CircularCorrelator")
            .field("len", &self.template_conj.len())
            .finish()
    }
}

impl CircularCorrelator {
    pub fn new(template: &[f64]) -> Result<Self> {
        if template.is_empty() {
            return Err(Error::argument("correlation template is empty"));
        }
        let n = template.len();
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let mut spec = to_complex(template, n);
        fwd.process(&mut spec);
        let scale = 1.0 / n as f64;
        let template_conj: Vec<Complex<f64>> = spec.into_iter().map(|c| c.conj() * scale).collect();
        let analytic_conj = template_conj
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                if k == 0 || 2 * k == n {
                    c
                } else if 2 * k < n {
                    c * 2.0
                } else {
                    Complex::new(0.0, 0.0)
                }
            })
            .collect();
        Ok(Self {
            fwd,
            inv,
            template_conj,
            analytic_conj,
        })
    }

    pub fn len(&self) -> usize {
        self.template_conj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.template_conj.is_empty()
    }

    /// Writes the first `out.len()` lags for `frame` (which must be exactly one
    /// period long). `scratch` must also be one period long.
    pub fn correlate_into(&self, frame: &[f64], scratch: &mut [Complex<f64>], out: &mut [f64]) {
        debug_assert_eq!(frame.len(), self.len());
        for (dst, &src) in scratch.iter_mut().zip(frame) {
            *dst = Complex::new(src, 0.0);
        }
        self.fwd.process(scratch);
        for (s, t) in scratch.iter_mut().zip(&self.template_conj) {
            *s *= t;
        }
        self.inv.process(scratch);
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o = s.re;
        }
    }

    /// Like [`correlate_into`](Self::correlate_into) but writes the envelope
    /// `|corr + i·hilbert(corr)|` instead of the real correlation.
    pub fn envelope_into(&self, frame: &[f64], scratch: &mut [Complex<f64>], out: &mut [f64]) {
        debug_assert_eq!(frame.len(), self.len());
        for (dst, &src) in scratch.iter_mut().zip(frame) {
            *dst = Complex::new(src, 0.0);
        }
        self.fwd.process(scratch);
        for (s, t) in scratch.iter_mut().zip(&self.analytic_conj) {
            *s *= t;
        }
        self.inv.process(scratch);
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o = s.norm();
        }
    }

    pub fn correlate(&self, frame: &[f64]) -> Result<Vec<f64>> {
        if frame.len() != self.len() {
            return Err(Error::argument(format!(
                "frame has {} samples, expected {}",
                frame.len(),
                self.len()
            )));
        }
        let mut scratch = vec![Complex::new(0.0, 0.0); self.len()];
        let mut out = vec![0.0; self.len()];
        self.correlate_into(frame, &mut scratch, &mut out);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{generate_chirp, ChirpParams};
    use proptest::prelude::*;

    fn naive(received: &[f64], template: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        for l in 0..=received.len() - template.len() {
            let mut acc = 0.0;
            for k in 0..template.len() {
                acc += received[l + k] * template[k];
            }
            out.push(acc);
        }
        out
    }

    fn argmax(x: &[f64]) -> usize {
        x.iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0
    }

    fn chirp() -> Vec<f64> {
        generate_chirp(&ChirpParams::new(18_000.0, 21_500.0, 600, 50_000.0)).unwrap()
    }

    #[test]
    fn autocorrelation_peaks_at_zero_lag() {
        let c = chirp();
        let out = cross_correlate(&c, &c).unwrap();
        assert_eq!(out.len(), 1);
        let mut padded = c.clone();
        padded.extend(std::iter::repeat(0.0).take(300));
        assert_eq!(argmax(&cross_correlate(&padded, &c).unwrap()), 0);
    }

    #[test]
    fn delayed_copy_peaks_at_its_delay() {
        let c = chirp();
        let mut received = vec![0.0; 100];
        received.extend_from_slice(&c);
        received.extend(std::iter::repeat(0.0).take(200));
        let fast = cross_correlate_fft(&received, &c).unwrap();
        let slow = naive(&received, &c);
        assert_eq!(argmax(&slow), 100);
        assert_eq!(argmax(&fast), 100);
    }

    #[test]
    fn zeros_correlate_to_zeros() {
        let out = cross_correlate(&vec![0.0; 900], &chirp()).unwrap();
        assert_eq!(out.len(), 301);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn template_longer_than_signal_is_rejected() {
        assert!(matches!(cross_correlate(&[1.0], &[1.0, 2.0]), Err(Error::Argument(_))));
        assert!(cross_correlate(&[1.0], &[]).is_err());
    }

    #[test]
    fn circular_matches_linear_on_periodic_extension() {
        let c = chirp();
        let frame: Vec<f64> = (0..600).map(|k| ((k * 7919) % 613) as f64 / 613.0 - 0.5).collect();
        let mut extended = frame.clone();
        extended.extend_from_slice(&frame[..599]);
        let linear = naive(&extended, &c);
        let circ = CircularCorrelator::new(&c).unwrap().correlate(&frame).unwrap();
        let scale = linear.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in linear.iter().zip(&circ) {
            assert!((a - b).abs() <= 1e-9 * scale);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn fft_path_matches_naive(
            received in prop::collection::vec(-1.0f64..1.0, 1..2048),
            frac in 0.0f64..1.0,
        ) {
            let m = ((received.len() as f64 * frac) as usize).max(1);
            let template: Vec<f64> = received.iter().rev().take(m).map(|v| v * 0.7 + 0.1).collect();
            let fast = cross_correlate_fft(&received, &template).unwrap();
            let slow = naive(&received, &template);
            let scale = slow.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
            let err = fast.iter().zip(&slow).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
            prop_assert!(err <= 1e-6 * scale, "relative error {}", err / scale);
        }
    }
}
