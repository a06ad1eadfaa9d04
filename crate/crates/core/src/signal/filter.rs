use std::f64::consts::PI;

use rustfft::num_complex::Complex;

use super::AudioStream;
use crate::error::{Error, Result};

/// Second-order IIR section, `a[0]` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, omega: f64) -> Complex<f64> {
        let z1 = Complex::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        let num = self.b[0] + z1 * self.b[1] + z2 * self.b[2];
        let den = self.a[0] + z1 * self.a[1] + z2 * self.a[2];
        num / den
    }
}

/// Butterworth bandpass realized as cascaded biquads (bilinear transform with
/// pre-warped band edges). Runs forward only, from zero initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct BandpassFilter {
    pub sections: Vec<Biquad>,
    pub low_hz: f64,
    pub high_hz: f64,
    pub sample_rate: f64,
}

impl BandpassFilter {
    /// `order` counts poles of the bandpass, so `order / 2` sections.
    pub fn butterworth(low_hz: f64, high_hz: f64, order: usize, sample_rate: f64) -> Result<Self> {
        let nyquist = sample_rate / 2.0;
        if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
            return Err(Error::config(format!(
                "bandpass needs 0 < low < high < {nyquist} Hz, got {low_hz}..{high_hz} Hz"
            )));
        }
        if order == 0 || order % 2 != 0 {
            return Err(Error::config("bandpass order must be a positive even number"));
        }
        let proto_order = order / 2;
        let fs2 = 2.0 * sample_rate;
        let w1 = fs2 * (PI * low_hz / sample_rate).tan();
        let w2 = fs2 * (PI * high_hz / sample_rate).tan();
        let w0 = (w1 * w2).sqrt();
        let bw = w2 - w1;
        let omega0 = 2.0 * (w0 / fs2).atan();

        let mut analog_poles = Vec::with_capacity(order);
        for k in 0..proto_order {
            let theta = PI * (2 * k + proto_order + 1) as f64 / (2 * proto_order) as f64;
            let p = Complex::from_polar(1.0, theta);
            let half = p * (bw / 2.0);
            let disc = (half * half - w0 * w0).sqrt();
            analog_poles.push(half + disc);
            analog_poles.push(half - disc);
        }

        // Complex poles pair with their conjugates; real poles (wide bands
        // near Nyquist) pair with each other.
        let digital: Vec<Complex<f64>> = analog_poles.iter().map(|&s| (fs2 + s) / (fs2 - s)).collect();
        let tol = 1e-9;
        let mut denominators: Vec<[f64; 3]> = digital
            .iter()
            .filter(|z| z.im > tol)
            .map(|z| [1.0, -2.0 * z.re, z.norm_sqr()])
            .collect();
        let mut real: Vec<f64> = digital.iter().filter(|z| z.im.abs() <= tol).map(|z| z.re).collect();
        real.sort_by(f64::total_cmp);
        for pair in real.chunks(2) {
            let (z1, z2) = (pair[0], pair.get(1).copied().unwrap_or(0.0));
            denominators.push([1.0, -(z1 + z2), z1 * z2]);
        }

        let mut sections: Vec<Biquad> = denominators
            .into_iter()
            .map(|a| {
                let mut sec = Biquad { b: [1.0, 0.0, -1.0], a };
                let g = sec.response(omega0).norm();
                for b in &mut sec.b {
                    *b /= g;
                }
                sec
            })
            .collect();
        // Fixed section order keeps the filter output reproducible.
        sections.sort_by(|x, y| x.a[1].total_cmp(&y.a[1]).then(x.a[2].total_cmp(&y.a[2])));
        debug_assert_eq!(sections.len(), proto_order);

        Ok(Self {
            sections,
            low_hz,
            high_hz,
            sample_rate,
        })
    }

    /// Magnitude response at `freq_hz`.
    pub fn gain_at(&self, freq_hz: f64) -> f64 {
        let omega = 2.0 * PI * freq_hz / self.sample_rate;
        self.sections
            .iter()
            .map(|s| s.response(omega))
            .fold(Complex::new(1.0, 0.0), |acc, h| acc * h)
            .norm()
    }

    /// Filters `input` (transposed direct form II per section).
    pub fn process<T: Copy + Into<f64>>(&self, input: &[T]) -> Vec<f64> {
        let mut out: Vec<f64> = input.iter().map(|&x| x.into()).collect();
        for sec in &self.sections {
            let [b0, b1, b2] = sec.b;
            let [_, a1, a2] = sec.a;
            let (mut s1, mut s2) = (0.0f64, 0.0f64);
            for x in out.iter_mut() {
                let xin = *x;
                let y = b0 * xin + s1;
                s1 = b1 * xin - a1 * y + s2;
                s2 = b2 * xin - a2 * y;
                *x = y;
            }
        }
        out
    }
}

/// Bandpass filters every channel of `stream` with the default 6th-order design.
pub fn bandpass(stream: &AudioStream, band: (f64, f64)) -> Result<AudioStream> {
    let filter = BandpassFilter::butterworth(band.0, band.1, 6, stream.sample_rate)?;
    let channels = stream
        .channels
        .iter()
        .map(|ch| filter.process(ch).into_iter().map(|v| v as f32).collect())
        .collect();
    AudioStream::new(channels, stream.sample_rate)
}
