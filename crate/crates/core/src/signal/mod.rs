//! Ultrasonic sensing chain: chirp synthesis, band filtering, cross-correlation
//! and echo-profile construction.
//!
//! Two speakers transmit continuous linear chirp trains in disjoint bands; two
//! microphones pick up the reflections. Correlating each microphone stream
//! against each band's chirp, one chirp period at a time, yields a
//! distance-by-time image per (microphone, band) pair. Range bin `r` of that
//! image corresponds to a one-way distance of `r * c / (2 * fs)`.

mod chirp;
mod correlate;
mod filter;
mod profile;


pub use chirp::{generate_chirp, ChirpParams};
pub use correlate::{cross_correlate, cross_correlate_direct, cross_correlate_fft, CircularCorrelator};
pub use filter::{bandpass, BandpassFilter, Biquad};
pub use profile::{
    compute_echo_profile, crop_range, differentiate, differentiate_with, frame_start_sample,
    DifferenceMode, DifferentialEchoProfile, EchoProfile, ProfileTensor,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which eyeglass hinge a microphone sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Microphone {
    Left = 0,
    Right = 1,
}

impl Microphone {
    pub const ALL: [Microphone; 2] = [Microphone::Left, Microphone::Right];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One logical echo-profile channel: a microphone correlated against one band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelId {
    pub mic: Microphone,
    /// Index into [`SensingConfig::bands`].
    pub band: usize,
}

/// Sensing geometry and timing shared by the simulator and the signal chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensingConfig {
    /// Transmit chirps, one per speaker. Index 0 is the left hinge.
    pub bands: Vec<ChirpParams>,
    pub sample_rate: f64,
    pub speed_of_sound: f64,
    /// Correlation lags available per chirp period.
    pub range_bins_full: usize,
    /// Range bins actually kept by [`compute_echo_profile`]; rows beyond this
    /// are never computed. Must not exceed `range_bins_full`.
    pub profile_bins: usize,
    pub frames_per_second: usize,
    /// Bandpass filter order (even; `order / 2` biquad sections).
    pub filter_order: usize,
    pub magnitude: EchoMagnitude,
}

/// How a correlation lag becomes a non-negative profile value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EchoMagnitude {
    /// Envelope of the correlation (magnitude of its analytic signal).
    #[default]
    Envelope,
    /// Absolute value of the real correlation.
    Rectified,
}

impl Default for SensingConfig {
    fn default() -> Self {
        let fs = 50_000.0;
        Self {
            bands: vec![
                ChirpParams::new(18_000.0, 21_500.0, 600, fs),
                ChirpParams::new(21_500.0, 24_500.0, 600, fs),
            ],
            sample_rate: fs,
            speed_of_sound: 343.0,
            range_bins_full: 600,
            profile_bins: 600,
            frames_per_second: 83,
            filter_order: 6,
            magnitude: EchoMagnitude::Envelope,
        }
    }
}

impl SensingConfig {
    /// One-way distance covered by one correlation lag.
    pub fn bin_resolution_m(&self) -> f64 {
        self.speed_of_sound / (2.0 * self.sample_rate)
    }

    /// One-way distance of range bin `bin`.
    pub fn distance_m(&self, bin: usize) -> f64 {
        bin as f64 * self.speed_of_sound / (2.0 * self.sample_rate)
    }

    /// Range bin nearest to `distance_m`.
    pub fn bin_for_distance(&self, distance_m: f64) -> usize {
        (distance_m * 2.0 * self.sample_rate / self.speed_of_sound).round() as usize
    }

    pub fn max_range_m(&self) -> f64 {
        self.distance_m(self.range_bins_full)
    }

    /// Samples per chirp period (identical for every band).
    pub fn chirp_len(&self) -> usize {
        self.bands.first().map_or(0, |b| b.n_samples)
    }

    /// Frames spanning `seconds` of signal.
    pub fn frames_for(&self, seconds: f64) -> usize {
        (seconds * self.frames_per_second as f64).round() as usize
    }

    /// The fixed channel order of every echo profile: (mic-left, band 0),
    /// (mic-left, band 1), (mic-right, band 0), (mic-right, band 1).
    pub fn channel_layout(&self) -> Vec<ChannelId> {
        Microphone::ALL
            .iter()
            .flat_map(|&mic| (0..self.bands.len()).map(move |band| ChannelId { mic, band }))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0) || !(self.speed_of_sound > 0.0) {
            return Err(Error::config("sample rate and speed of sound must be positive"));
        }
        if self.bands.is_empty() {
            return Err(Error::config("at least one transmit band is required"));
        }
        let n = self.bands[0].n_samples;
        for (i, band) in self.bands.iter().enumerate() {
            band.validate()?;
            if band.sample_rate != self.sample_rate {
                return Err(Error::config(format!("band {i} sample rate differs from the sensing sample rate")));
            }
            if band.n_samples != n {
                return Err(Error::config("all bands must share one chirp length"));
            }
        }
        let mut edges: Vec<(f64, f64)> = self.bands.iter().map(|b| (b.f_start, b.f_end)).collect();
        edges.sort_by(|a, b| a.0.total_cmp(&b.0));
        if edges.windows(2).any(|w| w[1].0 < w[0].1) {
            return Err(Error::config("transmit bands overlap"));
        }
        if self.range_bins_full == 0 || self.range_bins_full > n {
            return Err(Error::config(format!(
                "range_bins_full must be in 1..={n} (one chirp period of lags)"
            )));
        }
        if self.profile_bins == 0 || self.profile_bins > self.range_bins_full {
            return Err(Error::config("profile_bins must be in 1..=range_bins_full"));
        }
        let periods_per_second = (self.sample_rate / n as f64).floor() as usize;
        if self.frames_per_second == 0 || self.frames_per_second > periods_per_second {
            return Err(Error::config(format!(
                "frames_per_second must be in 1..={periods_per_second} for {n}-sample chirps"
            )));
        }
        if self.filter_order == 0 || self.filter_order % 2 != 0 {
            return Err(Error::config("filter_order must be a positive even number"));
        }
        Ok(())
    }
}

/// Multi-channel raw microphone samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioStream {
    /// One sequence per microphone, all of equal length.
    pub channels: Vec<Vec<f32>>,
    pub sample_rate: f64,
}

impl AudioStream {
    pub fn new(channels: Vec<Vec<f32>>, sample_rate: f64) -> Result<Self> {
        if let Some(first) = channels.first() {
            if channels.iter().any(|c| c.len() != first.len()) {
                return Err(Error::argument("audio channels differ in length"));
            }
        }
        Ok(Self { channels, sample_rate })
    }

    pub fn silent(n_channels: usize, n_samples: usize, sample_rate: f64) -> Self {
        Self {
            channels: vec![vec![0.0; n_samples]; n_channels],
            sample_rate,
        }
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }
}
