use std::ops::{Deref, DerefMut};

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::{generate_chirp, AudioStream, BandpassFilter, ChannelId, CircularCorrelator, EchoMagnitude, Microphone, SensingConfig};
use crate::error::{Error, Result};

/// Channel × range-bin × frame tensor shared by echo and differential profiles.
///
/// `data` is row-major: index `(c * n_bins + r) * n_frames + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileTensor {
    pub data: Vec<f64>,
    pub n_channels: usize,
    pub n_bins: usize,
    pub n_frames: usize,
    pub bin_resolution_m: f64,
    pub frame_rate: f64,
    pub channel_layout: Vec<ChannelId>,
}

impl ProfileTensor {
    pub fn zeros(
        n_channels: usize,
        n_bins: usize,
        n_frames: usize,
        bin_resolution_m: f64,
        frame_rate: f64,
        channel_layout: Vec<ChannelId>,
    ) -> Self {
        Self {
            data: vec![0.0; n_channels * n_bins * n_frames],
            n_channels,
            n_bins,
            n_frames,
            bin_resolution_m,
            frame_rate,
            channel_layout,
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.n_channels, self.n_bins, self.n_frames]
    }

    #[inline]
    pub fn index(&self, channel: usize, bin: usize, frame: usize) -> usize {
        (channel * self.n_bins + bin) * self.n_frames + frame
    }

    #[inline]
    pub fn get(&self, channel: usize, bin: usize, frame: usize) -> f64 {
        self.data[self.index(channel, bin, frame)]
    }

    /// The time series of one range bin.
    pub fn row(&self, channel: usize, bin: usize) -> &[f64] {
        let start = self.index(channel, bin, 0);
        &self.data[start..start + self.n_frames]
    }

    /// One frame (distance profile) of one channel.
    pub fn column(&self, channel: usize, frame: usize) -> Vec<f64> {
        (0..self.n_bins).map(|r| self.get(channel, r, frame)).collect()
    }

    /// Range bin with the largest value in one frame.
    pub fn peak_bin(&self, channel: usize, frame: usize) -> usize {
        (0..self.n_bins)
            .max_by(|&a, &b| self.get(channel, a, frame).total_cmp(&self.get(channel, b, frame)))
            .unwrap_or(0)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Duration in seconds covered by the frames.
    pub fn duration_s(&self) -> f64 {
        self.n_frames as f64 / self.frame_rate
    }

    fn cropped(&self, n_bins: usize) -> Result<Self> {
        if n_bins == 0 || n_bins > self.n_bins {
            return Err(Error::argument(format!(
                "cannot crop {} range bins to {n_bins}",
                self.n_bins
            )));
        }
        let mut data = Vec::with_capacity(self.n_channels * n_bins * self.n_frames);
        for c in 0..self.n_channels {
            let start = self.index(c, 0, 0);
            data.extend_from_slice(&self.data[start..start + n_bins * self.n_frames]);
        }
        Ok(Self {
            data,
            n_bins,
            channel_layout: self.channel_layout.clone(),
            ..*self
        })
    }
}

/// Magnitude of the transmit/receive correlation per chirp period.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoProfile(pub ProfileTensor);

/// First difference of an [`EchoProfile`] along time; one frame shorter.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialEchoProfile(pub ProfileTensor);

macro_rules! tensor_newtype {
    ($t:ty) => {
        impl Deref for $t {
            type Target = ProfileTensor;
            fn deref(&self) -> &ProfileTensor {
                &self.0
            }
        }
        impl DerefMut for $t {
            fn deref_mut(&mut self) -> &mut ProfileTensor {
                &mut self.0
            }
        }
    };
}
tensor_newtype!(EchoProfile);
tensor_newtype!(DifferentialEchoProfile);

/// How consecutive echo frames are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifferenceMode {
    /// `e[t+1] - e[t]`, keeping approach/retreat direction.
    #[default]
    Signed,
    /// `|e[t+1] - e[t]|`.
    Magnitude,
}

/// First sample of echo frame `frame`.
///
/// Each whole second contributes `frames_per_second` consecutive chirp
/// periods, starting at the first period boundary inside that second. Periods
/// left over at the end of a second are skipped, so frame `83 * s` always lies
/// within second `s` and labels never drift against the frames.
pub fn frame_start_sample(frame: usize, cfg: &SensingConfig) -> usize {
    let fps = cfg.frames_per_second;
    let n = cfg.chirp_len();
    let second = frame / fps;
    let within = frame % fps;
    let second_start = (second as f64 * cfg.sample_rate).round() as usize;
    let first_period = second_start.div_ceil(n);
    (first_period + within) * n
}

fn frame_count(len: usize, cfg: &SensingConfig) -> usize {
    let n = cfg.chirp_len();
    let mut frames = (len as f64 * cfg.frames_per_second as f64 / cfg.sample_rate).floor() as usize;
    while frames > 0 && frame_start_sample(frames - 1, cfg) + n > len {
        frames -= 1;
    }
    frames
}

/// Builds the 4-channel echo profile of a two-microphone stream.
///
/// Per (microphone, band): bandpass the microphone, then correlate each
/// chirp-period frame against the band's matched template and keep the
/// magnitude of the first `cfg.profile_bins` lags. The template is the
/// steady-state filter response to the periodic chirp train, so the filter's
/// group delay cancels and lag `r` is one-way distance `r * c / (2 fs)`.
pub fn compute_echo_profile(stream: &AudioStream, cfg: &SensingConfig) -> Result<EchoProfile> {
    cfg.validate()?;
    if stream.sample_rate != cfg.sample_rate {
        return Err(Error::argument(format!(
            "stream sampled at {} Hz, sensing config expects {} Hz",
            stream.sample_rate, cfg.sample_rate
        )));
    }
    if stream.n_channels() != Microphone::ALL.len() {
        return Err(Error::argument(format!(
            "expected {} microphone channels, found {}",
            Microphone::ALL.len(),
            stream.n_channels()
        )));
    }
    let n = cfg.chirp_len();
    if stream.len() < n {
        return Err(Error::argument(format!(
            "stream of {} samples is shorter than one {n}-sample chirp",
            stream.len()
        )));
    }

    let chains = cfg
        .bands
        .iter()
        .map(|band| BandChain::new(band, cfg))
        .collect::<Result<Vec<_>>>()?;
    let layout = cfg.channel_layout();
    let n_frames = frame_count(stream.len(), cfg);
    let n_bins = cfg.profile_bins;

    let blocks: Vec<Vec<f64>> = layout
        .par_iter()
        .map(|ch| chains[ch.band].profile_block(&stream.channels[ch.mic.index()], n_frames, n_bins, cfg))
        .collect();

    let mut tensor = ProfileTensor::zeros(
        layout.len(),
        n_bins,
        n_frames,
        cfg.bin_resolution_m(),
        cfg.frames_per_second as f64,
        layout,
    );
    tensor.data = blocks.concat();
    Ok(EchoProfile(tensor))
}

const PRE_ROLL_PERIODS: usize = 4;

struct BandChain {
    filter: BandpassFilter,
    correlator: CircularCorrelator,
}

impl BandChain {
    fn new(band: &super::ChirpParams, cfg: &SensingConfig) -> Result<Self> {
        let filter = BandpassFilter::butterworth(band.f_start, band.f_end, cfg.filter_order, cfg.sample_rate)?;
        let chirp = generate_chirp(band)?;
        let n = chirp.len();
        // Run the filter over a few periods of the train; the last period is
        // its periodic steady state.
        let periods = 6;
        let train: Vec<f64> = chirp.iter().copied().cycle().take(periods * n).collect();
        let filtered = filter.process(&train);
        let template = &filtered[(periods - 1) * n..];
        let correlator = CircularCorrelator::new(template)?;
        Ok(Self { filter, correlator })
    }

    /// `[n_bins][n_frames]` block for one microphone.
    fn profile_block(&self, samples: &[f32], n_frames: usize, n_bins: usize, cfg: &SensingConfig) -> Vec<f64> {
        let n = self.correlator.len();
        let mut block = vec![0.0; n_bins * n_frames];
        let mut runner = FilterRunner::new(&self.filter);
        // The speakers transmit continuously, so the recording is preceded by
        // more of the same train. Repeating the first period stands in for
        // that history; the slowest pole of the upper band has radius ≈ 0.975,
        // so four periods leave the filter in steady state at sample 0.
        for _ in 0..PRE_ROLL_PERIODS {
            for &s in &samples[..n] {
                runner.push(f64::from(s));
            }
        }
        let mut frame = vec![0.0; n];
        let mut scratch = vec![Complex::new(0.0, 0.0); n];
        let mut lags = vec![0.0; n_bins];
        let mut pos = 0;
        for t in 0..n_frames {
            let start = frame_start_sample(t, cfg);
            while pos < start {
                runner.push(samples[pos] as f64);
                pos += 1;
            }
            for slot in frame.iter_mut() {
                *slot = runner.push(samples[pos] as f64);
                pos += 1;
            }
            match cfg.magnitude {
                EchoMagnitude::Envelope => self.correlator.envelope_into(&frame, &mut scratch, &mut lags),
                EchoMagnitude::Rectified => {
                    self.correlator.correlate_into(&frame, &mut scratch, &mut lags);
                    lags.iter_mut().for_each(|v| *v = v.abs());
                }
            }
            for (r, v) in lags.iter().enumerate() {
                block[r * n_frames + t] = *v;
            }
        }
        block
    }
}

/// Sample-at-a-time evaluation of a [`BandpassFilter`]; numerically identical
/// to [`BandpassFilter::process`].
struct FilterRunner<'a> {
    filter: &'a BandpassFilter,
    state: Vec<[f64; 2]>,
}

impl<'a> FilterRunner<'a> {
    fn new(filter: &'a BandpassFilter) -> Self {
        Self {
            filter,
            state: vec![[0.0; 2]; filter.sections.len()],
        }
    }

    #[inline]
    fn push(&mut self, mut x: f64) -> f64 {
        for (sec, st) in self.filter.sections.iter().zip(self.state.iter_mut()) {
            let y = sec.b[0] * x + st[0];
            st[0] = sec.b[1] * x - sec.a[1] * y + st[1];
            st[1] = sec.b[2] * x - sec.a[2] * y;
            x = y;
        }
        x
    }
}

/// Signed first difference along time.
pub fn differentiate(echo: &EchoProfile) -> Result<DifferentialEchoProfile> {
    differentiate_with(echo, DifferenceMode::Signed)
}

pub fn differentiate_with(echo: &EchoProfile, mode: DifferenceMode) -> Result<DifferentialEchoProfile> {
    if echo.n_frames < 2 {
        return Err(Error::argument(format!(
            "differentiation needs at least 2 frames, profile has {}",
            echo.n_frames
        )));
    }
    let out_frames = echo.n_frames - 1;
    let mut data = Vec::with_capacity(echo.n_channels * echo.n_bins * out_frames);
    for row in echo.data.chunks_exact(echo.n_frames) {
        data.extend(row.windows(2).map(|w| {
            let d = w[1] - w[0];
            match mode {
                DifferenceMode::Signed => d,
                DifferenceMode::Magnitude => d.abs(),
            }
        }));
    }
    Ok(DifferentialEchoProfile(ProfileTensor {
        data,
        n_frames: out_frames,
        channel_layout: echo.channel_layout.clone(),
        ..echo.0
    }))
}

/// Keeps range bins `0..n_bins`.
pub fn crop_range(profile: &DifferentialEchoProfile, n_bins: usize) -> Result<DifferentialEchoProfile> {
    profile.cropped(n_bins).map(DifferentialEchoProfile)
}

impl EchoProfile {
    pub fn crop_range(&self, n_bins: usize) -> Result<EchoProfile> {
        self.cropped(n_bins).map(EchoProfile)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::generate_chirp;

    fn cfg() -> SensingConfig {
        SensingConfig::default()
    }

    /// Both microphones hear both chirp trains delayed by `delay` whole samples.
    fn delayed_trains(delay: usize, seconds: f64) -> AudioStream {
        let cfg = cfg();
        let len = (seconds * cfg.sample_rate) as usize;
        let chirps: Vec<Vec<f64>> = cfg.bands.iter().map(|b| generate_chirp(b).unwrap()).collect();
        let n = cfg.chirp_len();
        let mic: Vec<f32> = (0..len)
            .map(|k| {
                let idx = (k + n * 1000 - delay) % n;
                chirps.iter().map(|c| c[idx]).sum::<f64>() as f32
            })
            .collect();
        AudioStream::new(vec![mic.clone(), mic], cfg.sample_rate).unwrap()
    }

    #[test]
    fn one_second_gives_83_frames() {
        let echo = compute_echo_profile(&delayed_trains(100, 1.0), &cfg()).unwrap();
        assert_eq!(echo.shape(), [4, 600, 83]);
        assert_eq!(echo.frame_rate, 83.0);
        assert_eq!(echo.bin_resolution_m, 0.00343);
    }

    #[test]
    fn frame_schedule_restarts_each_second() {
        let c = cfg();
        assert_eq!(frame_start_sample(0, &c), 0);
        assert_eq!(frame_start_sample(82, &c), 82 * 600);
        // 50_000 / 600 = 83.33: second 1 starts at period 84.
        assert_eq!(frame_start_sample(83, &c), 84 * 600);
        assert_eq!(frame_start_sample(166, &c), 167 * 600);
        assert_eq!(frame_count(50_000, &c), 83);
        assert_eq!(frame_count(75_000, &c), 124);
        assert_eq!(frame_count(600, &c), 0);
    }

    #[test]
    fn delayed_train_peaks_at_its_delay() {
        let echo = compute_echo_profile(&delayed_trains(100, 0.5), &cfg()).unwrap();
        for c in 0..4 {
            for t in [0, 10, 40] {
                let peak = echo.peak_bin(c, t);
                assert!(peak.abs_diff(100) <= 1, "channel {c} frame {t}: {peak}");
            }
        }
    }

    #[test]
    fn periodic_input_gives_identical_frames_from_the_start() {
        let echo = compute_echo_profile(&delayed_trains(250, 0.2), &cfg()).unwrap();
        let scale = echo.max_abs();
        for c in 0..4 {
            let first = echo.column(c, 0);
            for t in 1..echo.n_frames {
                let worst = first
                    .iter()
                    .zip(echo.column(c, t))
                    .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
                assert!(worst <= 1e-12 * scale, "channel {c} frame {t}: {worst}");
            }
        }
    }

    #[test]
    fn silent_stream_gives_zero_profile() {
        let stream = AudioStream::silent(2, 50_000, 50_000.0);
        let echo = compute_echo_profile(&stream, &cfg()).unwrap();
        assert!(echo.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn profile_scales_with_input() {
        let stream = delayed_trains(37, 0.3);
        let base = compute_echo_profile(&stream, &cfg()).unwrap();
        let doubled = AudioStream::new(
            stream.channels.iter().map(|c| c.iter().map(|v| v * 2.0).collect()).collect(),
            stream.sample_rate,
        )
        .unwrap();
        let scaled = compute_echo_profile(&doubled, &cfg()).unwrap();
        for (a, b) in base.data.iter().zip(&scaled.data) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn short_or_mismatched_streams_rejected() {
        let c = cfg();
        assert!(compute_echo_profile(&AudioStream::silent(2, 599, 50_000.0), &c).is_err());
        assert!(compute_echo_profile(&AudioStream::silent(1, 5000, 50_000.0), &c).is_err());
        assert!(compute_echo_profile(&AudioStream::silent(2, 5000, 48_000.0), &c).is_err());
    }

    #[test]
    fn profile_bins_limits_rows() {
        let mut c = cfg();
        c.profile_bins = 150;
        let full = compute_echo_profile(&delayed_trains(20, 0.2), &cfg()).unwrap();
        let part = compute_echo_profile(&delayed_trains(20, 0.2), &c).unwrap();
        assert_eq!(part.n_bins, 150);
        assert_eq!(full.crop_range(150).unwrap(), part);
    }

    fn synthetic(frames: usize, f: impl Fn(usize, usize, usize) -> f64) -> EchoProfile {
        let mut t = ProfileTensor::zeros(2, 3, frames, 0.00343, 83.0, cfg().channel_layout()[..2].to_vec());
        for c in 0..2 {
            for r in 0..3 {
                for k in 0..frames {
                    let i = t.index(c, r, k);
                    t.data[i] = f(c, r, k);
                }
            }
        }
        EchoProfile(t)
    }

    #[test]
    fn constant_profile_differentiates_to_zero() {
        let echo = synthetic(5, |c, r, _| (c * 10 + r) as f64 + 0.1);
        let d = differentiate(&echo).unwrap();
        assert_eq!(d.n_frames, 4);
        assert!(d.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_changed_column_touches_two_differences() {
        let echo = synthetic(6, |_, _, k| if k == 3 { 5.0 } else { 1.0 });
        let d = differentiate(&echo).unwrap();
        for c in 0..2 {
            for r in 0..3 {
                assert_eq!(d.row(c, r), &[0.0, 0.0, 4.0, -4.0, 0.0]);
            }
        }
        let m = differentiate_with(&echo, DifferenceMode::Magnitude).unwrap();
        assert_eq!(m.row(0, 0), &[0.0, 0.0, 4.0, 4.0, 0.0]);
    }

    #[test]
    fn single_frame_cannot_be_differentiated() {
        assert!(matches!(differentiate(&synthetic(1, |_, _, _| 1.0)), Err(Error::Argument(_))));
    }

    #[test]
    fn crop_keeps_leading_rows() {
        let echo = synthetic(4, |c, r, k| (c * 100 + r * 10 + k) as f64);
        let d = differentiate(&synthetic(4, |c, r, k| ((c * 100 + r * 10) * k) as f64)).unwrap();
        let cropped = crop_range(&d, 2).unwrap();
        assert_eq!(cropped.shape(), [2, 2, 3]);
        assert_eq!(cropped.row(1, 1), d.row(1, 1));
        assert_eq!(crop_range(&d, 3).unwrap(), d);
        assert!(crop_range(&d, 0).is_err());
        assert!(crop_range(&d, 4).is_err());
        assert_eq!(echo.crop_range(1).unwrap().row(1, 0), echo.row(1, 0));
    }
}
