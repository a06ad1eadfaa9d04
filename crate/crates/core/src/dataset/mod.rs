//! Labeled sliding windows over differential echo profiles.

pub mod container;
mod augment;
mod split;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{ActivityClass, FrameTimeline};
use crate::signal::DifferentialEchoProfile;

pub use augment::{augment, AugmentConfig, AugmentLog};
pub use container::{load_dataset, read_dataset, save_dataset, write_dataset, DatasetFile};
pub use split::{split, split_indices, validation_holdout, SplitManifest};

/// Window geometry. The default is 2 s windows with 50% overlap over the
/// nearest 150 range bins, i.e. 4 × 150 × 166 tensors at 83 frames/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub window_s: f64,
    pub overlap: f64,
    pub n_bins: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_s: 2.0,
            overlap: 0.5,
            n_bins: 150,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_s > 0.0 && self.window_s.is_finite()) {
            return Err(Error::config(format!("window length {} s must be positive", self.window_s)));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::config(format!("overlap {} must be in [0, 1)", self.overlap)));
        }
        if self.n_bins == 0 {
            return Err(Error::config("n_bins must be positive"));
        }
        Ok(())
    }

    pub fn window_frames(&self, frame_rate: f64) -> usize {
        (self.window_s * frame_rate).round() as usize
    }

    pub fn hop_frames(&self, frame_rate: f64) -> usize {
        ((self.window_s * (1.0 - self.overlap) * frame_rate).round() as usize).max(1)
    }

    /// Tensor shape `[channels, bins, frames]` for a profile with `n_channels`.
    pub fn shape(&self, n_channels: usize, frame_rate: f64) -> [usize; 3] {
        [n_channels, self.n_bins, self.window_frames(frame_rate)]
    }
}

/// An unlabeled window cut from a differential profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// Row-major `[channel][bin][frame]`.
    pub tensor: Vec<f32>,
    pub shape: [usize; 3],
    /// Index of the first differential frame.
    pub start_frame: usize,
    pub frame_rate: f64,
}

impl Window {
    pub fn start_time_s(&self) -> f64 {
        self.start_frame as f64 / self.frame_rate
    }
}

/// A window with its class label and the scene ("participant") it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedSample {
    pub tensor: Vec<f32>,
    pub shape: [usize; 3],
    pub label: ActivityClass,
    pub start_time_s: f64,
    pub group: u32,
}

/// Number of windows [`slice_windows`] yields for a differential profile with
/// `diff_frames` frames.
///
/// Counting is done on the underlying echo profile (`diff_frames + 1` frames),
/// so an exactly 2 s recording yields one 2 s window. A window that reaches
/// the final echo frame is one differential frame short and is zero-padded.
pub fn window_count(diff_frames: usize, window_frames: usize, hop_frames: usize) -> usize {
    let echo_frames = diff_frames + 1;
    if window_frames == 0 || hop_frames == 0 || echo_frames < window_frames {
        0
    } else {
        (echo_frames - window_frames) / hop_frames + 1
    }
}

/// Cuts `profile` into overlapping windows cropped to the nearest `cfg.n_bins`
/// range bins. Trailing partial windows are dropped; a profile shorter than
/// one window gives no windows.
pub fn slice_windows(profile: &DifferentialEchoProfile, cfg: &WindowConfig) -> Result<Vec<Window>> {
    cfg.validate()?;
    if cfg.n_bins > profile.n_bins {
        return Err(Error::argument(format!(
            "cannot crop {} bins from a {}-bin profile",
            cfg.n_bins, profile.n_bins
        )));
    }
    let fps = profile.frame_rate;
    let win = cfg.window_frames(fps);
    let hop = cfg.hop_frames(fps);
    let count = window_count(profile.n_frames, win, hop);
    let shape = [profile.n_channels, cfg.n_bins, win];
    let windows = (0..count)
        .map(|i| {
            let start = i * hop;
            let avail = profile.n_frames.saturating_sub(start).min(win);
            let mut tensor = vec![0.0f32; shape.iter().product()];
            for c in 0..profile.n_channels {
                for r in 0..cfg.n_bins {
                    let src = &profile.row(c, r)[start..start + avail];
                    let dst = &mut tensor[(c * cfg.n_bins + r) * win..][..avail];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d = s as f32;
                    }
                }
            }
            Window {
                tensor,
                shape,
                start_frame: start,
                frame_rate: fps,
            }
        })
        .collect();
    Ok(windows)
}

/// Label for frames `[start, start + len)` at `frame_rate`: the class covering
/// the most frames, ties broken by [`ActivityClass::tie_break_priority`].
pub fn window_label(timeline: &FrameTimeline, start: usize, len: usize, frame_rate: f64) -> Result<ActivityClass> {
    let fps = frame_rate.round() as usize;
    if fps == 0 || len == 0 {
        return Err(Error::argument("window needs a positive frame rate and length"));
    }
    let last_second = (start + len - 1) / fps;
    if last_second >= timeline.len() {
        return Err(Error::Coverage(format!(
            "window at frame {start} reaches second {last_second}, timeline has {} s",
            timeline.len()
        )));
    }
    let mut counts = [0usize; crate::NUM_CLASSES];
    for f in start..start + len {
        counts[timeline.labels[f / fps].index()] += 1;
    }
    let best = ActivityClass::ALL
        .into_iter()
        .max_by_key(|c| (counts[c.index()], c.tie_break_priority()))
        .expect("six classes");
    Ok(best)
}

/// Attaches labels from a per-second timeline to windows of one group.
pub fn assign_labels(windows: Vec<Window>, timeline: &FrameTimeline, group: u32) -> Result<Vec<WindowedSample>> {
    windows
        .into_iter()
        .map(|w| {
            let label = window_label(timeline, w.start_frame, w.shape[2], w.frame_rate)?;
            Ok(WindowedSample {
                start_time_s: w.start_time_s(),
                tensor: w.tensor,
                shape: w.shape,
                label,
                group,
            })
        })
        .collect()
}

/// Class frequencies of `samples`, indexed by class.
pub fn class_counts(samples: &[WindowedSample]) -> [usize; crate::NUM_CLASSES] {
    let mut counts = [0; crate::NUM_CLASSES];
    for s in samples {
        counts[s.label.index()] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{ProfileTensor, SensingConfig};
    use proptest::prelude::*;
    use ActivityClass::*;

    fn diff_profile(seconds: usize, n_bins: usize) -> DifferentialEchoProfile {
        let cfg = SensingConfig::default();
        let n_frames = seconds * 83 - 1;
        let mut t = ProfileTensor::zeros(4, n_bins, n_frames, cfg.bin_resolution_m(), 83.0, cfg.channel_layout());
        for c in 0..4 {
            for r in 0..n_bins {
                for f in 0..n_frames {
                    let i = t.index(c, r, f);
                    t.data[i] = (c * 1_000_000 + r * 1000) as f64 + f as f64 * 1e-3;
                }
            }
        }
        DifferentialEchoProfile(t)
    }

    #[test]
    fn ten_seconds_gives_nine_windows_at_whole_seconds() {
        let p = diff_profile(10, 200);
        let w = slice_windows(&p, &WindowConfig::default()).unwrap();
        assert_eq!(w.len(), 9);
        let starts: Vec<f64> = w.iter().map(|w| w.start_time_s()).collect();
        assert_eq!(starts, (0..9).map(|s| s as f64).collect::<Vec<_>>());
        assert_eq!(w[0].shape, [4, 150, 166]);
        assert_eq!(w[0].tensor.len(), 4 * 150 * 166);
    }

    #[test]
    fn exact_two_seconds_gives_one_padded_window() {
        let p = diff_profile(2, 150);
        let w = slice_windows(&p, &WindowConfig::default()).unwrap();
        assert_eq!(w.len(), 1);
        // Frame 165 does not exist in a 165-frame differential profile.
        assert_eq!(w[0].tensor[165], 0.0);
        assert_eq!(w[0].tensor[164], p.get(0, 0, 164) as f32);
    }

    #[test]
    fn window_content_is_the_cropped_slice() {
        let p = diff_profile(5, 200);
        let w = slice_windows(&p, &WindowConfig::default()).unwrap();
        let win = &w[2];
        for (c, r, f) in [(0, 0, 0), (3, 149, 165), (2, 77, 40)] {
            assert_eq!(win.tensor[(c * 150 + r) * 166 + f], p.get(c, r, 166 + f) as f32);
        }
    }

    #[test]
    fn short_profile_gives_no_windows_and_bad_crop_errors() {
        let p = diff_profile(1, 150);
        assert!(slice_windows(&p, &WindowConfig::default()).unwrap().is_empty());
        let cfg = WindowConfig {
            n_bins: 151,
            ..Default::default()
        };
        assert!(matches!(slice_windows(&p, &cfg), Err(Error::Argument(_))));
    }

    #[test]
    fn majority_with_priority_tie_break() {
        let tl = FrameTimeline::new(vec![Chewing, Chewing, FoodIntake, Chewing, Null, Talking, Talking, Talking]);
        let label = |s: usize| window_label(&tl, s * 83, 166, 83.0).unwrap();
        assert_eq!(label(0), Chewing);
        assert_eq!(label(1), FoodIntake);
        assert_eq!(label(2), FoodIntake);
        assert_eq!(label(4), Talking);
        // Three-second window: two talking seconds outvote one null.
        assert_eq!(window_label(&tl, 4 * 83, 249, 83.0).unwrap(), Talking);
        assert!(matches!(window_label(&tl, 7 * 83, 166, 83.0), Err(Error::Coverage(_))));
    }

    #[test]
    fn priority_order_is_total_over_pairs() {
        let order = [FoodIntake, Drinking, Chewing, FaceTouch, Talking, Null];
        for (i, &hi) in order.iter().enumerate() {
            for &lo in &order[i + 1..] {
                for tl in [vec![hi, lo], vec![lo, hi]] {
                    let tl = FrameTimeline::new(tl);
                    assert_eq!(window_label(&tl, 0, 166, 83.0).unwrap(), hi);
                }
            }
        }
    }

    #[test]
    fn assign_labels_matches_window_starts() {
        let p = diff_profile(4, 150);
        let tl = FrameTimeline::new(vec![Null, Talking, Talking, Drinking]);
        let samples = assign_labels(slice_windows(&p, &WindowConfig::default()).unwrap(), &tl, 7).unwrap();
        let labels: Vec<_> = samples.iter().map(|s| s.label).collect();
        assert_eq!(labels, vec![Talking, Talking, Drinking]);
        assert!(samples.iter().all(|s| s.group == 7));
        let short = FrameTimeline::new(vec![Null, Talking, Talking]);
        let windows = slice_windows(&p, &WindowConfig::default()).unwrap();
        assert!(matches!(assign_labels(windows, &short, 0), Err(Error::Coverage(_))));
    }

    proptest! {
        #[test]
        fn window_count_matches_enumeration(seconds in 0usize..40, win in 1usize..300, hop in 1usize..200) {
            let diff_frames = (seconds * 83).saturating_sub(1);
            let mut n = 0;
            let mut start = 0;
            while start + win <= diff_frames + 1 {
                n += 1;
                start += hop;
            }
            prop_assert_eq!(window_count(diff_frames, win, hop), n);
        }

        #[test]
        fn default_window_count_formula(seconds in 2usize..200) {
            prop_assert_eq!(window_count(seconds * 83 - 1, 166, 83), seconds - 2 + 1);
        }

        #[test]
        fn labels_permute_with_windows(seed in 0u64..1000) {
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
            let labels: Vec<ActivityClass> = (0..12)
                .map(|_| ActivityClass::ALL[rand::Rng::gen_range(&mut rng, 0..6)])
                .collect();
            let tl = FrameTimeline::new(labels);
            let starts: Vec<usize> = (0..11).map(|s| s * 83).collect();
            let forward: Vec<_> = starts.iter().map(|&s| window_label(&tl, s, 166, 83.0).unwrap()).collect();
            let backward: Vec<_> = starts.iter().rev().map(|&s| window_label(&tl, s, 166, 83.0).unwrap()).collect();
            let mut reversed = backward.clone();
            reversed.reverse();
            prop_assert_eq!(forward, reversed);
        }
    }
}
