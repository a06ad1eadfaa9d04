//! Episode-level dietary analytics over per-second label timelines.

use serde::{Deserialize, Serialize};

use crate::classifier::FramePredictions;
use crate::error::{Error, Result};
use crate::labels::{ActivityClass, FrameTimeline};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentConfig {
    pub segment_len_s: usize,
    /// Fraction of intake/chewing seconds at which a predicted segment counts
    /// as eating.
    pub majority_fraction: f64,
    /// Chewing seconds needed after an intake second to confirm it.
    pub chew_confirm_count: usize,
    /// Seconds after the intake second searched for confirming chews.
    pub chew_confirm_horizon_s: usize,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            segment_len_s: 270,
            majority_fraction: 0.5,
            chew_confirm_count: 2,
            chew_confirm_horizon_s: 3,
        }
    }
}

impl SegmentConfig {
    /// Confirmed intakes that make a ground-truth segment an eating episode:
    /// `(t_w + 20) / 5` with `t_w` the segment length in minutes, rounded.
    pub fn intake_threshold(&self) -> usize {
        let t_w = self.segment_len_s as f64 / 60.0;
        ((t_w + 20.0) / 5.0).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.segment_len_s == 0 {
            return Err(Error::config("segment length must be positive"));
        }
        if !(0.0..=1.0).contains(&self.majority_fraction) {
            return Err(Error::config("majority_fraction must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Per-second timeline from overlapping window predictions. Each second takes
/// the label of the most confident window overlapping it (the earlier window
/// on ties); seconds no window touches are null.
pub fn to_frame_timeline(preds: &FramePredictions) -> FrameTimeline {
    const EPS: f64 = 1e-9;
    let w = preds.window_s;
    let end = preds
        .windows
        .iter()
        .map(|p| p.start_time_s + w)
        .fold(0.0f64, f64::max);
    let n = (end - EPS).ceil().max(0.0) as usize;
    let mut best: Vec<Option<(f64, ActivityClass)>> = vec![None; n];
    for p in &preds.windows {
        let first = (p.start_time_s + EPS).floor().max(0.0) as usize;
        let last = ((p.start_time_s + w - EPS).ceil() as usize).min(n);
        for slot in &mut best[first.min(n)..last] {
            if slot.map_or(true, |(c, _)| p.confidence() > c) {
                *slot = Some((p.confidence(), p.label));
            }
        }
    }
    FrameTimeline::new(best.into_iter().map(|b| b.map_or(ActivityClass::Null, |(_, l)| l)).collect())
}

/// Consecutive full-length segments; a trailing partial segment is dropped.
pub fn segment<'a>(timeline: &'a FrameTimeline, cfg: &SegmentConfig) -> Vec<&'a [ActivityClass]> {
    if cfg.segment_len_s == 0 {
        return Vec::new();
    }
    timeline.labels.chunks_exact(cfg.segment_len_s).collect()
}

/// Confirmed intakes in `slice`, scanning left to right. An intake second is
/// confirmed when at least `chew_confirm_count` not-yet-used chewing seconds
/// fall within the `chew_confirm_horizon_s` seconds after it; the earliest
/// such chews are then used up, so one chewing bout cannot confirm two
/// intakes.
pub fn count_intakes(slice: &[ActivityClass], cfg: &SegmentConfig) -> usize {
    let mut used = vec![false; slice.len()];
    let mut count = 0;
    for i in 0..slice.len() {
        if slice[i] != ActivityClass::FoodIntake {
            continue;
        }
        let end = (i + cfg.chew_confirm_horizon_s).min(slice.len() - 1);
        let chews: Vec<usize> = (i + 1..=end)
            .filter(|&j| slice[j] == ActivityClass::Chewing && !used[j])
            .take(cfg.chew_confirm_count)
            .collect();
        if chews.len() >= cfg.chew_confirm_count {
            count += 1;
            for j in chews {
                used[j] = true;
            }
        }
    }
    count
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeMode {
    /// Majority of intake/chewing seconds.
    Predicted,
    /// At least [`SegmentConfig::intake_threshold`] confirmed intakes.
    Truth,
}

pub fn detect_eating_episode(slice: &[ActivityClass], cfg: &SegmentConfig, mode: EpisodeMode) -> bool {
    match mode {
        EpisodeMode::Predicted => {
            if slice.is_empty() {
                return false;
            }
            let eating = slice.iter().filter(|l| l.is_eating()).count();
            eating as f64 / slice.len() as f64 >= cfg.majority_fraction
        }
        EpisodeMode::Truth => count_intakes(slice, cfg) >= cfg.intake_threshold(),
    }
}

pub fn chewing_seconds(slice: &[ActivityClass]) -> usize {
    slice.iter().filter(|&&l| l == ActivityClass::Chewing).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub index: usize,
    pub is_eating_pred: bool,
    pub is_eating_truth: bool,
    pub intake_count_pred: usize,
    pub intake_count_truth: usize,
    pub chew_seconds_pred: usize,
    pub chew_seconds_truth: usize,
}

/// Error rates are `None` when their denominator is zero (e.g. FNR with no
/// true eating segments).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub segment_len_s: usize,
    pub intake_threshold: usize,
    pub segments: Vec<SegmentReport>,
    pub truth_eating_segments: usize,
    pub truth_non_eating_segments: usize,
    pub fnr: Option<f64>,
    pub fpr: Option<f64>,
    pub mae_intakes_eating: Option<f64>,
    pub mae_intakes_non_eating: Option<f64>,
    pub mae_chew_seconds_eating: Option<f64>,
    pub mae_chew_seconds_non_eating: Option<f64>,
}

fn mean_abs(pairs: impl Iterator<Item = (usize, usize)>) -> Option<f64> {
    let (sum, n) = pairs.fold((0usize, 0usize), |(s, n), (a, b)| (s + a.abs_diff(b), n + 1));
    (n > 0).then(|| sum as f64 / n as f64)
}

pub fn build_report(pred: &FrameTimeline, truth: &FrameTimeline, cfg: &SegmentConfig) -> Result<EpisodeReport> {
    cfg.validate()?;
    if pred.len() != truth.len() {
        return Err(Error::argument(format!(
            "predicted timeline has {} s, truth {} s",
            pred.len(),
            truth.len()
        )));
    }
    let segments: Vec<SegmentReport> = segment(pred, cfg)
        .into_iter()
        .zip(segment(truth, cfg))
        .enumerate()
        .map(|(index, (p, t))| SegmentReport {
            index,
            is_eating_pred: detect_eating_episode(p, cfg, EpisodeMode::Predicted),
            is_eating_truth: detect_eating_episode(t, cfg, EpisodeMode::Truth),
            intake_count_pred: count_intakes(p, cfg),
            intake_count_truth: count_intakes(t, cfg),
            chew_seconds_pred: chewing_seconds(p),
            chew_seconds_truth: chewing_seconds(t),
        })
        .collect();

    let eating = || segments.iter().filter(|s| s.is_eating_truth);
    let non_eating = || segments.iter().filter(|s| !s.is_eating_truth);
    let n_eating = eating().count();
    let n_non = non_eating().count();
    let missed = eating().filter(|s| !s.is_eating_pred).count();
    let false_alarms = non_eating().filter(|s| s.is_eating_pred).count();
    Ok(EpisodeReport {
        segment_len_s: cfg.segment_len_s,
        intake_threshold: cfg.intake_threshold(),
        truth_eating_segments: n_eating,
        truth_non_eating_segments: n_non,
        fnr: (n_eating > 0).then(|| missed as f64 / n_eating as f64),
        fpr: (n_non > 0).then(|| false_alarms as f64 / n_non as f64),
        mae_intakes_eating: mean_abs(eating().map(|s| (s.intake_count_pred, s.intake_count_truth))),
        mae_intakes_non_eating: mean_abs(non_eating().map(|s| (s.intake_count_pred, s.intake_count_truth))),
        mae_chew_seconds_eating: mean_abs(eating().map(|s| (s.chew_seconds_pred, s.chew_seconds_truth))),
        mae_chew_seconds_non_eating: mean_abs(non_eating().map(|s| (s.chew_seconds_pred, s.chew_seconds_truth))),
        segments,
    })
}
