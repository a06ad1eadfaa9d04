//! End-to-end runs over synthetic participants: render, profile, window,
//! train with one participant held out, evaluate, and derive episode reports.

use serde::{Deserialize, Serialize};

use crate::analytics::{build_report, to_frame_timeline, EpisodeReport, SegmentConfig};
use crate::classifier::{predict, train, EpochLog, FramePredictions, Model, TrainConfig};
use crate::dataset::{
    assign_labels, augment, slice_windows, validation_holdout, AugmentConfig, WindowConfig, WindowedSample,
};
use crate::error::{Error, Result};
use crate::labels::{ActivityClass, FrameTimeline};
use crate::metrics::{confusion, macro_f1, ConfusionMatrix, F1Report};
use crate::signal::{compute_echo_profile, differentiate, AudioStream, DifferentialEchoProfile, EchoProfile, SensingConfig};
use crate::sim::{render_scene, synthetic_participant, ParticipantProfile};

/// Echo profile and its time difference for one recording.
pub fn process_audio(stream: &AudioStream, sensing: &SensingConfig) -> Result<(EchoProfile, DifferentialEchoProfile)> {
    let echo = compute_echo_profile(stream, sensing)?;
    let diff = differentiate(&echo)?;
    Ok((echo, diff))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub participants: u32,
    pub participant: ParticipantProfile,
    pub window: WindowConfig,
    /// Applied to the training portion of every fold.
    pub augment: Option<AugmentConfig>,
    pub train: TrainConfig,
    /// Share of each training participant's windows kept for model selection.
    pub validation_fraction: f64,
    pub segment: SegmentConfig,
    pub seed: u64,
    /// Participants to hold out, one fold each; empty means all of them.
    pub holdouts: Vec<u32>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            participants: 3,
            participant: ParticipantProfile::default(),
            window: WindowConfig::default(),
            augment: Some(AugmentConfig::default()),
            train: TrainConfig::default(),
            validation_fraction: 0.1,
            segment: SegmentConfig::default(),
            seed: 0,
            holdouts: Vec::new(),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.participants < 2 {
            return Err(Error::config("leave-one-out needs at least two participants"));
        }
        if let Some(h) = self.holdouts.iter().find(|&&h| h >= self.participants) {
            return Err(Error::config(format!("holdout {h} is not a participant")));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config("validation_fraction must be in [0, 1)"));
        }
        self.window.validate()?;
        self.train.validate()?;
        self.segment.validate()?;
        if let Some(a) = &self.augment {
            a.validate()?;
        }
        Ok(())
    }

    fn fold_ids(&self) -> Vec<u32> {
        if self.holdouts.is_empty() {
            (0..self.participants).collect()
        } else {
            self.holdouts.clone()
        }
    }
}

/// Labeled windows and the per-second truth of one participant.
#[derive(Debug, Clone)]
pub struct ParticipantData {
    pub id: u32,
    pub samples: Vec<WindowedSample>,
    pub truth: FrameTimeline,
}

/// Sensing settings that compute only the range bins the windows use.
pub fn sensing_for(window: &WindowConfig, base: &SensingConfig) -> Result<SensingConfig> {
    if window.n_bins == 0 || window.n_bins > base.range_bins_full {
        return Err(Error::config(format!(
            "window needs {} range bins, sensing provides 1..={}",
            window.n_bins, base.range_bins_full
        )));
    }
    Ok(SensingConfig {
        profile_bins: window.n_bins,
        ..base.clone()
    })
}

/// Renders participant `id` and turns the recording into labeled windows.
pub fn prepare_participant(id: u32, cfg: &BenchmarkConfig) -> Result<ParticipantData> {
    let (mut scene, script) = synthetic_participant(id, cfg.seed, &cfg.participant);
    scene.sensing = sensing_for(&cfg.window, &scene.sensing)?;
    let (audio, truth) = render_scene(&scene, &script)?;
    let (_, diff) = process_audio(&audio, &scene.sensing)?;
    drop(audio);
    let windows = slice_windows(&diff, &cfg.window)?;
    let samples = assign_labels(windows, &truth, id)?;
    Ok(ParticipantData { id, samples, truth })
}

/// Pads with null seconds or truncates so `timeline` has `len` seconds.
pub fn fit_timeline(mut timeline: FrameTimeline, len: usize) -> FrameTimeline {
    timeline.labels.resize(len, ActivityClass::Null);
    timeline
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub holdout: u32,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
    pub confusion: ConfusionMatrix,
    pub f1: F1Report,
    pub episodes: EpisodeReport,
}

/// Everything a fold produces, including the artifacts behind its report.
#[derive(Debug, Clone)]
pub struct FoldOutput {
    pub report: FoldReport,
    pub model: Model,
    pub predictions: FramePredictions,
    pub predicted_timeline: FrameTimeline,
}

/// Trains on every participant but `holdout` and evaluates on `holdout`.
pub fn run_fold(data: &[ParticipantData], holdout: u32, cfg: &BenchmarkConfig) -> Result<FoldOutput> {
    let test = data
        .iter()
        .find(|p| p.id == holdout)
        .ok_or_else(|| Error::argument(format!("no participant {holdout}")))?;
    let pool: Vec<&WindowedSample> = data
        .iter()
        .filter(|p| p.id != holdout)
        .flat_map(|p| &p.samples)
        .collect();
    let groups: Vec<u32> = pool.iter().map(|s| s.group).collect();
    let all: Vec<usize> = (0..pool.len()).collect();
    let (train_idx, val_idx) = validation_holdout(&groups, &all, cfg.validation_fraction, cfg.seed ^ u64::from(holdout))?;
    let mut train_set: Vec<WindowedSample> = train_idx.iter().map(|&i| pool[i].clone()).collect();
    let val_set: Vec<WindowedSample> = val_idx.iter().map(|&i| pool[i].clone()).collect();
    if let Some(a) = &cfg.augment {
        let a = AugmentConfig {
            seed: a.seed ^ u64::from(holdout),
            ..a.clone()
        };
        train_set = augment(train_set, &a)?.0;
    }

    let outcome = train(&train_set, &val_set, &cfg.train)?;
    let n_train = train_set.len();
    drop(train_set);

    let predictions = predict(
        &outcome.model,
        cfg.window.window_s,
        test.samples.iter().map(|s| (s.start_time_s, s.tensor.as_slice())),
    )?;
    let truth: Vec<ActivityClass> = test.samples.iter().map(|s| s.label).collect();
    let cm = confusion(&truth, &predictions.labels())?;
    let f1 = macro_f1(&cm);
    let predicted_timeline = fit_timeline(to_frame_timeline(&predictions), test.truth.len());
    let episodes = build_report(&predicted_timeline, &test.truth, &cfg.segment)?;

    Ok(FoldOutput {
        report: FoldReport {
            holdout,
            n_train,
            n_validation: val_set.len(),
            n_test: test.samples.len(),
            best_epoch: outcome.best_epoch,
            log: outcome.log,
            confusion: cm,
            f1,
            episodes,
        },
        model: outcome.model,
        predictions,
        predicted_timeline,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub folds: Vec<FoldReport>,
    /// Mean and population standard deviation of the per-fold macro-F1.
    pub mean_macro_f1: f64,
    pub std_macro_f1: f64,
    /// Confusion and scores over all held-out windows together.
    pub pooled_confusion: ConfusionMatrix,
    pub pooled_f1: F1Report,
}

/// Summary statistics over finished folds.
pub fn summarize(folds: Vec<FoldReport>) -> Result<BenchmarkReport> {
    if folds.is_empty() {
        return Err(Error::argument("no folds to summarize"));
    }
    let scores: Vec<f64> = folds.iter().map(|f| f.f1.macro_f1).collect();
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let std = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut pooled = ConfusionMatrix::default();
    for f in &folds {
        for (row, add) in pooled.counts.iter_mut().zip(&f.confusion.counts) {
            for (c, a) in row.iter_mut().zip(add) {
                *c += a;
            }
        }
    }
    let pooled_f1 = macro_f1(&pooled);
    Ok(BenchmarkReport {
        folds,
        mean_macro_f1: mean,
        std_macro_f1: std,
        pooled_confusion: pooled,
        pooled_f1,
    })
}

/// Leave-one-participant-out benchmark. `on_fold` sees each fold as it finishes.
pub fn run_benchmark(cfg: &BenchmarkConfig, mut on_fold: impl FnMut(&FoldOutput)) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let data = (0..cfg.participants)
        .map(|id| prepare_participant(id, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut folds = Vec::new();
    for holdout in cfg.fold_ids() {
        let out = run_fold(&data, holdout, cfg)?;
        on_fold(&out);
        folds.push(out.report);
    }
    summarize(folds)
}
