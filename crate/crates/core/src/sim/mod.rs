//! Desk-scale acoustic channel simulator.
//!
//! Renders two-microphone recordings of scripted activity scenes: every
//! reflector returns a delayed, inverse-square attenuated copy of both
//! continuous chirp trains, and white Gaussian noise is added per microphone.
//! The script doubles as per-second ground truth.

mod benchmark;
mod kinematics;
mod trajectory;

pub use benchmark::{synthetic_participant, ParticipantProfile};
pub use kinematics::{BodyPart, Drift, Jitter, KinematicTemplate, Motion, Oscillation, Reach};
pub use trajectory::{MotionSegment, Trajectory};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{ActivityClass, FrameTimeline};
use crate::signal::{AudioStream, ChirpParams, Microphone, SensingConfig};

/// Nearest physically meaningful reflector range.
pub const MIN_RANGE_M: f64 = 0.02;
/// Ranges below this use the floor value in the inverse-square law.
pub const ATTENUATION_FLOOR_M: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflector {
    #[serde(default)]
    pub name: String,
    pub trajectory: Trajectory,
    pub reflectivity: f64,
    #[serde(default = "both_mics")]
    pub visible_to: Vec<Microphone>,
}

fn both_mics() -> Vec<Microphone> {
    Microphone::ALL.to_vec()
}

/// Rest position and reflectivity of one body part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyPartModel {
    pub rest_m: f64,
    pub reflectivity: f64,
    #[serde(default = "both_mics")]
    pub visible_to: Vec<Microphone>,
}

/// The body-part reflectors that script entries move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BodyModel {
    pub jaw: BodyPartModel,
    pub lips: BodyPartModel,
    pub hand: BodyPartModel,
    pub torso: BodyPartModel,
}

impl Default for BodyModel {
    fn default() -> Self {
        let part = |rest_m, reflectivity| BodyPartModel {
            rest_m,
            reflectivity,
            visible_to: both_mics(),
        };
        Self {
            jaw: part(0.12, 0.6),
            lips: part(0.10, 0.3),
            hand: part(0.45, 0.8),
            torso: part(0.8, 1.0),
        }
    }
}

impl BodyModel {
    pub fn part(&self, part: BodyPart) -> &BodyPartModel {
        match part {
            BodyPart::Jaw => &self.jaw,
            BodyPart::Lips => &self.lips,
            BodyPart::Hand => &self.hand,
            BodyPart::Torso => &self.torso,
        }
    }

    pub fn part_mut(&mut self, part: BodyPart) -> &mut BodyPartModel {
        match part {
            BodyPart::Jaw => &mut self.jaw,
            BodyPart::Lips => &mut self.lips,
            BodyPart::Hand => &mut self.hand,
            BodyPart::Torso => &mut self.torso,
        }
    }
}

/// Everything needed to render a recording besides the activity script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    /// Extra reflectors present throughout (static furniture, multipath).
    #[serde(default)]
    pub reflectors: Vec<Reflector>,
    #[serde(default)]
    pub body: BodyModel,
    #[serde(default)]
    pub noise_rms: f64,
    pub seed: u64,
    #[serde(default)]
    pub sensing: SensingConfig,
}

impl Scene {
    pub fn new(seed: u64) -> Self {
        Self {
            reflectors: Vec::new(),
            body: BodyModel::default(),
            noise_rms: 0.0,
            seed,
            sensing: SensingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub start_s: f64,
    pub end_s: f64,
    pub label: ActivityClass,
    /// Defaults to the class's standard generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<KinematicTemplate>,
}

/// Contiguous, labelled activity segments covering `[0, total_duration_s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityScript {
    pub entries: Vec<ScriptEntry>,
    pub total_duration_s: f64,
}

impl ActivityScript {
    /// Builds a script from back-to-back `(duration_s, label)` pieces.
    pub fn from_durations(pieces: &[(f64, ActivityClass)]) -> Self {
        let mut t = 0.0;
        let entries = pieces
            .iter()
            .map(|&(d, label)| {
                let e = ScriptEntry {
                    start_s: t,
                    end_s: t + d,
                    label,
                    template: None,
                };
                t += d;
                e
            })
            .collect();
        Self {
            entries,
            total_duration_s: t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        const EPS: f64 = 1e-9;
        let Some(first) = self.entries.first() else {
            return Err(Error::argument("activity script is empty"));
        };
        if first.start_s.abs() > EPS {
            return Err(Error::Scene("script must start at 0 s".into()));
        }
        let mut prev_end = 0.0;
        for (i, e) in self.entries.iter().enumerate() {
            if !(e.end_s > e.start_s) {
                return Err(Error::Scene(format!("entry {i} has non-positive duration")));
            }
            if (e.start_s - prev_end).abs() > EPS {
                return Err(Error::Scene(format!(
                    "entry {i} starts at {} s but the previous entry ends at {prev_end} s",
                    e.start_s
                )));
            }
            prev_end = e.end_s;
        }
        if (prev_end - self.total_duration_s).abs() > EPS {
            return Err(Error::Scene(format!(
                "entries end at {prev_end} s but total_duration_s is {}",
                self.total_duration_s
            )));
        }
        Ok(())
    }

    /// Label of the entry covering time `t`.
    pub fn label_at(&self, t: f64) -> ActivityClass {
        let idx = self.entries.partition_point(|e| e.start_s <= t);
        self.entries[idx.saturating_sub(1)].label
    }

    /// One label per whole second, taken at the middle of the second.
    pub fn timeline(&self) -> FrameTimeline {
        let seconds = self.total_duration_s.floor() as usize;
        FrameTimeline::new((0..seconds).map(|s| self.label_at(s as f64 + 0.5)).collect())
    }
}

/// Turns the script into one composite trajectory per body part.
pub fn body_reflectors(scene: &Scene, script: &ActivityScript) -> Vec<Reflector> {
    let mut segments: Vec<(BodyPart, Vec<MotionSegment>)> = BodyPart::ALL.iter().map(|&p| (p, Vec::new())).collect();
    for (i, entry) in script.entries.iter().enumerate() {
        let template = entry
            .template
            .clone()
            .unwrap_or_else(|| KinematicTemplate::for_class(entry.label));
        // Each entry draws from its own stream so edits elsewhere in the script
        // leave its motion unchanged.
        let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
        rng.set_stream(1 + i as u64);
        let motion = template.realize(entry.end_s - entry.start_s, &mut rng);
        let part = template.body_part();
        segments
            .iter_mut()
            .find(|(p, _)| *p == part)
            .expect("every body part has a slot")
            .1
            .push(MotionSegment {
                start_s: entry.start_s,
                end_s: entry.end_s,
                motion,
            });
    }
    segments
        .into_iter()
        .map(|(part, segs)| {
            let model = scene.body.part(part);
            Reflector {
                name: format!("{part:?}").to_lowercase(),
                trajectory: Trajectory::Composite {
                    rest_m: model.rest_m,
                    segments: segs,
                },
                reflectivity: model.reflectivity,
                visible_to: model.visible_to.clone(),
            }
        })
        .collect()
}

/// Renders both microphone streams and the 1 Hz ground-truth timeline.
pub fn render_scene(scene: &Scene, script: &ActivityScript) -> Result<(AudioStream, FrameTimeline)> {
    script.validate()?;
    if script.total_duration_s < 1.0 {
        return Err(Error::argument("scripts must last at least one second"));
    }
    let mut reflectors = scene.reflectors.clone();
    reflectors.extend(body_reflectors(scene, script));
    let stream = render_reflectors(scene, &reflectors, script.total_duration_s)?;
    Ok((stream, script.timeline()))
}

/// Renders an explicit reflector set for `duration_s` seconds.
pub fn render_reflectors(scene: &Scene, reflectors: &[Reflector], duration_s: f64) -> Result<AudioStream> {
    let sensing = &scene.sensing;
    sensing.validate()?;
    if !(scene.noise_rms >= 0.0) {
        return Err(Error::Scene("noise_rms must be non-negative".into()));
    }
    let n_samples = (duration_s * sensing.sample_rate).round() as usize;
    for band in &sensing.bands {
        band.validate()?;
    }

    let mut mics = vec![vec![0.0f64; n_samples]; Microphone::ALL.len()];
    for refl in reflectors {
        if !(0.0..=1.0).contains(&refl.reflectivity) {
            return Err(Error::Scene(format!(
                "reflector {:?} has reflectivity {} outside [0, 1]",
                refl.name, refl.reflectivity
            )));
        }
        let targets: Vec<usize> = Microphone::ALL
            .iter()
            .filter(|m| refl.visible_to.contains(m))
            .map(|m| m.index())
            .collect();
        if targets.is_empty() {
            continue;
        }
        let echo = echo_of_reflector(&sensing.bands, &refl.trajectory, refl.reflectivity, n_samples, sensing)?;
        for &m in &targets {
            for (acc, e) in mics[m].iter_mut().zip(&echo) {
                *acc += e;
            }
        }
    }

    let channels = mics
        .into_iter()
        .enumerate()
        .map(|(m, acc)| {
            if scene.noise_rms > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
                rng.set_stream(1 << 32 | m as u64);
                let normal = Normal::new(0.0, scene.noise_rms).expect("finite noise level");
                acc.into_iter().map(|v| (v + normal.sample(&mut rng)) as f32).collect()
            } else {
                acc.into_iter().map(|v| v as f32).collect()
            }
        })
        .collect();
    AudioStream::new(channels, sensing.sample_rate)
}

/// Sum over bands of the reflector's delayed, attenuated transmit trains.
fn echo_of_reflector(
    tx: &[ChirpParams],
    trajectory: &Trajectory,
    reflectivity: f64,
    n_samples: usize,
    sensing: &SensingConfig,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n_samples];
    for train in tx {
        add_delayed(&mut out, train, trajectory, reflectivity, sensing)?;
    }
    Ok(out)
}

/// The echo of one periodic transmit train off one moving reflector:
/// `out[k] = g(t_k) * tx(t_k - 2 r(t_k) / c)` with `g = reflectivity / max(r, 5 cm)²`
/// where `tx` is the chirp train, taken to run for all time.
pub fn delay_and_attenuate(
    tx: &ChirpParams,
    trajectory: &Trajectory,
    reflectivity: f64,
    n_samples: usize,
    sensing: &SensingConfig,
) -> Result<Vec<f64>> {
    tx.validate()?;
    let mut out = vec![0.0; n_samples];
    add_delayed(&mut out, tx, trajectory, reflectivity, sensing)?;
    Ok(out)
}

fn add_delayed(
    out: &mut [f64],
    tx: &ChirpParams,
    trajectory: &Trajectory,
    reflectivity: f64,
    sensing: &SensingConfig,
) -> Result<()> {
    let n = tx.n_samples;
    let fs = sensing.sample_rate;
    let max_range = sensing.max_range_m();
    let delay_per_m = 2.0 * fs / sensing.speed_of_sound;
    let period = n as f64;
    for (k, acc) in out.iter_mut().enumerate() {
        let t = k as f64 / fs;
        let r = trajectory.range_at(t);
        if !(r > MIN_RANGE_M && r <= max_range) {
            return Err(Error::Scene(format!(
                "reflector at {r} m (t = {t:.4} s) is outside ({MIN_RANGE_M}, {max_range}] m"
            )));
        }
        let gain = reflectivity / r.max(ATTENUATION_FLOOR_M).powi(2);
        // The train is evaluated in closed form at the delayed instant. Phase
        // within the period depends only on k mod n, so a static reflector
        // produces bit-identical periods.
        let pos = ((k % n) as f64 - r * delay_per_m).rem_euclid(period);
        *acc += gain * tx.value_at(pos);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{compute_echo_profile, differentiate};

    fn static_reflector(range_m: f64) -> Reflector {
        Reflector {
            name: "plate".into(),
            trajectory: Trajectory::Static { range_m },
            reflectivity: 0.5,
            visible_to: both_mics(),
        }
    }

    fn period_rms(x: &[f64]) -> f64 {
        (x[..600].iter().map(|v| v * v).sum::<f64>() / 600.0).sqrt()
    }

    #[test]
    fn static_range_is_a_pure_sample_shift() {
        let cfg = SensingConfig::default();
        let tx = crate::signal::generate_chirp(&cfg.bands[0]).unwrap();
        let out = delay_and_attenuate(&cfg.bands[0], &Trajectory::Static { range_m: 0.343 }, 1.0, 1800, &cfg).unwrap();
        let gain = 1.0 / (0.343f64 * 0.343);
        for k in 0..1800 {
            let expected = gain * tx[(k + 600 - 100) % 600];
            assert!((out[k] - expected).abs() < 1e-9 * gain, "sample {k}");
        }
    }

    #[test]
    fn fractional_delay_is_exact() {
        // Half a sample of delay: compare against the chirp formula evaluated
        // directly at the shifted instants.
        let cfg = SensingConfig::default();
        let band = &cfg.bands[1];
        let r = 100.5 * 343.0 / 100_000.0;
        let out = delay_and_attenuate(band, &Trajectory::Static { range_m: r }, 1.0, 600, &cfg).unwrap();
        let (f0, f1, fs) = (band.f_start, band.f_end, band.sample_rate);
        let period = 600.0 / fs;
        for k in 0..600 {
            let t = ((k as f64 - 100.5).rem_euclid(600.0)) / fs;
            let expected = 0.5 * (2.0 * std::f64::consts::PI * (f0 * t + (f1 - f0) / (2.0 * period) * t * t)).sin();
            assert!((out[k] / (1.0 / (r * r)) - expected).abs() < 1e-9, "sample {k}");
        }
    }

    #[test]
    fn inverse_square_gain() {
        // Integer delays of 100 and 200 samples keep the period RMS equal.
        let cfg = SensingConfig::default();
        let rms_at = |r: f64| {
            let out = delay_and_attenuate(&cfg.bands[0], &Trajectory::Static { range_m: r }, 1.0, 600, &cfg).unwrap();
            period_rms(&out)
        };
        assert!((rms_at(0.343) / rms_at(0.686) - 4.0).abs() < 1e-9);
        // 9 samples of delay, inside the attenuation floor.
        let floor = rms_at(0.03087);
        let expected = rms_at(0.343) * 0.343 * 0.343 / 0.0025;
        assert!((floor / expected - 1.0).abs() < 1e-9);
    }

    #[test]
    fn out_of_range_reflector_is_a_scene_error() {
        let cfg = SensingConfig::default();
        for r in [0.01, 2.1] {
            let err = delay_and_attenuate(&cfg.bands[0], &Trajectory::Static { range_m: r }, 1.0, 10, &cfg);
            assert!(matches!(err, Err(Error::Scene(_))));
        }
    }

    #[test]
    fn receding_reflector_peak_moves_outward() {
        let mut scene = Scene::new(1);
        scene.body = BodyModel::default();
        let refl = Reflector {
            name: "hand".into(),
            trajectory: Trajectory::PiecewiseLinear {
                knots: vec![[0.0, 0.10], [1.0, 0.20]],
                repeat: false,
            },
            reflectivity: 0.5,
            visible_to: both_mics(),
        };
        let stream = render_reflectors(&scene, &[refl], 1.0).unwrap();
        let echo = compute_echo_profile(&stream, &scene.sensing).unwrap();
        let peaks: Vec<usize> = (0..echo.n_frames).map(|t| echo.peak_bin(0, t)).collect();
        for w in peaks.windows(2) {
            assert!(w[1] >= w[0], "{peaks:?}");
        }
        // An up-chirp reads a receding target slightly long (range-Doppler
        // coupling, about 2 samples at 0.1 m/s).
        assert!(peaks[0].abs_diff(29) <= 2, "{}", peaks[0]);
        assert!(peaks[82].abs_diff(58) <= 2, "{}", peaks[82]);

        let diff = differentiate(&echo).unwrap();
        let energy: f64 = diff.data.iter().map(|v| v * v).sum();
        assert!(energy > 0.0);
    }

    #[test]
    fn no_reflectors_no_noise_is_silent() {
        let scene = Scene::new(3);
        let stream = render_reflectors(&scene, &[], 1.0).unwrap();
        assert_eq!(stream.len(), 50_000);
        assert!(stream.channels.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn timeline_passes_labels_through() {
        let script = ActivityScript::from_durations(&[(10.0, ActivityClass::Chewing)]);
        let scene = Scene::new(0);
        let (stream, truth) = render_scene(&scene, &script).unwrap();
        assert_eq!(stream.len(), 500_000);
        assert_eq!(truth.labels, vec![ActivityClass::Chewing; 10]);
    }

    #[test]
    fn script_validation() {
        let empty = ActivityScript {
            entries: vec![],
            total_duration_s: 0.0,
        };
        assert!(matches!(render_scene(&Scene::new(0), &empty), Err(Error::Argument(_))));
        let mut gap = ActivityScript::from_durations(&[(2.0, ActivityClass::Null), (2.0, ActivityClass::Talking)]);
        gap.entries[1].start_s = 2.5;
        assert!(gap.validate().is_err());
        let short = ActivityScript::from_durations(&[(0.5, ActivityClass::Null)]);
        assert!(render_scene(&Scene::new(0), &short).is_err());
    }

    #[test]
    fn rendering_is_deterministic_and_superposes() {
        let mut scene = Scene::new(11);
        let a = static_reflector(0.2);
        let b = Reflector {
            trajectory: Trajectory::Sinusoid {
                center_m: 0.12,
                amplitude_m: 0.01,
                rate_hz: 1.5,
                phase_rad: 0.3,
            },
            ..static_reflector(0.0)
        };
        let both = render_reflectors(&scene, &[a.clone(), b.clone()], 0.2).unwrap();
        let only_a = render_reflectors(&scene, &[a.clone()], 0.2).unwrap();
        let only_b = render_reflectors(&scene, &[b.clone()], 0.2).unwrap();
        for m in 0..2 {
            for k in 0..both.len() {
                let sum = only_a.channels[m][k] + only_b.channels[m][k];
                assert!((both.channels[m][k] - sum).abs() <= 1e-5 * sum.abs().max(1.0));
            }
        }
        scene.noise_rms = 0.3;
        let n1 = render_reflectors(&scene, &[a.clone()], 0.2).unwrap();
        let n2 = render_reflectors(&scene, &[a], 0.2).unwrap();
        assert_eq!(n1, n2);
        assert_ne!(n1.channels[0], n1.channels[1]);
    }

    #[test]
    fn scene_json_defaults() {
        let scene: Scene = serde_json::from_str(r#"{"seed": 5}"#).unwrap();
        assert_eq!(scene, Scene::new(5));
        let script: ActivityScript = serde_json::from_str(
            r#"{"entries":[{"start_s":0,"end_s":3,"label":"food_intake"}],"total_duration_s":3}"#,
        )
        .unwrap();
        script.validate().unwrap();
    }
}
