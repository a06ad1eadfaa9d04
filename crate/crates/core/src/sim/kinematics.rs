//! Motion generators for scripted activities.
//!
//! Each template moves one body-part reflector. The constants are synthetic
//! benchmark defaults chosen so the six classes are separable in the
//! differential echo profile; every value can be overridden in script JSON.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::trajectory::Trajectory;
use crate::labels::ActivityClass;

/// Reflecting body parts tracked by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyPart {
    Jaw,
    Lips,
    Hand,
    Torso,
}

impl BodyPart {
    pub const ALL: [BodyPart; 4] = [BodyPart::Jaw, BodyPart::Lips, BodyPart::Hand, BodyPart::Torso];
}

/// Periodic oscillation about a centre range (jaw while chewing, lips while talking).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oscillation {
    pub center_m: f64,
    pub amplitude_m: f64,
    pub rate_hz: f64,
}

/// Hand reach cycle: approach, hold (with optional tremor), retreat; repeated
/// for the length of the script entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reach {
    pub start_m: f64,
    pub near_m: f64,
    pub approach_s: f64,
    pub hold_s: f64,
    pub retreat_s: f64,
    #[serde(default)]
    pub tremor_m: f64,
    #[serde(default)]
    pub tremor_hz: f64,
}

/// Slow random wandering of the torso, beyond the near-face sensing range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub min_m: f64,
    pub max_m: f64,
    pub knot_interval_s: f64,
}

/// Per-entry randomization applied when a template is realized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Jitter {
    /// Uniform offset, ± metres, added to every characteristic range.
    pub range_m: f64,
    /// Uniform relative change, ±, of rates and durations.
    pub rate_frac: f64,
    /// Randomize the starting phase of oscillations.
    pub phase: bool,
}

impl Default for Jitter {
    fn default() -> Self {
        Self {
            range_m: 0.008,
            rate_frac: 0.1,
            phase: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    Chewing(Oscillation),
    Talking(Oscillation),
    Intake(Reach),
    Drinking(Reach),
    FaceTouch(Reach),
    Null(Drift),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicTemplate {
    #[serde(flatten)]
    pub motion: Motion,
    #[serde(default)]
    pub jitter: Jitter,
}

impl KinematicTemplate {
    /// Default generator for each class.
    pub fn for_class(class: ActivityClass) -> Self {
        let motion = match class {
            ActivityClass::Chewing => Motion::Chewing(Oscillation {
                center_m: 0.12,
                amplitude_m: 0.01,
                rate_hz: 1.5,
            }),
            ActivityClass::Talking => Motion::Talking(Oscillation {
                center_m: 0.10,
                amplitude_m: 0.004,
                rate_hz: 3.0,
            }),
            ActivityClass::FoodIntake => Motion::Intake(Reach {
                start_m: 0.45,
                near_m: 0.08,
                approach_s: 1.5,
                hold_s: 0.0,
                retreat_s: 1.5,
                tremor_m: 0.0,
                tremor_hz: 0.0,
            }),
            ActivityClass::Drinking => Motion::Drinking(Reach {
                start_m: 0.40,
                near_m: 0.10,
                approach_s: 1.5,
                hold_s: 2.0,
                retreat_s: 1.5,
                tremor_m: 0.002,
                tremor_hz: 0.8,
            }),
            ActivityClass::FaceTouch => Motion::FaceTouch(Reach {
                start_m: 0.45,
                near_m: 0.05,
                approach_s: 1.0,
                hold_s: 2.0,
                retreat_s: 1.0,
                tremor_m: 0.003,
                tremor_hz: 4.0,
            }),
            ActivityClass::Null => Motion::Null(Drift {
                min_m: 0.6,
                max_m: 1.0,
                knot_interval_s: 2.0,
            }),
        };
        Self {
            motion,
            jitter: Jitter::default(),
        }
    }

    pub fn body_part(&self) -> BodyPart {
        match self.motion {
            Motion::Chewing(_) => BodyPart::Jaw,
            Motion::Talking(_) => BodyPart::Lips,
            Motion::Intake(_) | Motion::Drinking(_) | Motion::FaceTouch(_) => BodyPart::Hand,
            Motion::Null(_) => BodyPart::Torso,
        }
    }

    /// Motion for an entry lasting `duration_s`, time measured from entry start.
    pub fn realize<R: Rng>(&self, duration_s: f64, rng: &mut R) -> Trajectory {
        let j = &self.jitter;
        let mut offset = || if j.range_m > 0.0 { rng.gen_range(-j.range_m..=j.range_m) } else { 0.0 };
        let range_off = offset();
        let scale = if j.rate_frac > 0.0 {
            1.0 + rng.gen_range(-j.rate_frac..=j.rate_frac)
        } else {
            1.0
        };
        let phase = if j.phase { rng.gen_range(0.0..2.0 * PI) } else { 0.0 };

        match &self.motion {
            Motion::Chewing(o) | Motion::Talking(o) => Trajectory::Sinusoid {
                center_m: o.center_m + range_off,
                amplitude_m: o.amplitude_m,
                rate_hz: o.rate_hz * scale,
                phase_rad: phase,
            },
            Motion::Intake(r) | Motion::Drinking(r) | Motion::FaceTouch(r) => {
                let approach = r.approach_s * scale;
                let hold = r.hold_s * scale;
                let retreat = r.retreat_s * scale;
                let near = r.near_m + range_off;
                let mut knots = vec![[0.0, r.start_m], [approach, near]];
                if hold > 0.0 {
                    knots.push([approach + hold, near]);
                }
                knots.push([approach + hold + retreat, r.start_m]);
                let reach = Trajectory::PiecewiseLinear { knots, repeat: true };
                if r.tremor_m > 0.0 {
                    Trajectory::Sum {
                        parts: vec![
                            reach,
                            Trajectory::Sinusoid {
                                center_m: 0.0,
                                amplitude_m: r.tremor_m,
                                rate_hz: r.tremor_hz * scale,
                                phase_rad: phase,
                            },
                        ],
                    }
                } else {
                    reach
                }
            }
            Motion::Null(d) => {
                let step = d.knot_interval_s.max(0.1);
                let n = (duration_s / step).ceil() as usize + 1;
                let knots = (0..n)
                    .map(|i| [i as f64 * step, rng.gen_range(d.min_m..=d.max_m)])
                    .collect();
                Trajectory::PiecewiseLinear { knots, repeat: false }
            }
        }
    }
}
