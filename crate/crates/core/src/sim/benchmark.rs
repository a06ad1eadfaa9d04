//! Synthetic "participants": randomized body geometry plus a meal-like
//! activity script, used by the end-to-end benchmark.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ActivityScript, BodyPart, Scene, ScriptEntry};
use crate::labels::ActivityClass;

/// Knobs for [`synthetic_participant`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParticipantProfile {
    pub duration_s: f64,
    pub noise_rms: f64,
    /// Relative spread of per-part reflectivity between participants.
    pub reflectivity_spread: f64,
    /// Spread, in metres, of body-part rest positions between participants.
    pub rest_spread_m: f64,
}

impl Default for ParticipantProfile {
    fn default() -> Self {
        Self {
            duration_s: 600.0,
            noise_rms: 0.5,
            reflectivity_spread: 0.2,
            rest_spread_m: 0.01,
        }
    }
}

/// Activity blocks the script generator chooses between, with weights.
const BLOCKS: [(Block, f64); 5] = [
    (Block::Bite, 0.30),
    (Block::Sip, 0.15),
    (Block::Talk, 0.18),
    (Block::Touch, 0.15),
    (Block::Idle, 0.22),
];

#[derive(Debug, Clone, Copy)]
enum Block {
    Bite,
    Sip,
    Talk,
    Touch,
    Idle,
}

/// Scene and script for participant `id`. Deterministic in `(id, seed)`.
pub fn synthetic_participant(id: u32, seed: u64, profile: &ParticipantProfile) -> (Scene, ActivityScript) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(id));

    let mut scene = Scene::new(seed ^ (u64::from(id) << 40) ^ 0x5eed);
    scene.noise_rms = profile.noise_rms;
    for part in BodyPart::ALL {
        let model = scene.body.part_mut(part);
        let s = profile.reflectivity_spread;
        if s > 0.0 {
            model.reflectivity = (model.reflectivity * rng.gen_range(1.0 - s..=1.0 + s)).min(1.0);
        }
        if profile.rest_spread_m > 0.0 && part != BodyPart::Torso {
            model.rest_m += rng.gen_range(-profile.rest_spread_m..=profile.rest_spread_m);
        }
    }

    let total = profile.duration_s.floor().max(1.0);
    let mut entries = Vec::new();
    let mut t = 0.0;
    let mut push = |label: ActivityClass, dur: f64, t: &mut f64| {
        let end = (*t + dur).min(total);
        if end > *t {
            entries.push(ScriptEntry {
                start_s: *t,
                end_s: end,
                label,
                template: None,
            });
            *t = end;
        }
    };
    let weight_sum: f64 = BLOCKS.iter().map(|b| b.1).sum();
    while t < total {
        let mut pick = rng.gen_range(0.0..weight_sum);
        let block = BLOCKS
            .iter()
            .find(|(_, w)| {
                pick -= w;
                pick < 0.0
            })
            .map_or(Block::Idle, |b| b.0);
        match block {
            Block::Bite => {
                push(ActivityClass::FoodIntake, rng.gen_range(3..=4) as f64, &mut t);
                push(ActivityClass::Chewing, rng.gen_range(6..=16) as f64, &mut t);
            }
            Block::Sip => push(ActivityClass::Drinking, rng.gen_range(5..=7) as f64, &mut t),
            Block::Talk => push(ActivityClass::Talking, rng.gen_range(5..=12) as f64, &mut t),
            Block::Touch => push(ActivityClass::FaceTouch, rng.gen_range(4..=6) as f64, &mut t),
            Block::Idle => push(ActivityClass::Null, rng.gen_range(5..=14) as f64, &mut t),
        }
    }
    let script = ActivityScript {
        entries: merge_adjacent(entries),
        total_duration_s: total,
    };
    (scene, script)
}

/// Joins consecutive entries with the same label so motions stay continuous.
fn merge_adjacent(entries: Vec<ScriptEntry>) -> Vec<ScriptEntry> {
    let mut out: Vec<ScriptEntry> = Vec::with_capacity(entries.len());
    for e in entries {
        match out.last_mut() {
            Some(prev) if prev.label == e.label && prev.template == e.template => prev.end_s = e.end_s,
            _ => out.push(e),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripts_are_valid_and_deterministic() {
        let profile = ParticipantProfile {
            duration_s: 300.0,
            ..Default::default()
        };
        let (scene_a, script_a) = synthetic_participant(2, 9, &profile);
        let (scene_b, script_b) = synthetic_participant(2, 9, &profile);
        assert_eq!(scene_a, scene_b);
        assert_eq!(script_a, script_b);
        script_a.validate().unwrap();
        assert_eq!(script_a.total_duration_s, 300.0);
        let (_, other) = synthetic_participant(3, 9, &profile);
        assert_ne!(other, script_a);
    }

    #[test]
    fn every_class_appears_in_a_long_script() {
        let (_, script) = synthetic_participant(0, 1, &ParticipantProfile::default());
        let tl = script.timeline();
        for class in ActivityClass::ALL {
            let n = tl.labels.iter().filter(|&&l| l == class).count();
            assert!(n >= 10, "{class}: {n} seconds");
        }
    }
}
