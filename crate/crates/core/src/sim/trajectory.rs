use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Reflector range (metres from the device) as a function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trajectory {
    Static {
        range_m: f64,
    },
    Sinusoid {
        center_m: f64,
        amplitude_m: f64,
        rate_hz: f64,
        #[serde(default)]
        phase_rad: f64,
    },
    /// Linear interpolation between `(time_s, range_m)` knots, constant
    /// outside them. With `repeat`, the knot sequence loops with period
    /// equal to its last knot time.
    PiecewiseLinear {
        knots: Vec<[f64; 2]>,
        #[serde(default)]
        repeat: bool,
    },
    /// Sum of component ranges (e.g. a reach plus a small tremor).
    Sum {
        parts: Vec<Trajectory>,
    },
    /// Rests at `rest_m` except inside the listed segments, where the segment's
    /// motion is evaluated with time measured from the segment start.
    Composite {
        rest_m: f64,
        segments: Vec<MotionSegment>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSegment {
    pub start_s: f64,
    pub end_s: f64,
    pub motion: Trajectory,
}

impl Trajectory {
    pub fn range_at(&self, t: f64) -> f64 {
        match self {
            Trajectory::Static { range_m } => *range_m,
            Trajectory::Sinusoid {
                center_m,
                amplitude_m,
                rate_hz,
                phase_rad,
            } => center_m + amplitude_m * (2.0 * PI * rate_hz * t + phase_rad).sin(),
            Trajectory::PiecewiseLinear { knots, repeat } => piecewise(knots, *repeat, t),
            Trajectory::Sum { parts } => parts.iter().map(|p| p.range_at(t)).sum(),
            Trajectory::Composite { rest_m, segments } => {
                // Segments are sorted; find the last one starting at or before t.
                let idx = segments.partition_point(|s| s.start_s <= t);
                match idx.checked_sub(1).map(|i| &segments[i]) {
                    Some(seg) if t < seg.end_s => seg.motion.range_at(t - seg.start_s),
                    _ => *rest_m,
                }
            }
        }
    }

    /// True when the range never changes.
    pub fn is_static(&self) -> bool {
        match self {
            Trajectory::Static { .. } => true,
            Trajectory::Sinusoid { amplitude_m, rate_hz, .. } => *amplitude_m == 0.0 || *rate_hz == 0.0,
            Trajectory::PiecewiseLinear { knots, .. } => knots.windows(2).all(|w| w[0][1] == w[1][1]),
            Trajectory::Sum { parts } => parts.iter().all(Trajectory::is_static),
            Trajectory::Composite { segments, .. } => segments.is_empty(),
        }
    }
}

fn piecewise(knots: &[[f64; 2]], repeat: bool, t: f64) -> f64 {
    let Some(first) = knots.first() else {
        return 0.0;
    };
    let last = knots[knots.len() - 1];
    let t = if repeat && last[0] > 0.0 { t.rem_euclid(last[0]) } else { t };
    if t <= first[0] {
        return first[1];
    }
    if t >= last[0] {
        return last[1];
    }
    let i = knots.partition_point(|k| k[0] <= t);
    let [t0, r0] = knots[i - 1];
    let [t1, r1] = knots[i];
    if t1 == t0 {
        r1
    } else {
        r0 + (r1 - r0) * (t - t0) / (t1 - t0)
    }
}
