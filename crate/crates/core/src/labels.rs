//! The six-class dietary action taxonomy and per-second label timelines.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 6;

/// A fine-grained dietary (or non-dietary) action.
///
/// The discriminant is the class index used by the classifier, the confusion
/// matrix and every serialized format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum ActivityClass {
    Null = 0,
    FoodIntake = 1,
    Chewing = 2,
    Drinking = 3,
    Talking = 4,
    FaceTouch = 5,
}

impl ActivityClass {
    pub const ALL: [ActivityClass; NUM_CLASSES] = [
        ActivityClass::Null,
        ActivityClass::FoodIntake,
        ActivityClass::Chewing,
        ActivityClass::Drinking,
        ActivityClass::Talking,
        ActivityClass::FaceTouch,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Option<Self> {
        Self::ALL.get(idx).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivityClass::Null => "null",
            ActivityClass::FoodIntake => "food_intake",
            ActivityClass::Chewing => "chewing",
            ActivityClass::Drinking => "drinking",
            ActivityClass::Talking => "talking",
            ActivityClass::FaceTouch => "face_touch",
        }
    }

    /// Rank used to break ties when a window covers equally many seconds of
    /// two classes. Brief, rare actions win.
    pub fn tie_break_priority(self) -> u8 {
        match self {
            ActivityClass::FoodIntake => 5,
            ActivityClass::Drinking => 4,
            ActivityClass::Chewing => 3,
            ActivityClass::FaceTouch => 2,
            ActivityClass::Talking => 1,
            ActivityClass::Null => 0,
        }
    }

    /// Intake and chewing are the two "eating" frames for episode detection.
    pub fn is_eating(self) -> bool {
        matches!(self, ActivityClass::FoodIntake | ActivityClass::Chewing)
    }
}

impl fmt::Display for ActivityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivityClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::argument(format!("unknown activity class {s:?}")))
    }
}

/// One label per second, ground truth or predicted.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrameTimeline {
    pub labels: Vec<ActivityClass>,
}

impl FrameTimeline {
    pub fn new(labels: Vec<ActivityClass>) -> Self {
        Self { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Writes the shared `second,label` CSV format.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "second,label")?;
        for (second, label) in self.labels.iter().enumerate() {
            writeln!(w, "{second},{label}")?;
        }
        Ok(())
    }

    /// Reads the `second,label` CSV format. Seconds must be consecutive from 0.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut labels = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line == "second,label") {
                continue;
            }
            let (sec, label) = line
                .split_once(',')
                .ok_or_else(|| Error::format("timeline csv", format!("line {}: expected `second,label`", lineno + 1)))?;
            let sec: usize = sec.trim().parse().map_err(|_| {
                Error::format("timeline csv", format!("line {}: bad second {sec:?}", lineno + 1))
            })?;
            if sec != labels.len() {
                return Err(Error::format(
                    "timeline csv",
                    format!("line {}: expected second {}, found {sec}", lineno + 1, labels.len()),
                ));
            }
            labels.push(label.trim().parse()?);
        }
        Ok(Self { labels })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for c in ActivityClass::ALL {
            assert_eq!(c.name().parse::<ActivityClass>().unwrap(), c);
            assert_eq!(ActivityClass::from_index(c.index()), Some(c));
        }
        assert!("snacking".parse::<ActivityClass>().is_err());
    }

    #[test]
    fn csv_round_trip() {
        let tl = FrameTimeline::new(vec![
            ActivityClass::Null,
            ActivityClass::FoodIntake,
            ActivityClass::Chewing,
        ]);
        let mut buf = Vec::new();
        tl.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "second,label\n0,null\n1,food_intake\n2,chewing\n"
        );
        assert_eq!(FrameTimeline::read_csv(&buf[..]).unwrap(), tl);
    }

    #[test]
    fn csv_rejects_gaps() {
        let text = "second,label\n0,null\n2,chewing\n";
        assert!(FrameTimeline::read_csv(text.as_bytes()).is_err());
    }
}
