//! Frame-level classification and agreement metrics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{ActivityClass, NUM_CLASSES};

/// Rows are truth, columns are predictions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: ActivityClass) -> u64 {
        self.counts[class.index()].iter().sum()
    }

    /// Rows scaled to sum to 1; rows of classes absent from the truth stay zero.
    pub fn normalized(&self) -> [[f64; NUM_CLASSES]; NUM_CLASSES] {
        let mut out = [[0.0; NUM_CLASSES]; NUM_CLASSES];
        for (row, counts) in out.iter_mut().zip(&self.counts) {
            let n: u64 = counts.iter().sum();
            if n > 0 {
                for (o, &c) in row.iter_mut().zip(counts) {
                    *o = c as f64 / n as f64;
                }
            }
        }
        out
    }

    /// CSV with a header row of predicted class names and one row per true class.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "truth\\pred")?;
        for c in ActivityClass::ALL {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
        for c in ActivityClass::ALL {
            write!(w, "{c}")?;
            for v in self.counts[c.index()] {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub fn confusion(truth: &[ActivityClass], pred: &[ActivityClass]) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::argument(format!(
            "truth has {} labels, predictions {}",
            truth.len(),
            pred.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (t, p) in truth.iter().zip(pred) {
        cm.counts[t.index()][p.index()] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: ActivityClass,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub per_class: Vec<ClassScores>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Classes with non-zero truth support; the macro means run over these.
    pub averaged_over: Vec<ActivityClass>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision, recall and F1 (0/0 taken as 0) and their unweighted
/// means over the classes present in the truth.
pub fn macro_f1(cm: &ConfusionMatrix) -> F1Report {
    let mut per_class = Vec::with_capacity(NUM_CLASSES);
    for c in ActivityClass::ALL {
        let i = c.index();
        let tp = cm.counts[i][i];
        let predicted: u64 = cm.counts.iter().map(|row| row[i]).sum();
        let support: u64 = cm.counts[i].iter().sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassScores {
            class: c,
            precision,
            recall,
            f1,
            support,
        });
    }
    let present: Vec<&ClassScores> = per_class.iter().filter(|s| s.support > 0).collect();
    let mean = |f: fn(&ClassScores) -> f64| {
        if present.is_empty() {
            0.0
        } else {
            present.iter().map(|s| f(s)).sum::<f64>() / present.len() as f64
        }
    };
    F1Report {
        macro_precision: mean(|s| s.precision),
        macro_recall: mean(|s| s.recall),
        macro_f1: mean(|s| s.f1),
        averaged_over: present.iter().map(|s| s.class).collect(),
        per_class,
    }
}

/// Mean absolute error.
pub fn mae(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.is_empty() || truth.len() != pred.len() {
        return Err(Error::argument(format!(
            "MAE needs equal non-empty inputs, got {} and {}",
            truth.len(),
            pred.len()
        )));
    }
    Ok(truth.iter().zip(pred).map(|(t, p)| (t - p).abs()).sum::<f64>() / truth.len() as f64)
}

/// Cohen's kappa between two annotators. When chance agreement is 1 (both
/// used one identical class throughout) the result is 1 if they agree
/// everywhere and 0 otherwise.
pub fn cohens_kappa(a: &[ActivityClass], b: &[ActivityClass]) -> Result<f64> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::argument(format!(
            "kappa needs equal non-empty inputs, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let cm = confusion(a, b)?;
    let agree: u64 = (0..NUM_CLASSES).map(|i| cm.counts[i][i]).sum();
    let p_o = agree as f64 / n;
    let p_e: f64 = (0..NUM_CLASSES)
        .map(|i| {
            let row: u64 = cm.counts[i].iter().sum();
            let col: u64 = cm.counts.iter().map(|r| r[i]).sum();
            (row as f64 / n) * (col as f64 / n)
        })
        .sum();
    if p_e >= 1.0 {
        return Ok(if p_o >= 1.0 { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}
