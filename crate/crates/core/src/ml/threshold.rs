use serde::{Deserialize, Serialize};

use super::MlError;
use crate::trading::{ConfusionCounts, Outcome};

/// Threshold used when validation data cannot rank thresholds.
pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const THRESHOLD_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub c: f64,
    pub counts: ConfusionCounts,
}

impl ThresholdPoint {
    pub fn accuracy(&self) -> Option<f64> {
        self.counts.accuracy()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSelection {
    pub c: f64,
    pub accuracy: Option<f64>,
    /// Only one label occurs; `c` is the default.
    pub single_class: bool,
    /// `c = 0.00, 0.01, ..., 1.00`.
    pub curve: Vec<ThresholdPoint>,
}

/// Confusion counts of the rule "buy when score > c".
pub fn counts_at(scores: &[f64], labels: &[u8], c: f64) -> ConfusionCounts {
    ConfusionCounts::from_outcomes(
        scores
            .iter()
            .zip(labels)
            .map(|(&s, &y)| Outcome::from_call(s > c, y == 1)),
    )
}

/// Scans `c` on a 0.01 grid and keeps the most accurate interior value,
/// the smallest on ties. The end points 0 and 1 are reported in the curve
/// but never chosen, as they buy everything or nothing.
pub fn select_threshold(scores: &[f64], labels: &[u8]) -> Result<ThresholdSelection, MlError> {
    if scores.is_empty() {
        return Err(MlError::EmptyBatch);
    }
    if scores.len() != labels.len() {
        return Err(MlError::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let curve: Vec<ThresholdPoint> = (0..=THRESHOLD_STEPS)
        .map(|k| {
            let c = k as f64 / THRESHOLD_STEPS as f64;
            ThresholdPoint {
                c,
                counts: counts_at(scores, labels, c),
            }
        })
        .collect();
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == labels.len() {
        log::warn!("validation set has a single class; using c = {DEFAULT_THRESHOLD}");
        let accuracy = counts_at(scores, labels, DEFAULT_THRESHOLD).accuracy();
        return Ok(ThresholdSelection {
            c: DEFAULT_THRESHOLD,
            accuracy,
            single_class: true,
            curve,
        });
    }
    let mut best = &curve[1];
    for p in &curve[1..THRESHOLD_STEPS] {
        if p.counts.tp + p.counts.tn > best.counts.tp + best.counts.tn {
            best = p;
        }
    }
    Ok(ThresholdSelection {
        c: best.c,
        accuracy: best.accuracy(),
        single_class: false,
        curve,
    })
}
