//! One-day directional strategy: buy when the forecast for tomorrow is at
//! least today's mid price, then score the calls against what happened.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TradingError {
    #[error("no records to evaluate")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub option_id: String,
    pub date: i64,
    /// Mid price today.
    pub real_0: f64,
    /// Mid price tomorrow.
    pub real_tau: f64,
    /// Forecast of tomorrow's price.
    pub est_tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Buy,
    NoBuy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    TruePositive,
    TrueNegative,
    FalsePositive,
    FalseNegative,
}

impl Outcome {
    /// Combines a call with the ground truth ("tomorrow's mid did not fall").
    pub fn from_call(predicted_buy: bool, rose_or_held: bool) -> Self {
        match (predicted_buy, rose_or_held) {
            (true, true) => Outcome::TruePositive,
            (false, false) => Outcome::TrueNegative,
            (true, false) => Outcome::FalsePositive,
            (false, true) => Outcome::FalseNegative,
        }
    }
}

/// Ties buy.
pub fn decide(r: &TradeRecord) -> Decision {
    if r.est_tau >= r.real_0 {
        Decision::Buy
    } else {
        Decision::NoBuy
    }
}

pub fn classify(r: &TradeRecord) -> Outcome {
    Outcome::from_call(decide(r) == Decision::Buy, r.real_tau >= r.real_0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn add(&mut self, o: Outcome) {
        match o {
            Outcome::TruePositive => self.tp += 1,
            Outcome::TrueNegative => self.tn += 1,
            Outcome::FalsePositive => self.fp += 1,
            Outcome::FalseNegative => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn predicted_positive(&self) -> usize {
        self.tp + self.fp
    }

    pub fn from_outcomes(outcomes: impl IntoIterator<Item = Outcome>) -> Self {
        let mut c = Self::default();
        outcomes.into_iter().for_each(|o| c.add(o));
        c
    }

    pub fn from_records(records: &[TradeRecord]) -> Self {
        Self::from_outcomes(records.iter().map(classify))
    }

    /// `None` when the denominator is zero.
    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Undefined metrics are `None` (serialized as `null`), never zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyMetrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub mean_relative_error: Option<f64>,
    pub n: usize,
    pub counts: ConfusionCounts,
}

impl StrategyMetrics {
    /// Metrics for a method that makes calls but no price forecast.
    pub fn from_counts(c: ConfusionCounts) -> Self {
        Self {
            accuracy: c.accuracy(),
            precision: c.precision(),
            recall: c.recall(),
            mean_relative_error: None,
            n: c.total(),
            counts: c,
        }
    }
}

/// Mean of `|est - real| / real` over tomorrow's prices. Records with a
/// zero real price are left out and logged.
pub fn mean_relative_error(records: &[TradeRecord]) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut dropped = 0usize;
    for r in records {
        if r.real_tau == 0.0 {
            dropped += 1;
            continue;
        }
        sum += ((r.est_tau - r.real_tau) / r.real_tau).abs();
        n += 1;
    }
    if dropped > 0 {
        log::warn!("{dropped} records with zero price left out of the relative error");
    }
    (n > 0).then(|| sum / n as f64)
}

/// Accuracy, precision, recall and mean relative error of forecast records.
pub fn metrics(c: ConfusionCounts, records: &[TradeRecord]) -> Result<StrategyMetrics, TradingError> {
    if records.is_empty() {
        return Err(TradingError::EmptyInput);
    }
    Ok(StrategyMetrics {
        mean_relative_error: mean_relative_error(records),
        ..StrategyMetrics::from_counts(c)
    })
}

pub const MONEYNESS_STEP: f64 = 0.1;

/// Bin index `floor(((s - strike) / s) / step)`. A tiny epsilon absorbs
/// representation error so that e.g. `0.3 / 0.1` lands in bin 3.
pub fn moneyness_bin(stock: f64, strike: f64, step: f64) -> i64 {
    let m = (stock - strike) / stock;
    (m / step + 1e-9).floor() as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoneynessRow {
    pub bin: i64,
    pub lower: f64,
    pub upper: f64,
    pub counts: ConfusionCounts,
    pub precision: Option<f64>,
}

/// Per-bin precision. `items` yields `(stock, strike, outcome)`; bins are
/// returned in increasing order and cover `[min_bin, max_bin]` of the
/// observed data, empty bins included with an undefined precision.
pub fn moneyness_bins(items: impl IntoIterator<Item = (f64, f64, Outcome)>, step: f64) -> Vec<MoneynessRow> {
    let mut by_bin: std::collections::BTreeMap<i64, ConfusionCounts> = Default::default();
    for (s, st, o) in items {
        by_bin.entry(moneyness_bin(s, st, step)).or_default().add(o);
    }
    let (Some(&lo), Some(&hi)) = (by_bin.keys().next(), by_bin.keys().next_back()) else {
        return Vec::new();
    };
    (lo..=hi)
        .map(|bin| {
            let counts = by_bin.get(&bin).copied().unwrap_or_default();
            MoneynessRow {
                bin,
                lower: bin as f64 * step,
                upper: (bin + 1) as f64 * step,
                counts,
                precision: counts.precision(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(est: f64, real_0: f64, real_tau: f64) -> TradeRecord {
        TradeRecord {
            option_id: "A".into(),
            date: 0,
            real_0,
            real_tau,
            est_tau: est,
        }
    }

    #[test]
    fn decision_rule_with_ties() {
        assert_eq!(decide(&rec(2.1, 2.0, 0.0)), Decision::Buy);
        assert_eq!(decide(&rec(2.0, 2.0, 0.0)), Decision::Buy);
        assert_eq!(decide(&rec(1.9, 2.0, 0.0)), Decision::NoBuy);
    }

    #[test]
    fn definitions() {
        assert_eq!(classify(&rec(2.1, 2.0, 2.2)), Outcome::TruePositive);
        assert_eq!(classify(&rec(1.9, 2.0, 1.8)), Outcome::TrueNegative);
        assert_eq!(classify(&rec(2.1, 2.0, 1.9)), Outcome::FalsePositive);
        assert_eq!(classify(&rec(1.9, 2.0, 2.1)), Outcome::FalseNegative);
        // unchanged price counts as a positive outcome
        assert_eq!(classify(&rec(1.9, 2.0, 2.0)), Outcome::FalseNegative);
    }

    #[test]
    fn hand_counted_metrics() {
        let c = ConfusionCounts { tp: 2, tn: 1, fp: 1, fn_: 1 };
        let recs = vec![rec(1.0, 1.0, 1.0); 5];
        let m = metrics(c, &recs).unwrap();
        assert_eq!(m.accuracy, Some(0.6));
        assert_eq!(m.precision, Some(2.0 / 3.0));
        assert_eq!(m.recall, Some(2.0 / 3.0));
        assert_eq!(m.mean_relative_error, Some(0.0));
    }

    #[test]
    fn undefined_metrics() {
        let c = ConfusionCounts { tp: 0, tn: 3, fp: 0, fn_: 0 };
        let m = StrategyMetrics::from_counts(c);
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, None);
        assert_eq!(m.accuracy, Some(1.0));
        assert_eq!(metrics(c, &[]), Err(TradingError::EmptyInput));
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"precision\":null"));
    }

    #[test]
    fn relative_error_skips_zero_prices() {
        let recs = [rec(1.1, 1.0, 1.0), rec(5.0, 1.0, 0.0), rec(0.8, 1.0, 1.0)];
        assert!((mean_relative_error(&recs).unwrap() - 0.15).abs() < 1e-12);
        assert_eq!(mean_relative_error(&[rec(1.0, 1.0, 0.0)]), None);
    }

    #[test]
    fn moneyness_examples() {
        assert_eq!(moneyness_bin(100.0, 100.0, 0.1), 0);
        assert_eq!(moneyness_bin(100.0, 85.0, 0.1), 1);
        assert_eq!(moneyness_bin(100.0, 70.0, 0.1), 3);
        assert_eq!(moneyness_bin(100.0, 105.0, 0.1), -1);
    }

    #[test]
    fn single_bin_precision_equals_global() {
        let recs = [rec(2.1, 2.0, 2.2), rec(2.1, 2.0, 1.9), rec(1.9, 2.0, 2.1), rec(2.5, 2.0, 2.6)];
        let global = ConfusionCounts::from_records(&recs).precision();
        let rows = moneyness_bins(recs.iter().map(|r| (100.0, 96.0, classify(r))), MONEYNESS_STEP);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].precision, global);
    }

    #[test]
    fn empty_bins_are_reported_undefined() {
        let rows = moneyness_bins(
            [(100.0, 100.0, Outcome::TruePositive), (100.0, 65.0, Outcome::TrueNegative)],
            MONEYNESS_STEP,
        );
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[1].precision, None);
        assert_eq!(rows[3].precision, None);
        assert_eq!(rows[0].precision, Some(1.0));
    }

    proptest! {
        #[test]
        fn partition_and_scale_invariance(
            xs in proptest::collection::vec((0.1f64..10.0, 0.1f64..10.0, 0.1f64..10.0), 1..50),
            c in 0.01f64..100.0,
        ) {
            let recs: Vec<_> = xs.iter().map(|&(e, a, b)| rec(e, a, b)).collect();
            let counts = ConfusionCounts::from_records(&recs);
            prop_assert_eq!(counts.total(), recs.len());
            for r in &recs {
                let scaled = rec(c * r.est_tau, c * r.real_0, c * r.real_tau);
                // comparisons of scaled values may differ only at exact ties
                if r.est_tau != r.real_0 && r.real_tau != r.real_0 {
                    prop_assert_eq!(classify(r), classify(&scaled));
                }
            }
            let m = metrics(counts, &recs).unwrap();
            prop_assert_eq!(m.accuracy, Some((counts.tp + counts.tn) as f64 / recs.len() as f64));
        }

        #[test]
        fn perfect_forecast_has_no_errors(
            xs in proptest::collection::vec((0.1f64..10.0, 0.1f64..10.0), 2..50),
        ) {
            let recs: Vec<_> = xs.iter().map(|&(a, b)| rec(b, a, b)).collect();
            let c = ConfusionCounts::from_records(&recs);
            prop_assert_eq!(c.fp + c.fn_, 0);
            if c.tp > 0 && c.tn > 0 {
                let m = StrategyMetrics::from_counts(c);
                prop_assert_eq!(m.precision, Some(1.0));
                prop_assert_eq!(m.recall, Some(1.0));
            }
        }
    }
}
