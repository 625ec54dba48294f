use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::MlError;
use crate::market_data::MarketSnapshot;

pub const N_FEATURES: usize = 13;

/// Column names of the 13 raw features, in order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "est_tau", "est_2tau", "s_a0", "s_b0", "ua_m2", "ua_m1", "ua_0", "ub_m2", "ub_m1", "ub_0",
    "sigma_m2", "sigma_m1", "sigma_0",
];

/// Indices of the option-price-like features normalized as `(v - mu) / sd`.
const PRICE_FEATURES: [usize; 8] = [0, 1, 4, 5, 6, 7, 8, 9];
const STOCK_FEATURES: [usize; 2] = [2, 3];
const OPTION_QUOTES: [usize; 6] = [4, 5, 6, 7, 8, 9];

/// Below this standard deviation a record is treated as degenerate.
pub const DEGENERATE_SD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub option_id: String,
    pub date: i64,
    pub raw: [f64; N_FEATURES],
    pub strike: f64,
    /// 1 when tomorrow's mid is at least today's mid.
    pub label: u8,
    pub real_tau: f64,
}

impl FeatureRecord {
    /// Today's option mid price.
    pub fn real_0(&self) -> f64 {
        0.5 * (self.raw[6] + self.raw[9])
    }

    /// Today's stock mid price.
    pub fn stock(&self) -> f64 {
        0.5 * (self.raw[2] + self.raw[3])
    }

    pub fn est_tau(&self) -> f64 {
        self.raw[0]
    }
}

/// Assembles the feature vector of day 0 and labels it with day 1.
pub fn build_features(
    days: [&MarketSnapshot; 3],
    est_tau: f64,
    est_2tau: f64,
    next_day: &MarketSnapshot,
) -> Result<FeatureRecord, MlError> {
    let [d2, d1, d0] = days;
    let same = [d2, d1, next_day].iter().all(|d| d.option_id == d0.option_id);
    let consecutive = d1.date == d2.date + 1 && d0.date == d1.date + 1 && next_day.date == d0.date + 1;
    if !same || !consecutive {
        return Err(MlError::MissingDay {
            option_id: d0.option_id.clone(),
            date: d0.date,
        });
    }
    let raw = [
        est_tau, est_2tau, d0.s_a, d0.s_b, d2.u_a, d1.u_a, d0.u_a, d2.u_b, d1.u_b, d0.u_b, d2.ivol,
        d1.ivol, d0.ivol,
    ];
    let real_tau = next_day.option_mid();
    Ok(FeatureRecord {
        option_id: d0.option_id.clone(),
        date: d0.date,
        raw,
        strike: d0.strike,
        label: u8::from(real_tau >= d0.option_mid()),
        real_tau,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    /// Mean of the six option bid/ask quotes.
    pub mu: f64,
    /// Sample standard deviation of the same six quotes.
    pub sd: f64,
    pub degenerate: bool,
}

impl NormalizationStats {
    pub fn of(rec: &FeatureRecord) -> Self {
        let quotes = OPTION_QUOTES.map(|k| rec.raw[k]);
        let n = quotes.len() as f64;
        let mu = quotes.iter().sum::<f64>() / n;
        let var = quotes.iter().map(|q| (q - mu) * (q - mu)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        Self {
            mu,
            sd,
            degenerate: !(sd >= DEGENERATE_SD),
        }
    }

    pub fn scale(&self, price: f64) -> f64 {
        if self.degenerate {
            0.0
        } else {
            (price - self.mu) / self.sd
        }
    }

    pub fn unscale(&self, z: f64) -> f64 {
        if self.degenerate {
            self.mu
        } else {
            z * self.sd + self.mu
        }
    }
}

/// Normalized network input. Option prices and forecasts map to
/// `(v - mu) / sd`, stock quotes to `((s - strike) - mu) / sd` (the option
/// mean is subtracted from the stock term as written in the method), and
/// volatilities pass through.
pub fn normalize(rec: &FeatureRecord) -> ([f64; N_FEATURES], NormalizationStats) {
    let stats = NormalizationStats::of(rec);
    let mut out = rec.raw;
    for k in PRICE_FEATURES {
        out[k] = stats.scale(rec.raw[k]);
    }
    for k in STOCK_FEATURES {
        out[k] = stats.scale(rec.raw[k] - rec.strike);
    }
    (out, stats)
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureRow {
    est_tau: f64,
    est_2tau: f64,
    s_a0: f64,
    s_b0: f64,
    ua_m2: f64,
    ua_m1: f64,
    ua_0: f64,
    ub_m2: f64,
    ub_m1: f64,
    ub_0: f64,
    sigma_m2: f64,
    sigma_m1: f64,
    sigma_0: f64,
    label: u8,
    real_tau: f64,
    strike: f64,
    date: i64,
    option_id: String,
}

impl From<&FeatureRecord> for FeatureRow {
    fn from(r: &FeatureRecord) -> Self {
        let x = r.raw;
        Self {
            est_tau: x[0],
            est_2tau: x[1],
            s_a0: x[2],
            s_b0: x[3],
            ua_m2: x[4],
            ua_m1: x[5],
            ua_0: x[6],
            ub_m2: x[7],
            ub_m1: x[8],
            ub_0: x[9],
            sigma_m2: x[10],
            sigma_m1: x[11],
            sigma_0: x[12],
            label: r.label,
            real_tau: r.real_tau,
            strike: r.strike,
            date: r.date,
            option_id: r.option_id.clone(),
        }
    }
}

impl From<FeatureRow> for FeatureRecord {
    fn from(r: FeatureRow) -> Self {
        Self {
            raw: [
                r.est_tau, r.est_2tau, r.s_a0, r.s_b0, r.ua_m2, r.ua_m1, r.ua_0, r.ub_m2, r.ub_m1,
                r.ub_0, r.sigma_m2, r.sigma_m1, r.sigma_0,
            ],
            option_id: r.option_id,
            date: r.date,
            strike: r.strike,
            label: r.label,
            real_tau: r.real_tau,
        }
    }
}

pub fn write_features_csv<W: Write>(writer: W, records: &[FeatureRecord]) -> Result<(), MlError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(FeatureRow::from(r))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_features_csv<R: Read>(reader: R) -> Result<Vec<FeatureRecord>, MlError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<FeatureRow>() {
        let rec = FeatureRecord::from(row?);
        if rec.label > 1 {
            return Err(MlError::Format(format!("label {} is not 0/1", rec.label)));
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(date: i64, mid: f64) -> MarketSnapshot {
        MarketSnapshot {
            date,
            option_id: "A".into(),
            strike: 95.0,
            s_b: 100.0,
            s_a: 100.1,
            u_b: mid - 0.1,
            u_a: mid + 0.1,
            ivol: 0.3,
        }
    }

    #[test]
    fn tie_labels_positive_and_order_is_fixed() {
        let (a, b, c, d) = (snap(1, 2.0), snap(2, 2.1), snap(3, 2.2), snap(4, 2.2));
        let r = build_features([&a, &b, &c], 2.25, 2.3, &d).unwrap();
        assert_eq!(r.label, 1);
        assert_eq!(r.raw.len(), N_FEATURES);
        assert_eq!(r.raw[..4], [2.25, 2.3, 100.1, 100.0]);
        for (got, want) in r.raw[4..7].iter().zip([2.1, 2.2, 2.3]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((r.real_0() - 2.2).abs() < 1e-15);
        let down = snap(4, 2.1);
        assert_eq!(build_features([&a, &b, &c], 2.25, 2.3, &down).unwrap().label, 0);
    }

    #[test]
    fn missing_day_is_reported() {
        let (a, b, c, d) = (snap(1, 2.0), snap(2, 2.1), snap(3, 2.2), snap(5, 2.2));
        assert!(matches!(build_features([&a, &b, &c], 0.0, 0.0, &d), Err(MlError::MissingDay { .. })));
    }

    #[test]
    fn degenerate_record_zeroes_prices() {
        let mut raw = [2.0; N_FEATURES];
        raw[2] = 100.0;
        raw[3] = 99.0;
        raw[10..].copy_from_slice(&[0.2, 0.3, 0.4]);
        let rec = FeatureRecord { option_id: "A".into(), date: 0, raw, strike: 90.0, label: 1, real_tau: 2.0 };
        let (x, s) = normalize(&rec);
        assert!(s.degenerate);
        assert_eq!(s.mu, 2.0);
        assert!(x[..10].iter().all(|&v| v == 0.0));
        assert_eq!(x[10..], [0.2, 0.3, 0.4]);
    }

    #[test]
    fn centered_value_maps_to_zero() {
        let mut raw = [0.0; N_FEATURES];
        raw[4..10].copy_from_slice(&[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        raw[0] = 2.0;
        raw[2] = 10.0;
        raw[3] = 10.0;
        let rec = FeatureRecord { option_id: "A".into(), date: 0, raw, strike: 8.0, label: 1, real_tau: 2.0 };
        let (x, s) = normalize(&rec);
        assert_eq!(s.mu, 2.0);
        assert!((s.sd - 0.8f64.sqrt()).abs() < 1e-15);
        assert_eq!(x[0], 0.0);
        assert_eq!(x[5], 0.0);
        // (s - strike) = 2 = mu
        assert_eq!(x[2], 0.0);

        // swapping bid and ask legs leaves the statistics unchanged
        let mut swapped = rec.clone();
        swapped.raw.swap(4, 7);
        assert_eq!(NormalizationStats::of(&swapped), s);
    }

    #[test]
    fn csv_round_trip() {
        let (a, b, c, d) = (snap(1, 2.0), snap(2, 2.1), snap(3, 2.2), snap(4, 2.3));
        let r = build_features([&a, &b, &c], 2.25, 2.3, &d).unwrap();
        let mut buf = Vec::new();
        write_features_csv(&mut buf, &[r.clone(), r.clone()]).unwrap();
        let header = String::from_utf8(buf.clone()).unwrap();
        assert!(header.starts_with(&(FEATURE_NAMES.join(",") + ",label,real_tau,strike,date")));
        assert_eq!(read_features_csv(buf.as_slice()).unwrap(), vec![r.clone(), r]);
    }
}
