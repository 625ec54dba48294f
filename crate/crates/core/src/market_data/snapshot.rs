use serde::{Deserialize, Serialize};

use super::MarketError;

/// Upper end of the stock spread ratio seen in practice.
pub const STOCK_SPREAD_OBSERVED_MAX: f64 = 0.003;
/// Upper end of the option spread ratio seen in practice.
pub const OPTION_SPREAD_OBSERVED_MAX: f64 = 0.27;

/// End-of-day quotes for one option on one trading day.
///
/// `date` is a trading-day index: consecutive trading days differ by one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSnapshot {
    pub date: i64,
    pub option_id: String,
    pub strike: f64,
    pub s_b: f64,
    pub s_a: f64,
    pub u_b: f64,
    pub u_a: f64,
    pub ivol: f64,
}

impl MarketSnapshot {
    pub fn stock_mid(&self) -> f64 {
        0.5 * (self.s_b + self.s_a)
    }

    pub fn option_mid(&self) -> f64 {
        0.5 * (self.u_b + self.u_a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadRatios {
    pub f_s: f64,
    pub f_u: f64,
    /// Set when either ratio exceeds the range usually observed in real quotes.
    pub unusual: bool,
}

/// Returns the snapshot unchanged if every quote invariant holds.
///
/// A rejected record is meant to be skipped by the caller, never repaired.
pub fn validate_snapshot(raw: MarketSnapshot) -> Result<MarketSnapshot, MarketError> {
    let reject = |reason: String| MarketError::InvalidQuote {
        option_id: raw.option_id.clone(),
        date: raw.date,
        reason,
    };
    let prices = [
        ("strike", raw.strike),
        ("stock bid", raw.s_b),
        ("stock ask", raw.s_a),
        ("option bid", raw.u_b),
        ("option ask", raw.u_a),
    ];
    for (name, v) in prices {
        if !(v.is_finite() && v > 0.0) {
            return Err(reject(format!("{name} must be positive, got {v}")));
        }
    }
    if !(raw.ivol.is_finite() && raw.ivol > 0.0) {
        return Err(reject(format!("implied volatility must be positive, got {}", raw.ivol)));
    }
    if raw.s_b >= raw.s_a {
        return Err(reject(format!("stock bid {} >= ask {}", raw.s_b, raw.s_a)));
    }
    if raw.u_b >= raw.u_a {
        return Err(reject(format!("option bid {} >= ask {}", raw.u_b, raw.u_a)));
    }
    Ok(raw)
}

pub fn spread_ratios(snap: &MarketSnapshot) -> SpreadRatios {
    let f_s = snap.s_a / snap.s_b - 1.0;
    let f_u = snap.u_a / snap.u_b - 1.0;
    SpreadRatios {
        f_s,
        f_u,
        unusual: f_s > STOCK_SPREAD_OBSERVED_MAX || f_u > OPTION_SPREAD_OBSERVED_MAX,
    }
}
