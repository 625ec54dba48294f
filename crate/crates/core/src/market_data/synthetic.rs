use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{bs_price, MarketError, MarketSnapshot};

pub const TRADING_DAYS_PER_YEAR: f64 = 255.0;

/// Option mids are floored at one price tick so every quote stays positive.
const MIN_OPTION_MID: f64 = 0.01;

/// Geometric Brownian motion stock with Black-Scholes call quotes on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticMarketConfig {
    pub seed: u64,
    pub option_id: String,
    pub n_days: usize,
    /// Trading-day index of the first emitted snapshot.
    pub start_day: i64,
    pub s0: f64,
    /// Annualized drift of the stock.
    pub drift: f64,
    /// Annualized realized volatility of the stock path. Zero gives a
    /// deterministic path.
    pub vol: f64,
    /// Implied volatility quoted with every snapshot and used for pricing.
    pub ivol: f64,
    /// Target stock spread ratio `s_a / s_b - 1`.
    pub stock_spread: f64,
    /// Target option spread ratio `u_a / u_b - 1`.
    pub option_spread: f64,
    pub strike: f64,
    /// Trading days from `start_day` to expiry; must outlast the series.
    pub maturity_days: usize,
}

impl Default for SyntheticMarketConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            option_id: "SYN0".into(),
            n_days: 30,
            start_day: 0,
            s0: 100.0,
            drift: 0.05,
            vol: 0.3,
            ivol: 0.3,
            stock_spread: 0.001,
            option_spread: 0.05,
            strike: 100.0,
            maturity_days: 120,
        }
    }
}

impl SyntheticMarketConfig {
    pub fn validate(&self) -> Result<(), MarketError> {
        let fail = |m: String| Err(MarketError::Config(m));
        if !(self.s0 > 0.0) {
            return fail(format!("s0 must be positive, got {}", self.s0));
        }
        if !(self.vol >= 0.0) || !self.vol.is_finite() {
            return fail(format!("vol must be non-negative, got {}", self.vol));
        }
        if !(self.ivol > 0.0) {
            return fail(format!("ivol must be positive, got {}", self.ivol));
        }
        if self.n_days < 4 {
            return fail(format!("need at least 4 days, got {}", self.n_days));
        }
        if !(self.strike > 0.0) {
            return fail(format!("strike must be positive, got {}", self.strike));
        }
        if self.maturity_days <= self.n_days {
            return fail(format!(
                "maturity_days ({}) must exceed n_days ({})",
                self.maturity_days, self.n_days
            ));
        }
        if !(self.stock_spread > 0.0) || !(self.option_spread > 0.0) {
            return fail("spreads must be strictly positive".into());
        }
        if !self.drift.is_finite() {
            return fail("drift must be finite".into());
        }
        Ok(())
    }
}

/// Splits `mid` into bid/ask symmetrically so that `ask / bid - 1 == spread`.
fn quote_around(mid: f64, spread: f64) -> (f64, f64) {
    let half = spread / (2.0 + spread);
    (mid * (1.0 - half), mid * (1.0 + half))
}

/// Generates `n_days` consecutive snapshots. Identical configs give
/// bit-identical output.
pub fn simulate_market(cfg: &SyntheticMarketConfig) -> Result<Vec<MarketSnapshot>, MarketError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dt = 1.0 / TRADING_DAYS_PER_YEAR;
    let step_drift = (cfg.drift - 0.5 * cfg.vol * cfg.vol) * dt;
    let step_vol = cfg.vol * dt.sqrt();

    let mut out = Vec::with_capacity(cfg.n_days);
    let mut s = cfg.s0;
    for k in 0..cfg.n_days {
        if k > 0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            s *= (step_drift + step_vol * z).exp();
        }
        let tau = (cfg.maturity_days - k) as f64 * dt;
        let mid = bs_price(s, cfg.strike, cfg.ivol, tau)?.max(MIN_OPTION_MID);
        let (s_b, s_a) = quote_around(s, cfg.stock_spread);
        let (u_b, u_a) = quote_around(mid, cfg.option_spread);
        out.push(MarketSnapshot {
            date: cfg.start_day + k as i64,
            option_id: cfg.option_id.clone(),
            strike: cfg.strike,
            s_b,
            s_a,
            u_b,
            u_a,
            ivol: cfg.ivol,
        });
    }
    Ok(out)
}
