//! Turns three consecutive days of quotes into the dimensionless forward
//! problem on `(0, 1) x (0, 2 tau)`.
//!
//! Bid/ask prices and implied volatility are fitted with quadratics through
//! `t = -2 tau, -tau, 0` and the fitted polynomials are evaluated on
//! `[0, 2 tau]`. The stock bid/ask interval of today is mapped onto `x` in
//! `[0, 1]` and time is measured in years of 255 trading days.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{MarketSnapshot, TRADING_DAYS_PER_YEAR};
use crate::num::{lit, Real};

/// One trading day in years.
pub const ONE_DAY: f64 = 1.0 / TRADING_DAYS_PER_YEAR;

/// Lower clamp applied to the extrapolated volatility.
pub const SIGMA_FLOOR: f64 = 1e-4;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("evaluation time {t} outside [-2 tau, 2 tau] with tau = {tau}")]
    Range { t: f64, tau: f64 },
    #[error("stock ask {s_a} must exceed bid {s_b}")]
    Domain { s_b: f64, s_a: f64 },
    #[error("inconsistent series: {0}")]
    InconsistentSeries(String),
    #[error("invalid boundary data at t = {t}: {reason}")]
    InvalidBoundary { t: f64, reason: String },
}

/// `q(t) = c0 + c1 t + c2 t^2` fitted on the nodes `-2 tau, -tau, 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadratic<T> {
    pub c0: T,
    pub c1: T,
    pub c2: T,
    /// Node spacing used for the fit; bounds the admissible evaluation range.
    pub tau: T,
}

impl<T: Real> Quadratic<T> {
    pub fn constant(c: T, tau: T) -> Self {
        Self {
            c0: c,
            c1: T::zero(),
            c2: T::zero(),
            tau,
        }
    }

    /// Plain polynomial evaluation, no range check.
    #[inline]
    pub fn eval(&self, t: T) -> T {
        self.c0 + t * (self.c1 + t * self.c2)
    }
}

/// Interpolates `values` taken at `t = -2 tau, -tau, 0`.
pub fn fit_quadratic<T: Real>(values: [T; 3], tau: T) -> Quadratic<T> {
    let [y0, y1, y2] = values;
    let half: T = lit(0.5);
    let three: T = lit(3.0);
    let two: T = lit(2.0);
    let four: T = lit(4.0);
    // In the scaled variable s = t / tau the nodes are -2, -1, 0.
    let a = (y0 - four * y1 + three * y2) * half;
    let b = (y0 - two * y1 + y2) * half;
    Quadratic {
        c0: y2,
        c1: a / tau,
        c2: b / (tau * tau),
        tau,
    }
}

/// Evaluates `q` at `t`, rejecting times outside `[-2 tau, 2 tau]`.
pub fn extrapolate<T: Real>(q: &Quadratic<T>, t: T) -> Result<T, PreprocessError> {
    let limit = q.tau * lit(2.0) * (T::one() + lit(1e-12));
    if !(t.abs() <= limit) {
        return Err(PreprocessError::Range {
            t: t.to_f64().unwrap_or(f64::NAN),
            tau: q.tau.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(q.eval(t))
}

/// Coefficient of `u_xx` after the change of variables:
/// `A(x) = (255 / 2) [x (s_a - s_b) + s_b]^2 / (s_a - s_b)^2`.
pub fn a_coefficient<T: Real>(x: T, s_b0: T, s_a0: T) -> Result<T, PreprocessError> {
    if !(s_a0 > s_b0) || !(s_b0 > T::zero()) {
        return Err(PreprocessError::Domain {
            s_b: s_b0.to_f64().unwrap_or(f64::NAN),
            s_a: s_a0.to_f64().unwrap_or(f64::NAN),
        });
    }
    let width = s_a0 - s_b0;
    let s = x * width + s_b0;
    Ok(lit::<T>(TRADING_DAYS_PER_YEAR * 0.5) * s * s / (width * width))
}

/// Linear initial condition `g(x) = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearProfile<T> {
    pub slope: T,
    pub intercept: T,
}

impl<T: Real> LinearProfile<T> {
    #[inline]
    pub fn eval(&self, x: T) -> T {
        self.slope * x + self.intercept
    }
}

/// Forward-in-time problem for one option on one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessProblem<T> {
    pub option_id: String,
    /// Trading-day index of "today" (`t = 0`).
    pub date: i64,
    pub s_b0: T,
    pub s_a0: T,
    pub sigma_fn: Quadratic<T>,
    pub ub_fn: Quadratic<T>,
    pub ua_fn: Quadratic<T>,
    pub tau: T,
    pub g: LinearProfile<T>,
}

impl<T: Real> DimensionlessProblem<T> {
    /// Time horizon of the forecast, `2 tau`.
    pub fn horizon(&self) -> T {
        self.tau + self.tau
    }

    /// Extrapolated volatility, clamped below at [`SIGMA_FLOOR`].
    pub fn sigma_at(&self, t: T) -> T {
        self.sigma_fn.eval(t).max(lit(SIGMA_FLOOR))
    }

    /// PDE coefficient `sigma(t)^2 A(x)`.
    pub fn coefficient_at(&self, x: T, t: T) -> T {
        let s = self.sigma_at(t);
        let a = a_coefficient(x, self.s_b0, self.s_a0).expect("validated at assembly");
        s * s * a
    }
}

/// Assembles the forward problem from the quotes of days `-2`, `-1` and `0`.
///
/// Boundary data are checked at the `time_steps + 1` grid times on
/// `[0, 2 tau]`; extrapolated bid crossing ask or a non-positive volatility
/// rejects the option for that day.
pub fn assemble_problem<T: Real>(
    day_minus2: &MarketSnapshot,
    day_minus1: &MarketSnapshot,
    day0: &MarketSnapshot,
    time_steps: usize,
) -> Result<DimensionlessProblem<T>, PreprocessError> {
    let days = [day_minus2, day_minus1, day0];
    if days.iter().any(|d| d.option_id != day0.option_id) {
        return Err(PreprocessError::InconsistentSeries(format!(
            "option ids differ: {}, {}, {}",
            day_minus2.option_id, day_minus1.option_id, day0.option_id
        )));
    }
    if day_minus1.date != day_minus2.date + 1 || day0.date != day_minus1.date + 1 {
        return Err(PreprocessError::InconsistentSeries(format!(
            "days {}, {}, {} are not consecutive",
            day_minus2.date, day_minus1.date, day0.date
        )));
    }
    let tau: T = lit(ONE_DAY);
    let fit = |f: fn(&MarketSnapshot) -> f64| fit_quadratic(days.map(|d| lit(f(d))), tau);
    let ub_fn = fit(|d| d.u_b);
    let ua_fn = fit(|d| d.u_a);
    let sigma_fn = fit(|d| d.ivol);

    let s_b0: T = lit(day0.s_b);
    let s_a0: T = lit(day0.s_a);
    a_coefficient(T::zero(), s_b0, s_a0)?;

    let horizon = tau + tau;
    let steps = time_steps.max(1);
    for j in 0..=steps {
        let t = horizon * lit::<T>(j as f64 / steps as f64);
        let (ub, ua, sig) = (ub_fn.eval(t), ua_fn.eval(t), sigma_fn.eval(t));
        let t64 = t.to_f64().unwrap_or(f64::NAN);
        if !(ub < ua) {
            return Err(PreprocessError::InvalidBoundary {
                t: t64,
                reason: format!("bid {ub} >= ask {ua}"),
            });
        }
        if !(sig > T::zero()) {
            return Err(PreprocessError::InvalidBoundary {
                t: t64,
                reason: format!("volatility {sig} <= 0"),
            });
        }
    }

    let (ub0, ua0) = (ub_fn.eval(T::zero()), ua_fn.eval(T::zero()));
    Ok(DimensionlessProblem {
        option_id: day0.option_id.clone(),
        date: day0.date,
        s_b0,
        s_a0,
        sigma_fn,
        ub_fn,
        ua_fn,
        tau,
        g: LinearProfile {
            slope: ua0 - ub0,
            intercept: ub0,
        },
    })
}
