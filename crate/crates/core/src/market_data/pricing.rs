use crate::num::{lit, to_f64, Real};

use super::MarketError;

/// Standard normal CDF.
///
/// Evaluated through `erfc` from `libm` (the FreeBSD msun algorithm, accurate
/// to about one ulp), so the absolute error stays far below 1e-12 on the whole
/// real line, including the tails where `1 - erf` would cancel.
pub fn norm_cdf<T: Real>(x: T) -> T {
    let x = to_f64(x);
    lit(0.5 * libm::erfc(-x / std::f64::consts::SQRT_2))
}

/// Black-Scholes price of a European call with zero interest rate.
///
/// At `tau == 0` the payoff `max(s - K, 0)` is returned.
pub fn bs_price<T: Real>(s: T, strike: T, sigma: T, tau: T) -> Result<T, MarketError> {
    let zero = T::zero();
    if !(s > zero) || !(strike > zero) || !(sigma > zero) {
        return Err(MarketError::Domain(format!(
            "bs_price needs positive s, K and sigma (s={s}, K={strike}, sigma={sigma})"
        )));
    }
    if !(tau >= zero) {
        return Err(MarketError::Domain(format!("negative time to maturity {tau}")));
    }
    if tau == zero {
        return Ok((s - strike).max(zero));
    }
    let vol_sqrt = sigma * tau.sqrt();
    let half: T = lit(0.5);
    let theta_plus = ((s / strike).ln() + half * vol_sqrt * vol_sqrt) / vol_sqrt;
    let theta_minus = theta_plus - vol_sqrt;
    let price = s * norm_cdf(theta_plus) - strike * norm_cdf(theta_minus);
    // Rounding can push deep out-of-the-money prices a hair below intrinsic.
    Ok(price.max((s - strike).max(zero)))
}
