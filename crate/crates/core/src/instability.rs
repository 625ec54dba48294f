//! Norm blow-up of the heat equation run backwards in time.
//!
//! For `u_t + u_xx = 0` on `(0, pi)` with zero Dirichlet data and
//! `u(x, 0) = f(x) = sum f_n sin(n x)`, the solution is
//! `sum f_n sin(n x) exp(n^2 t)`. Truncating at `N` modes gives
//! `||u_N(., T)||^2 = (pi / 2) sum f_n^2 exp(2 n^2 T)`, which grows without
//! bound in `N` and `T`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{count, lit, Real};

/// Largest exponent `2 N^2 T` evaluated before reporting overflow.
pub const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Error, PartialEq)]
pub enum InstabilityError {
    #[error("need N >= 1 and at least {needed} samples, got N = {order} with {samples} samples")]
    Resolution {
        order: usize,
        samples: usize,
        needed: usize,
    },
    #[error("exponent 2 N^2 T = {0} exceeds the overflow guard")]
    Overflow(f64),
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
}

/// Sine-series coefficients `f_1 ..= f_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierProfile<T> {
    pub coefficients: Vec<T>,
}

impl<T: Real> FourierProfile<T> {
    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    /// Profile with a single unit mode `n`.
    pub fn single_mode(n: usize) -> Self {
        let mut coefficients = vec![T::zero(); n];
        coefficients[n - 1] = T::one();
        Self { coefficients }
    }

    /// Keeps the first `n` modes.
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            coefficients: self.coefficients.iter().copied().take(n).collect(),
        }
    }
}

/// `f_n = (2 / pi) int_0^pi f(x) sin(n x) dx` by the composite trapezoid
/// rule on samples `f(k pi / M)`, `k = 0..=M`.
pub fn sine_coefficients<T: Real>(samples: &[T], order: usize) -> Result<FourierProfile<T>, InstabilityError> {
    let needed = 4 * order;
    if order == 0 || samples.len() < needed.max(2) {
        return Err(InstabilityError::Resolution {
            order,
            samples: samples.len(),
            needed,
        });
    }
    let m = samples.len() - 1;
    let h = T::PI() / count(m);
    let half: T = lit(0.5);
    let coefficients = (1..=order)
        .map(|n| {
            let sum: T = samples
                .iter()
                .enumerate()
                .map(|(k, &f)| {
                    let w = if k == 0 || k == m { half } else { T::one() };
                    w * f * (count::<T>(n * k) * h).sin()
                })
                .sum();
            lit::<T>(2.0) / T::PI() * h * sum
        })
        .collect();
    Ok(FourierProfile { coefficients })
}

/// `sqrt((pi / 2) sum_n f_n^2 exp(2 n^2 T))`.
pub fn truncated_norm_at_t<T: Real>(profile: &FourierProfile<T>, time: T) -> Result<T, InstabilityError> {
    let t64 = time.to_f64().unwrap_or(f64::NAN);
    if !(t64 >= 0.0) {
        return Err(InstabilityError::NegativeTime(t64));
    }
    let n = profile.order();
    let exponent = 2.0 * (n * n) as f64 * t64;
    if exponent > MAX_EXPONENT {
        return Err(InstabilityError::Overflow(exponent));
    }
    let two: T = lit(2.0);
    let sum: T = profile
        .coefficients
        .iter()
        .enumerate()
        .map(|(k, &f)| {
            let nn = count::<T>((k + 1) * (k + 1));
            f * f * (two * nn * time).exp()
        })
        .sum();
    Ok((T::FRAC_PI_2() * sum).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstabilityRow {
    pub n: usize,
    pub t: f64,
    /// `+inf` when the overflow guard trips.
    pub norm: f64,
    pub growth_ratio: f64,
}

/// Norm and growth ratio `norm(T) / norm(0)` for every truncation order and time.
pub fn instability_table(profile: &FourierProfile<f64>, orders: &[usize], times: &[f64]) -> Vec<InstabilityRow> {
    let mut rows = Vec::with_capacity(orders.len() * times.len());
    for &n in orders {
        let p = profile.truncated(n);
        let base = truncated_norm_at_t(&p, 0.0).unwrap_or(f64::NAN);
        for &t in times {
            let norm = match truncated_norm_at_t(&p, t) {
                Ok(v) => v,
                Err(InstabilityError::Overflow(_)) => f64::INFINITY,
                Err(_) => f64::NAN,
            };
            rows.push(InstabilityRow {
                n,
                t,
                norm,
                growth_ratio: norm / base,
            });
        }
    }
    rows
}

pub fn write_instability_csv<W: std::io::Write>(writer: W, rows: &[InstabilityRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["N", "T", "norm", "growth_ratio"])?;
    for r in rows {
        w.write_record([r.n.to_string(), r.t.to_string(), r.norm.to_string(), r.growth_ratio.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Samples of `f` at `k pi / m`, `k = 0..=m`.
pub fn sample_on_half_period(f: impl Fn(f64) -> f64, m: usize) -> Vec<f64> {
    (0..=m).map(|k| f(k as f64 * std::f64::consts::PI / m as f64)).collect()
}
