//! Next-day option price forecasting with the Quasi-Reversibility Method.
//!
//! The Black-Scholes equation is solved forward in time from three days of
//! quotes by minimizing a Tikhonov functional; the forecasts feed a simple
//! buy/no-buy strategy and a pair of small neural networks.
//!
//! Numerical kernels are generic over [`num::Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, which the I/O layers use.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod instability;
pub mod market_data;
pub mod ml;
pub mod num;
pub mod pipeline;
pub mod preprocess;
pub mod qrm;
pub mod trading;

pub type Grid64 = qrm::Grid<f64>;
pub type GridFunction64 = qrm::GridFunction<f64>;
pub type CoefficientField64 = qrm::CoefficientField<f64>;
pub type BoundaryData64 = qrm::BoundaryData<f64>;
pub type RegularizedSolution64 = qrm::RegularizedSolution<f64>;
pub type DimensionlessProblem64 = preprocess::DimensionlessProblem<f64>;
pub type Quadratic64 = preprocess::Quadratic<f64>;
pub type FourierProfile64 = instability::FourierProfile<f64>;
pub type MlpParams64 = ml::MlpParams<f64>;
pub type Dataset64 = ml::Dataset<f64>;
