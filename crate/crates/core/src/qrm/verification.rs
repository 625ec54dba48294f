//! Manufactured-solution checks for the solver.
//!
//! With `b = 1`, zero boundary data and `z(x) = sin(pi x)` the forward heat
//! problem has the closed-form solution `exp(pi^2 t) sin(pi x)`, which the
//! regularized minimizer should recover on a fine grid and small `beta`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{minimize, BoundaryData, CoefficientField, Grid, GridFunction, QrmError, SolverConfig, StopReason};
use crate::num::{lit, Real};

/// Regularization used for a noise level of zero, where `beta = nu^2`
/// would leave the admissible range `(0, 1)`.
pub const BETA_FLOOR: f64 = 1e-8;

/// Relative L2 error accepted for the default manufactured case. A grid
/// refinement study puts the 64 x 64 error well below this.
pub const RECOVERY_TOLERANCE: f64 = 0.01;

/// Noise levels of the default convergence experiment.
pub const NOISE_LEVELS: [f64; 3] = [1e-1, 1e-2, 1e-3];

/// Share of the horizon excluded from the convergence error.
pub const EPSILON_FRAC: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedCase {
    pub horizon: f64,
    pub nx: usize,
    pub nt: usize,
    pub beta: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ManufacturedCase {
    fn default() -> Self {
        Self {
            horizon: 0.1,
            nx: 64,
            nt: 64,
            beta: 1e-6,
            tol: 1e-8,
            max_iter: 5000,
        }
    }
}

impl ManufacturedCase {
    /// Grid of the convergence experiment. Fine time steps keep the
    /// discretization error below the smallest noise level.
    pub fn convergence() -> Self {
        Self {
            nx: 32,
            nt: 128,
            max_iter: 20_000,
            ..Default::default()
        }
    }

    pub fn exact<T: Real>(x: T, t: T) -> T {
        let pi = T::PI();
        (pi * pi * t).exp() * (pi * x).sin()
    }

    pub fn grid<T: Real>(&self) -> Result<Grid<T>, QrmError> {
        Grid::new(self.nx, self.nt, lit(self.horizon))
    }

    fn solver(&self, beta: f64) -> SolverConfig {
        SolverConfig {
            beta,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedReport {
    /// Relative discrete L2 error over the whole grid.
    pub rel_l2_error: f64,
    /// Relative error of `u(1/2, T/2)`.
    pub est_mid_rel_error: f64,
    /// Relative error of `u(1/2, T)`.
    pub est_end_rel_error: f64,
    pub cg_iterations: usize,
    pub stop: StopReason,
}

/// Trapezoid-weighted L2 norm of `u - v` over nodes with `t <= t_max`.
pub fn l2_error_below<T: Real>(u: &GridFunction<T>, v: &GridFunction<T>, t_max: T) -> T {
    let g = u.grid();
    let w = g.trapezoid_weights();
    let slack = g.ht() * lit(1e-9);
    let mut acc = T::zero();
    for j in 0..=g.nt() {
        if g.t(j) > t_max + slack {
            break;
        }
        for i in 0..=g.nx() {
            let d = u.at(i, j) - v.at(i, j);
            acc = acc + w[(i, j)] * d * d;
        }
    }
    acc.sqrt()
}

/// Solves the manufactured problem and compares with the exact solution.
pub fn manufactured_recovery<T: Real>(case: &ManufacturedCase) -> Result<ManufacturedReport, QrmError> {
    let grid = case.grid::<T>()?;
    let coeff = CoefficientField::constant(&grid, T::one())?;
    let data = BoundaryData::sample(&grid, |_| T::zero(), |_| T::zero(), |x| (T::PI() * x).sin());
    let sol = minimize(&coeff, &data, &grid, &case.solver(case.beta))?;
    let exact = GridFunction::from_fn(grid, ManufacturedCase::exact::<T>);
    let zero = GridFunction::zeros(grid);
    let horizon = grid.horizon();
    let err = l2_error_below(&sol.u, &exact, horizon) / l2_error_below(&exact, &zero, horizon);
    let half: T = lit(0.5);
    let rel = |est: T, t: T| {
        let truth = ManufacturedCase::exact(half, t);
        ((est - truth) / truth).abs().to_f64().unwrap_or(f64::NAN)
    };
    Ok(ManufacturedReport {
        rel_l2_error: err.to_f64().unwrap_or(f64::NAN),
        est_mid_rel_error: rel(sol.est_tau, horizon * half),
        est_end_rel_error: rel(sol.est_2tau, horizon),
        cg_iterations: sol.cg_iterations,
        stop: sol.stop,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub nu: f64,
    pub beta: f64,
    /// Absolute L2 error on `[0, 1] x [0, T - epsilon]`.
    pub error: f64,
    pub cg_iterations: usize,
}

/// Regularization schedule `beta = nu^2` on the manufactured problem.
///
/// The boundary data are perturbed at the time nodes `t > 0` by `nu` times a
/// fixed seeded pattern of uniform `[-1, 1]` draws, so every level sees the
/// same noise shape. The error is measured on `t <= T - epsilon_frac * T`.
pub fn convergence_experiment<T: Real>(
    case: &ManufacturedCase,
    noise_levels: &[f64],
    seed: u64,
    epsilon_frac: f64,
) -> Result<Vec<ConvergenceRow>, QrmError> {
    let grid = case.grid::<T>()?;
    let coeff = CoefficientField::constant(&grid, T::one())?;
    let exact = GridFunction::from_fn(grid, ManufacturedCase::exact::<T>);
    let t_max = grid.horizon() * lit(1.0 - epsilon_frac);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.nt() + 1;
    let pattern: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let (a, b) = (rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
            if j == 0 {
                (0.0, 0.0)
            } else {
                (a, b)
            }
        })
        .collect();

    noise_levels
        .iter()
        .map(|&nu| {
            let beta = (nu * nu).max(BETA_FLOOR);
            let mut data =
                BoundaryData::sample(&grid, |_| T::zero(), |_| T::zero(), |x| (T::PI() * x).sin());
            for (j, &(a, b)) in pattern.iter().enumerate() {
                data.left[j] = data.left[j] + lit(nu * a);
                data.right[j] = data.right[j] + lit(nu * b);
            }
            let sol = minimize(&coeff, &data, &grid, &case.solver(beta))?;
            Ok(ConvergenceRow {
                nu,
                beta,
                error: l2_error_below(&sol.u, &exact, t_max).to_f64().unwrap_or(f64::NAN),
                cg_iterations: sol.cg_iterations,
            })
        })
        .collect()
}
