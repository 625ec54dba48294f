use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::functional::{CoefficientField, Functional};
use super::grid::{Grid, GridFunction};
use super::QrmError;
use crate::num::{lit, Real};
use crate::preprocess::DimensionlessProblem;

/// Dirichlet data on `x = 0`, `x = 1` and initial data on `t = 0`, sampled
/// at grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData<T> {
    /// `u(0, t_j)`, length `nt + 1`.
    pub left: Vec<T>,
    /// `u(1, t_j)`, length `nt + 1`.
    pub right: Vec<T>,
    /// `u(x_i, 0)`, length `nx + 1`.
    pub initial: Vec<T>,
}

impl<T: Real> BoundaryData<T> {
    pub fn sample(
        grid: &Grid<T>,
        left: impl Fn(T) -> T,
        right: impl Fn(T) -> T,
        initial: impl Fn(T) -> T,
    ) -> Self {
        Self {
            left: (0..=grid.nt()).map(|j| left(grid.t(j))).collect(),
            right: (0..=grid.nt()).map(|j| right(grid.t(j))).collect(),
            initial: (0..=grid.nx()).map(|i| initial(grid.x(i))).collect(),
        }
    }

    /// Bid boundary, ask boundary and linear initial profile of a forecasting problem.
    pub fn from_problem(problem: &DimensionlessProblem<T>, grid: &Grid<T>) -> Self {
        Self::sample(
            grid,
            |t| problem.ub_fn.eval(t),
            |t| problem.ua_fn.eval(t),
            |x| problem.g.eval(x),
        )
    }

    fn check(&self, grid: &Grid<T>) -> Result<(), QrmError> {
        let (nx1, nt1) = grid.shape();
        if self.left.len() != nt1 || self.right.len() != nt1 || self.initial.len() != nx1 {
            return Err(QrmError::Data(format!(
                "boundary lengths {}/{}/{} do not match grid {}x{}",
                self.left.len(),
                self.right.len(),
                self.initial.len(),
                nx1,
                nt1
            )));
        }
        let all = self.left.iter().chain(&self.right).chain(&self.initial);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(QrmError::NonFinite("boundary data".into()));
        }
        let tol = |a: T, b: T| (a - b).abs() <= lit::<T>(1e-9) * (T::one() + a.abs().max(b.abs()));
        if !tol(self.left[0], self.initial[0]) || !tol(self.right[0], self.initial[nx1 - 1]) {
            return Err(QrmError::Data("initial profile disagrees with boundary data at t = 0".into()));
        }
        Ok(())
    }

    /// Forces the constrained nodes of `u` to the data.
    fn impose(&self, u: &mut Array2<T>) {
        let nx = u.nrows() - 1;
        for (j, (&l, &r)) in self.left.iter().zip(&self.right).enumerate() {
            u[(0, j)] = l;
            u[(nx, j)] = r;
        }
        for (i, &z) in self.initial.iter().enumerate().take(nx).skip(1) {
            u[(i, 0)] = z;
        }
    }
}

/// A feasible function for the data: `z(x) + (1 - x)(psi0(t) - psi0(0)) + x (psi1(t) - psi1(0))`.
///
/// With a linear initial profile this is `x (u_a(t) - u_b(t)) + u_b(t)`.
/// Constrained nodes are copied from the data so they hold exactly.
pub fn lift_boundary_data<T: Real>(
    data: &BoundaryData<T>,
    grid: &Grid<T>,
) -> Result<GridFunction<T>, QrmError> {
    data.check(grid)?;
    let (l0, r0) = (data.left[0], data.right[0]);
    let mut u = Array2::from_shape_fn(grid.shape(), |(i, j)| {
        let x = grid.x(i);
        data.initial[i] + (T::one() - x) * (data.left[j] - l0) + x * (data.right[j] - r0)
    });
    data.impose(&mut u);
    GridFunction::new(*grid, u)
}

/// Grid samples of `F(x, t) = x (u_a(t) - u_b(t)) + u_b(t)` for a forecasting problem.
pub fn feasible_lift<T: Real>(
    problem: &DimensionlessProblem<T>,
    grid: &Grid<T>,
) -> Result<GridFunction<T>, QrmError> {
    lift_boundary_data(&BoundaryData::from_problem(problem, grid), grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub beta: f64,
    /// Relative gradient norm at which CG stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            beta: 0.01,
            tol: 1e-8,
            max_iter: 5000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Converged,
    MaxIterations,
}

/// Minimizer of the functional over the data-constrained set.
#[derive(Debug, Clone)]
pub struct RegularizedSolution<T> {
    pub u: GridFunction<T>,
    pub beta: T,
    pub j_value: T,
    /// Functional value of the feasible lift, the CG starting point.
    pub j_lift: T,
    pub residual_norm: T,
    pub cg_iterations: usize,
    pub stop: StopReason,
    /// Functional value after every CG iteration, starting with `j_lift`.
    pub history: Vec<T>,
    /// `u(1/2, T/2)`; the one-day forecast when the horizon is two days.
    pub est_tau: T,
    /// `u(1/2, T)`.
    pub est_2tau: T,
}

/// Reads `u` at `(1/2, tau)` and `(1/2, 2 tau)` by bilinear interpolation.
pub fn extract_estimates<T: Real>(u: &GridFunction<T>, tau: T) -> (T, T) {
    let mid: T = lit(0.5);
    (u.interpolate(mid, tau), u.interpolate(mid, tau + tau))
}

fn dot<T: Real>(a: &Array2<T>, b: &Array2<T>) -> T {
    Zip::from(a).and(b).fold(T::zero(), |acc, &x, &y| acc + x * y)
}

fn zero_constrained<T: Real>(v: &mut Array2<T>) {
    let nx = v.nrows() - 1;
    v.row_mut(0).fill(T::zero());
    v.row_mut(nx).fill(T::zero());
    v.column_mut(0).fill(T::zero());
}

fn ensure_finite<T: Real>(v: T, what: &str) -> Result<T, QrmError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(QrmError::NonFinite(what.into()))
    }
}

/// Minimizes the functional over `u = F + w`, `w = 0` on `x = 0`, `x = 1`
/// and `t = 0`, by conjugate gradient on the normal equations
/// `P H P w = -P H F`, starting from `w = 0`.
///
/// Stops when the gradient norm drops below `tol` times its initial value.
/// Reaching `max_iter` is not an error: the last (and best) iterate is
/// returned with [`StopReason::MaxIterations`].
pub fn minimize<T: Real>(
    coeff: &CoefficientField<T>,
    data: &BoundaryData<T>,
    grid: &Grid<T>,
    cfg: &SolverConfig,
) -> Result<RegularizedSolution<T>, QrmError> {
    let functional = Functional::new(*grid, coeff, lit(cfg.beta))?;
    let lift = lift_boundary_data(data, grid)?;
    let f = lift.values();

    let j_lift = ensure_finite(functional.value(f), "functional at the lift")?;
    let mut history = vec![j_lift];

    let mut r = functional.hessian_apply(f);
    r.mapv_inplace(|v| -v);
    zero_constrained(&mut r);
    let mut w = grid.zeros();
    let mut p = r.clone();
    let mut rr = ensure_finite(dot(&r, &r), "initial gradient")?;
    let threshold = lit::<T>(cfg.tol) * rr.sqrt();

    let mut iterations = 0;
    let mut stop = StopReason::Converged;
    while rr.sqrt() > threshold && rr > T::zero() {
        if iterations >= cfg.max_iter {
            stop = StopReason::MaxIterations;
            break;
        }
        let mut hp = functional.hessian_apply(&p);
        zero_constrained(&mut hp);
        let php = dot(&p, &hp);
        if !(php > T::zero()) {
            ensure_finite(php, "curvature")?;
            break;
        }
        let alpha = rr / php;
        w.scaled_add(alpha, &p);
        r.scaled_add(-alpha, &hp);
        let rr_new = ensure_finite(dot(&r, &r), "gradient")?;
        let ratio = rr_new / rr;
        p.mapv_inplace(|v| v * ratio);
        p.scaled_add(T::one(), &r);
        rr = rr_new;
        iterations += 1;
        history.push(ensure_finite(functional.value(&(f + &w)), "functional")?);
    }
    log::trace!("cg: {iterations} iterations, stop = {stop:?}");

    let mut u = f + &w;
    data.impose(&mut u);
    let j_value = ensure_finite(functional.value(&u), "functional")?;
    let residual_norm = functional.residual_norm(&u);
    let u = GridFunction::new(*grid, u)?;
    let (est_tau, est_2tau) = extract_estimates(&u, grid.horizon() * lit(0.5));
    Ok(RegularizedSolution {
        u,
        beta: lit(cfg.beta),
        j_value,
        j_lift,
        residual_norm,
        cg_iterations: iterations,
        stop,
        history,
        est_tau,
        est_2tau,
    })
}

/// Solves the forecasting problem on `[0, 1] x [0, 2 tau]` with an
/// `nx x nt` grid.
pub fn solve_problem<T: Real>(
    problem: &DimensionlessProblem<T>,
    nx: usize,
    nt: usize,
    cfg: &SolverConfig,
) -> Result<RegularizedSolution<T>, QrmError> {
    let grid = Grid::new(nx, nt, problem.horizon())?;
    let coeff = CoefficientField::from_problem(problem, &grid)?;
    let data = BoundaryData::from_problem(problem, &grid);
    minimize(&coeff, &data, &grid, cfg)
}
