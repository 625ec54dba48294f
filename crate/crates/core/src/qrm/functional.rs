//! Discrete Tikhonov functional
//!
//! ```text
//! J(u) = sum_w (R u)^2 + beta * sum_w (u^2 + u_x^2 + u_t^2 + u_xx^2 + u_xt^2 + u_tt^2)
//! ```
//!
//! with `R u = u_t + b(x, t) u_xx`, trapezoidal area weights, and the
//! residual accumulated over interior `x` nodes only. `J` is a homogeneous
//! quadratic form `u^T H u`, so its gradient is `2 H u`.

use ndarray::{Array2, Axis, Zip};

use super::grid::{Grid, GridFunction};
use super::stencil::Stencil;
use super::QrmError;
use crate::num::Real;
use crate::preprocess::DimensionlessProblem;

const X: Axis = Axis(0);
const T_AXIS: Axis = Axis(1);

/// Samples of the PDE coefficient `b(x, t)` at every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField<T> {
    values: Array2<T>,
    lower_bound: T,
}

impl<T: Real> CoefficientField<T> {
    /// Fails unless every sample is finite and strictly positive.
    pub fn new(grid: &Grid<T>, values: Array2<T>) -> Result<Self, QrmError> {
        if values.dim() != grid.shape() {
            return Err(QrmError::Shape {
                expected: grid.shape(),
                got: values.dim(),
            });
        }
        let mut lower = T::infinity();
        for &v in values.iter() {
            if !v.is_finite() {
                return Err(QrmError::NonFinite("coefficient field".into()));
            }
            lower = lower.min(v);
        }
        if !(lower > T::zero()) {
            return Err(QrmError::Coefficient(format!("minimum {lower} is not positive")));
        }
        Ok(Self {
            values,
            lower_bound: lower,
        })
    }

    pub fn constant(grid: &Grid<T>, b: T) -> Result<Self, QrmError> {
        Self::new(grid, Array2::from_elem(grid.shape(), b))
    }

    /// `b = sigma(t)^2 A(x)` of the forecasting problem.
    pub fn from_problem(problem: &DimensionlessProblem<T>, grid: &Grid<T>) -> Result<Self, QrmError> {
        Self::new(grid, grid.sample(|x, t| problem.coefficient_at(x, t)))
    }

    #[inline]
    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    /// Smallest sample, the discrete `b0`.
    #[inline]
    pub fn lower_bound(&self) -> T {
        self.lower_bound
    }
}

/// Stencils and quadrature weights for one grid, coefficient and `beta`.
#[derive(Debug, Clone)]
pub struct Functional<T> {
    grid: Grid<T>,
    coeff: Array2<T>,
    beta: T,
    dx: Stencil<T>,
    dxx: Stencil<T>,
    dt: Stencil<T>,
    dtt: Stencil<T>,
    dt_forward: Stencil<T>,
    weights: Array2<T>,
    residual_weights: Array2<T>,
}

impl<T: Real> Functional<T> {
    pub fn new(grid: Grid<T>, coeff: &CoefficientField<T>, beta: T) -> Result<Self, QrmError> {
        if coeff.values().dim() != grid.shape() {
            return Err(QrmError::Shape {
                expected: grid.shape(),
                got: coeff.values().dim(),
            });
        }
        if !(beta > T::zero() && beta < T::one()) {
            return Err(QrmError::Beta(beta.to_f64().unwrap_or(f64::NAN)));
        }
        let (nx, nt) = (grid.nx(), grid.nt());
        let weights = grid.trapezoid_weights();
        let mut residual_weights = weights.clone();
        residual_weights.row_mut(0).fill(T::zero());
        residual_weights.row_mut(nx).fill(T::zero());
        Ok(Self {
            coeff: coeff.values().clone(),
            beta,
            dx: Stencil::first(nx, grid.hx()),
            dxx: Stencil::second(nx, grid.hx()),
            dt: Stencil::first(nt, grid.ht()),
            dtt: Stencil::second(nt, grid.ht()),
            dt_forward: Stencil::forward(nt, grid.ht()),
            weights,
            residual_weights,
            grid,
        })
    }

    #[inline]
    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    #[inline]
    pub fn beta(&self) -> T {
        self.beta
    }

    /// `R_h u = D_t^+ u + b D_xx u`; rows `i = 0` and `i = nx` are zero.
    pub fn residual(&self, u: &Array2<T>) -> Array2<T> {
        let mut r = self.dt_forward.apply(u, T_AXIS);
        let uxx = self.dxx.apply(u, X);
        Zip::from(&mut r)
            .and(&uxx)
            .and(&self.coeff)
            .for_each(|r, &uxx, &b| *r = *r + b * uxx);
        let nx = self.grid.nx();
        r.row_mut(0).fill(T::zero());
        r.row_mut(nx).fill(T::zero());
        r
    }

    /// Weighted discrete L2 norm of the residual.
    pub fn residual_norm(&self, u: &Array2<T>) -> T {
        weighted_square_sum(&self.residual(u), &self.residual_weights).sqrt()
    }

    /// Squared discrete `H^2` norm.
    pub fn sobolev_norm_sq(&self, u: &Array2<T>) -> T {
        let w = &self.weights;
        let ut = self.dt.apply(u, T_AXIS);
        weighted_square_sum(u, w)
            + weighted_square_sum(&self.dx.apply(u, X), w)
            + weighted_square_sum(&ut, w)
            + weighted_square_sum(&self.dxx.apply(u, X), w)
            + weighted_square_sum(&self.dx.apply(&ut, X), w)
            + weighted_square_sum(&self.dtt.apply(u, T_AXIS), w)
    }

    pub fn value(&self, u: &Array2<T>) -> T {
        weighted_square_sum(&self.residual(u), &self.residual_weights)
            + self.beta * self.sobolev_norm_sq(u)
    }

    /// `H u`, half the gradient of the quadratic form.
    pub fn hessian_apply(&self, u: &Array2<T>) -> Array2<T> {
        let mut out = Array2::zeros(u.raw_dim());

        let wr = &self.residual(u) * &self.residual_weights;
        self.dt_forward.apply_transpose_add(&wr, T_AXIS, &mut out);
        let bwr = &wr * &self.coeff;
        self.dxx.apply_transpose_add(&bwr, X, &mut out);

        let w = &self.weights;
        let beta = self.beta;
        let scaled = |v: Array2<T>| {
            let mut v = v * w;
            v.mapv_inplace(|e| e * beta);
            v
        };
        out.scaled_add(T::one(), &scaled(u.clone()));
        self.dx
            .apply_transpose_add(&scaled(self.dx.apply(u, X)), X, &mut out);
        let ut = self.dt.apply(u, T_AXIS);
        self.dxx
            .apply_transpose_add(&scaled(self.dxx.apply(u, X)), X, &mut out);
        self.dtt
            .apply_transpose_add(&scaled(self.dtt.apply(u, T_AXIS)), T_AXIS, &mut out);
        let uxt = scaled(self.dx.apply(&ut, X));
        self.dt.apply_transpose_add(&scaled(ut), T_AXIS, &mut out);
        let mut tmp = Array2::zeros(u.raw_dim());
        self.dx.apply_transpose_add(&uxt, X, &mut tmp);
        self.dt.apply_transpose_add(&tmp, T_AXIS, &mut out);
        out
    }

    /// Gradient of [`Functional::value`] with respect to all node values.
    pub fn gradient(&self, u: &Array2<T>) -> Array2<T> {
        let mut g = self.hessian_apply(u);
        g.mapv_inplace(|v| v + v);
        g
    }
}

fn weighted_square_sum<T: Real>(v: &Array2<T>, w: &Array2<T>) -> T {
    Zip::from(v)
        .and(w)
        .fold(T::zero(), |acc, &v, &w| acc + w * v * v)
}

/// `R_h u` for a grid function.
pub fn residual_operator<T: Real>(
    u: &GridFunction<T>,
    coeff: &CoefficientField<T>,
) -> Result<GridFunction<T>, QrmError> {
    // beta does not enter the residual; any admissible value works here.
    let f = Functional::new(*u.grid(), coeff, T::from_f64(0.5).unwrap())?;
    GridFunction::new(*u.grid(), f.residual(u.values()))
}

/// Value of the discrete functional, ignoring the data constraints.
pub fn functional_value<T: Real>(
    u: &GridFunction<T>,
    coeff: &CoefficientField<T>,
    beta: T,
) -> Result<T, QrmError> {
    Ok(Functional::new(*u.grid(), coeff, beta)?.value(u.values()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid(n: usize, m: usize, horizon: f64) -> Grid<f64> {
        Grid::new(n, m, horizon).unwrap()
    }

    #[test]
    fn residual_annihilates_constants_and_linear_x() {
        let g = grid(8, 6, 0.5);
        let b = CoefficientField::constant(&g, 3.0).unwrap();
        for f in [|_x: f64, _t: f64| 2.5, |x: f64, _t: f64| x] {
            let r = residual_operator(&GridFunction::from_fn(g, f), &b).unwrap();
            assert!(r.values().iter().all(|v| v.abs() < 1e-10));
        }
    }

    #[test]
    fn residual_of_exact_solution_converges() {
        // u = exp(b0 pi^2 t) sin(pi x) solves u_t + b0 u_xx = 0.
        let b0 = 1.0;
        let exact = move |x: f64, t: f64| (b0 * PI * PI * t).exp() * (PI * x).sin();
        let norm_at = |n: usize| {
            let g = grid(n, n, 0.1);
            let b = CoefficientField::constant(&g, b0).unwrap();
            let f = Functional::new(g, &b, 0.5).unwrap();
            f.residual_norm(GridFunction::from_fn(g, exact).values())
        };
        let (coarse, fine) = (norm_at(16), norm_at(32));
        let order = (coarse / fine).log2();
        // Forward differences in t dominate: first order overall.
        assert!(order > 0.9, "observed order {order}");
        // leading term (h_t / 2) u_tt = (h_t / 2) pi^4 u, integrated in closed form
        let ht = 0.1 / 32.0;
        let l2 = (0.5 * ((2.0 * PI * PI * 0.1f64).exp() - 1.0) / (2.0 * PI * PI)).sqrt();
        let predicted = 0.5 * ht * PI.powi(4) * l2;
        assert!((fine / predicted - 1.0).abs() < 0.25, "{fine} vs {predicted}");
    }

    #[test]
    fn value_examples() {
        let g = grid(8, 8, 0.2);
        let b = CoefficientField::constant(&g, 1.0).unwrap();
        let zero = GridFunction::zeros(g);
        assert_eq!(functional_value(&zero, &b, 0.01).unwrap(), 0.0);
        let c = GridFunction::from_fn(g, |_, _| 3.0);
        let v = functional_value(&c, &b, 0.01).unwrap();
        assert!((v - 0.01 * 9.0 * 0.2).abs() < 1e-12);
    }

    #[test]
    fn value_is_the_quadratic_form_of_the_hessian() {
        let g = grid(9, 7, 0.05);
        let b = CoefficientField::new(&g, g.sample(|x, t| 2.0 + x * t)).unwrap();
        let f = Functional::new(g, &b, 0.2).unwrap();
        let u = g.sample(|x, t| (2.0 * x).sin() * (1.0 + 30.0 * t) + x * x);
        let quad = (&u * &f.hessian_apply(&u)).sum();
        let v = f.value(&u);
        assert!((quad - v).abs() < 1e-12 * v);
    }

    #[test]
    fn value_is_homogeneous_of_degree_two() {
        let g = grid(6, 5, 0.3);
        let b = CoefficientField::new(&g, g.sample(|x, t| 1.0 + x + t)).unwrap();
        let u = GridFunction::from_fn(g, |x, t| (3.0 * x).cos() + t * x);
        let u2 = GridFunction::new(g, u.values() * 2.0).unwrap();
        let (a, b2) = (
            functional_value(&u, &b, 0.1).unwrap(),
            functional_value(&u2, &b, 0.1).unwrap(),
        );
        assert!((b2 - 4.0 * a).abs() < 1e-10 * a);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = grid(8, 8, 0.05);
        let b = CoefficientField::new(&g, g.sample(|x, t| 2.0 + x * x + 10.0 * t)).unwrap();
        let f = Functional::new(g, &b, 0.01).unwrap();
        let u = Array2::from_shape_fn(g.shape(), |_| rng.gen_range(-1.0..1.0));
        let grad = f.gradient(&u);
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        for i in 0..=g.nx() {
            for j in 0..=g.nt() {
                let mut up = u.clone();
                up[(i, j)] += h;
                let mut dn = u.clone();
                dn[(i, j)] -= h;
                let fd = (f.value(&up) - f.value(&dn)) / (2.0 * h);
                let rel = (fd - grad[(i, j)]).abs() / grad[(i, j)].abs().max(1e-3);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-6, "worst relative discrepancy {worst}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = grid(4, 4, 1.0);
        assert!(matches!(
            CoefficientField::new(&g, g.sample(|x, _| x)),
            Err(QrmError::Coefficient(_))
        ));
        let b = CoefficientField::constant(&g, 1.0).unwrap();
        assert!(matches!(Functional::new(g, &b, 1.0), Err(QrmError::Beta(_))));
        assert!(matches!(Functional::new(g, &b, 0.0), Err(QrmError::Beta(_))));
    }
}
