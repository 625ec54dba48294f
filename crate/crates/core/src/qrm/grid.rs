use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::QrmError;
use crate::num::{count, lit, Real};

/// Uniform grid on `[0, 1] x [0, horizon]` with nodes `(i hx, j ht)`,
/// `i = 0..=nx`, `j = 0..=nt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    nx: usize,
    nt: usize,
    horizon: T,
}

impl<T: Real> Grid<T> {
    pub fn new(nx: usize, nt: usize, horizon: T) -> Result<Self, QrmError> {
        if nx < 4 || nt < 4 {
            return Err(QrmError::Grid(format!("need nx, nt >= 4, got {nx} x {nt}")));
        }
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(QrmError::Grid(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { nx, nt, horizon })
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[inline]
    pub fn nt(&self) -> usize {
        self.nt
    }

    #[inline]
    pub fn horizon(&self) -> T {
        self.horizon
    }

    #[inline]
    pub fn hx(&self) -> T {
        T::one() / count(self.nx)
    }

    #[inline]
    pub fn ht(&self) -> T {
        self.horizon / count(self.nt)
    }

    #[inline]
    pub fn x(&self, i: usize) -> T {
        count::<T>(i) / count(self.nx)
    }

    #[inline]
    pub fn t(&self, j: usize) -> T {
        self.horizon * count::<T>(j) / count(self.nt)
    }

    /// Array shape `(nx + 1, nt + 1)`.
    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.nx + 1, self.nt + 1)
    }

    pub fn zeros(&self) -> Array2<T> {
        Array2::zeros(self.shape())
    }

    /// Samples `f(x, t)` at every node.
    pub fn sample(&self, f: impl Fn(T, T) -> T) -> Array2<T> {
        Array2::from_shape_fn(self.shape(), |(i, j)| f(self.x(i), self.t(j)))
    }

    /// Composite trapezoidal weights `w_x(i) w_t(j)` over the whole rectangle.
    pub fn trapezoid_weights(&self) -> Array2<T> {
        let half: T = lit(0.5);
        let wx = |i: usize| if i == 0 || i == self.nx { half * self.hx() } else { self.hx() };
        let wt = |j: usize| if j == 0 || j == self.nt { half * self.ht() } else { self.ht() };
        Array2::from_shape_fn(self.shape(), |(i, j)| wx(i) * wt(j))
    }
}

/// Node values of a function on a [`Grid`], indexed `(i, j)` = `(x, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<T> {
    grid: Grid<T>,
    values: Array2<T>,
}

impl<T: Real> GridFunction<T> {
    pub fn new(grid: Grid<T>, values: Array2<T>) -> Result<Self, QrmError> {
        if values.dim() != grid.shape() {
            return Err(QrmError::Shape {
                expected: grid.shape(),
                got: values.dim(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid<T>) -> Self {
        Self {
            values: grid.zeros(),
            grid,
        }
    }

    pub fn from_fn(grid: Grid<T>, f: impl Fn(T, T) -> T) -> Self {
        Self {
            values: grid.sample(f),
            grid,
        }
    }

    #[inline]
    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut Array2<T> {
        &mut self.values
    }

    pub fn into_values(self) -> Array2<T> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[(i, j)]
    }

    /// Bilinear interpolation at `(x, t)`, clamped to the grid rectangle.
    /// Reduces to a node read when `(x, t)` lies on grid lines.
    pub fn interpolate(&self, x: T, t: T) -> T {
        let g = &self.grid;
        let locate = |pos: T, n: usize| -> (usize, T) {
            let s = pos.max(T::zero()).min(count(n));
            let k = s.floor().to_usize().unwrap_or(0).min(n - 1);
            (k, s - count(k))
        };
        let (i, fx) = locate(x / g.hx(), g.nx());
        let (j, ft) = locate(t / g.ht(), g.nt());
        let v = &self.values;
        let one = T::one();
        if fx == T::zero() && ft == T::zero() {
            return v[(i, j)];
        }
        (one - fx) * (one - ft) * v[(i, j)]
            + fx * (one - ft) * v[(i + 1, j)]
            + (one - fx) * ft * v[(i, j + 1)]
            + fx * ft * v[(i + 1, j + 1)]
    }
}
