//! One-dimensional finite-difference stencils applied along one grid axis.

use ndarray::{Array2, Axis};

use crate::num::{lit, Real};

/// Sparse `(n + 1) x (n + 1)` difference matrix stored row by row.
#[derive(Debug, Clone)]
pub(crate) struct Stencil<T> {
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Real> Stencil<T> {
    fn from_rows(rows: Vec<Vec<(usize, f64)>>, scale: T) -> Self {
        Self {
            rows: rows
                .into_iter()
                .map(|r| r.into_iter().map(|(k, c)| (k, lit::<T>(c) * scale)).collect())
                .collect(),
        }
    }

    /// First derivative: central inside, second-order one-sided at the ends.
    pub fn first(n: usize, h: T) -> Self {
        let mut rows = Vec::with_capacity(n + 1);
        rows.push(vec![(0, -3.0), (1, 4.0), (2, -1.0)]);
        for i in 1..n {
            rows.push(vec![(i - 1, -1.0), (i + 1, 1.0)]);
        }
        rows.push(vec![(n - 2, 1.0), (n - 1, -4.0), (n, 3.0)]);
        Self::from_rows(rows, T::one() / (h + h))
    }

    /// Second derivative: central inside, second-order one-sided at the ends.
    pub fn second(n: usize, h: T) -> Self {
        let mut rows = Vec::with_capacity(n + 1);
        rows.push(vec![(0, 2.0), (1, -5.0), (2, 4.0), (3, -1.0)]);
        for i in 1..n {
            rows.push(vec![(i - 1, 1.0), (i, -2.0), (i + 1, 1.0)]);
        }
        rows.push(vec![(n - 3, -1.0), (n - 2, 4.0), (n - 1, -5.0), (n, 2.0)]);
        Self::from_rows(rows, T::one() / (h * h))
    }

    /// Forward difference, backward at the last node.
    pub fn forward(n: usize, h: T) -> Self {
        let mut rows: Vec<_> = (0..n).map(|j| vec![(j, -1.0), (j + 1, 1.0)]).collect();
        rows.push(vec![(n - 1, -1.0), (n, 1.0)]);
        Self::from_rows(rows, T::one() / h)
    }

    /// `out = D u` along `axis`.
    pub fn apply(&self, u: &Array2<T>, axis: Axis) -> Array2<T> {
        let mut out = Array2::zeros(u.raw_dim());
        for (r, row) in self.rows.iter().enumerate() {
            let mut lane = out.index_axis_mut(axis, r);
            for &(k, c) in row {
                lane.scaled_add(c, &u.index_axis(axis, k));
            }
        }
        out
    }

    /// `out += D^T v` along `axis`.
    pub fn apply_transpose_add(&self, v: &Array2<T>, axis: Axis, out: &mut Array2<T>) {
        for (r, row) in self.rows.iter().enumerate() {
            let src = v.index_axis(axis, r);
            for &(k, c) in row {
                out.index_axis_mut(axis, k).scaled_add(c, &src);
            }
        }
    }
}
