//! Scalar fields sampled on the space-time grid and the discrete
//! differential operators acting on them.

use std::sync::Arc;

use crate::domain::{Axis, Grid};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stencil::{self, Deriv};

/// One real value per space-time node of a shared grid.
#[derive(Debug, Clone)]
pub struct ScalarField<T> {
    grid: Arc<Grid<T>>,
    values: Vec<T>,
}

impl<T: Scalar> PartialEq for ScalarField<T> {
    fn eq(&self, other: &Self) -> bool {
        self.same_grid(other) && self.values == other.values
    }
}

impl<T: Scalar> ScalarField<T> {
    pub fn zeros(grid: Arc<Grid<T>>) -> Self {
        let n = grid.n_nodes();
        Self { grid, values: vec![T::zero(); n] }
    }

    pub fn from_values(grid: Arc<Grid<T>>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.n_nodes()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite field value {v}")));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x1, x2, t)` at every node.
    pub fn from_fn(grid: Arc<Grid<T>>, f: impl Fn(T, T, T) -> T) -> Self {
        let mut values = Vec::with_capacity(grid.n_nodes());
        for k in 0..grid.nt {
            let t = grid.t(k);
            for i2 in 0..grid.nx2() {
                let x2 = grid.x2(i2);
                for i1 in 0..grid.nx1 {
                    values.push(f(grid.x1(i1), x2, t));
                }
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch("fields live on different grids".into()))
        }
    }

    #[inline]
    pub fn at(&self, i1: usize, i2: usize, k: usize) -> T {
        self.values[self.grid.index(i1, i2, k)]
    }

    /// Values at time level `k`.
    pub fn slice(&self, k: usize) -> &[T] {
        let ns = self.grid.n_space();
        &self.values[k * ns..(k + 1) * ns]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [T] {
        let ns = self.grid.n_space();
        &mut self.values[k * ns..(k + 1) * ns]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert!(self.same_grid(other));
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Field reflected in time, `f(x, T - t)`.
    pub fn time_reversed(&self) -> Self {
        let nt = self.grid.nt;
        let mut out = Self::zeros(self.grid.clone());
        for k in 0..nt {
            out.slice_mut(k).copy_from_slice(self.slice(nt - 1 - k));
        }
        out
    }

    /// Applies a 1-D derivative stencil along `axis`.
    pub fn derivative(&self, axis: Axis, kind: Deriv) -> Self {
        Self { grid: self.grid.clone(), values: apply_axis(&self.grid, &self.values, axis, kind, false) }
    }

    /// Time derivative `f_t`.
    pub fn d_t(&self) -> Self {
        self.derivative(Axis::Time, Deriv::First)
    }

    /// Spatial gradient, one field per spatial axis.
    pub fn grad(&self) -> Vec<Self> {
        self.grid.space_axes().into_iter().map(|a| self.derivative(a, Deriv::First)).collect()
    }

    /// Spatial Hessian `[i][j]`; diagonal from second-derivative stencils,
    /// mixed entries by composing first-derivative stencils.
    pub fn hessian(&self) -> Vec<Vec<Self>> {
        let axes = self.grid.space_axes();
        let first: Vec<Self> = axes.iter().map(|&a| self.derivative(a, Deriv::First)).collect();
        axes.iter()
            .enumerate()
            .map(|(i, &ai)| {
                axes.iter()
                    .enumerate()
                    .map(|(j, _)| {
                        if i == j {
                            self.derivative(ai, Deriv::Second)
                        } else {
                            first[j].derivative(ai, Deriv::First)
                        }
                    })
                    .collect()
            })
            .collect()
    }

    pub fn laplacian(&self) -> Self {
        let mut out = Self::zeros(self.grid.clone());
        for a in self.grid.space_axes() {
            let d = apply_axis(&self.grid, &self.values, a, Deriv::Second, false);
            for (o, v) in out.values.iter_mut().zip(d) {
                *o += v;
            }
        }
        out
    }
}

/// Applies a 1-D stencil (or its transpose) along every grid line parallel to `axis`.
pub fn apply_axis<T: Scalar>(grid: &Grid<T>, input: &[T], axis: Axis, kind: Deriv, transpose: bool) -> Vec<T> {
    let len = grid.axis_len(axis);
    let stride = grid.axis_stride(axis);
    let h = grid.spacing(axis);
    let rows: Vec<_> = (0..len).map(|j| stencil::row(kind, j, len, h)).collect();
    let mut out = vec![T::zero(); input.len()];
    for start in line_starts(grid, axis) {
        for (j, r) in rows.iter().enumerate() {
            let dst = start + j * stride;
            for &(l, c) in r {
                let src = start + l * stride;
                if transpose {
                    out[src] += c * input[dst];
                } else {
                    out[dst] += c * input[src];
                }
            }
        }
    }
    out
}

/// Flat index of the first node of every grid line parallel to `axis`.
pub fn line_starts<T: Scalar>(grid: &Grid<T>, axis: Axis) -> Vec<usize> {
    let ns = grid.n_space();
    let nx1 = grid.nx1;
    let nx2 = grid.nx2();
    let mut starts = Vec::new();
    match axis {
        Axis::Space(0) => {
            for k in 0..grid.nt {
                for i2 in 0..nx2 {
                    starts.push(k * ns + i2 * nx1);
                }
            }
        }
        Axis::Space(_) => {
            for k in 0..grid.nt {
                for i1 in 0..nx1 {
                    starts.push(k * ns + i1);
                }
            }
        }
        Axis::Time => starts.extend(0..ns),
    }
    starts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, DomainSpec};
    use approx::assert_relative_eq;

    fn grid1(nx: usize, nt: usize) -> Arc<Grid<f64>> {
        Arc::new(build_grid(DomainSpec::one_d(1.0, 2.0, 1.0, 1.0), nx, &[], nt).unwrap())
    }

    fn grid2(nx: usize, ny: usize, nt: usize) -> Arc<Grid<f64>> {
        Arc::new(build_grid(DomainSpec::two_d(1.0, 2.0, 0.5, 1.0, 1.0), nx, &[ny], nt).unwrap())
    }

    #[test]
    fn linear_in_x1() {
        let g = grid2(7, 6, 5);
        let f = ScalarField::from_fn(g, |x1, _, _| x1);
        let grad = f.grad();
        assert!(grad[0].values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(grad[1].values().iter().all(|v| v.abs() < 1e-12));
        assert!(f.laplacian().max_abs() < 1e-9);
    }

    #[test]
    fn time_derivative_of_t_squared() {
        let g = grid1(5, 9);
        let f = ScalarField::from_fn(g.clone(), |_, _, t| t * t);
        let ft = f.d_t();
        for k in 0..g.nt {
            for i in 0..g.nx1 {
                assert_relative_eq!(ft.at(i, 0, k), 2.0 * g.t(k), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn mixed_derivative_of_product() {
        let g = grid2(8, 7, 4);
        let f = ScalarField::from_fn(g.clone(), |x1, x2, t| x1 * x2 * (1.0 + t));
        let h = f.hessian();
        for (idx, v) in h[0][1].values().iter().enumerate() {
            let k = idx / g.n_space();
            assert_relative_eq!(*v, 1.0 + g.t(k), epsilon = 1e-10);
        }
        assert!(h[0][0].max_abs() < 1e-8);
        for (a, b) in h[0][1].values().iter().zip(h[1][0].values()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-10);
        }
    }

    /// Laplacian of sin(pi x1) converges at second order under refinement.
    #[test]
    fn laplacian_refinement_order() {
        let err = |nx: usize| {
            let g = grid1(nx, 4);
            let f = ScalarField::from_fn(g.clone(), |x, _, _| (std::f64::consts::PI * x).sin());
            let lap = f.laplacian();
            let pi2 = std::f64::consts::PI.powi(2);
            (0..nx)
                .map(|i| (lap.at(i, 0, 0) + pi2 * (std::f64::consts::PI * g.x1(i)).sin()).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2, e3) = (err(21), err(41), err(81));
        let p1 = (e1 / e2).log2();
        let p2 = (e2 / e3).log2();
        assert!(p1 > 1.9 && p2 > 1.9, "orders {p1} {p2}");
    }

    #[test]
    fn transpose_is_adjoint() {
        let g = grid2(6, 5, 5);
        let n = g.n_nodes();
        let x: Vec<f64> = (0..n).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.1).collect();
        let y: Vec<f64> = (0..n).map(|i| ((i * 13 % 7) as f64 - 3.0) * 0.2).collect();
        for axis in g.axes() {
            for kind in [Deriv::First, Deriv::Second] {
                let ax = apply_axis(&g, &x, axis, kind, false);
                let aty = apply_axis(&g, &y, axis, kind, true);
                let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
                let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
                assert_relative_eq!(lhs, rhs, epsilon = 1e-10, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn time_reversal_flips_time_derivative() {
        let g = grid1(5, 7);
        let f = ScalarField::from_fn(g, |x, _, t| x * (t * t * t + t));
        let lhs = f.time_reversed().d_t();
        let rhs = f.d_t().time_reversed().scale(-1.0);
        for (a, b) in lhs.values().iter().zip(rhs.values()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_length() {
        let g = grid1(5, 5);
        assert!(ScalarField::from_values(g.clone(), vec![0.0; 3]).is_err());
        assert!(ScalarField::from_values(g, vec![f64::NAN; 25]).is_err());
    }
}
