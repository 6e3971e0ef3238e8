//! Discrete Sobolev norms on the space-time cylinder.
//!
//! Quadrature is the trapezoidal rule on the tensor grid. A time window keeps
//! the full-grid weights of its levels.

use crate::domain::{Grid, TimeWindow};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::scalar::Scalar;
use crate::stencil::trapezoid_weights;

/// Trapezoidal spatial weights for one time slice.
pub fn space_weights<T: Scalar>(grid: &Grid<T>) -> Vec<T> {
    let w1 = trapezoid_weights(grid.nx1, grid.hx1);
    let w2 = if grid.dim() == 2 { trapezoid_weights(grid.nx2(), grid.hxi[0]) } else { vec![T::one()] };
    let mut w = Vec::with_capacity(grid.n_space());
    for b in &w2 {
        for a in &w1 {
            w.push(*a * *b);
        }
    }
    w
}

/// Space-time quadrature weights of the full cylinder restricted to `window`
/// (zero elsewhere), so that the norm is monotone in the region.
pub fn cylinder_weights<T: Scalar>(grid: &Grid<T>, window: TimeWindow) -> Vec<T> {
    let ws = space_weights(grid);
    let wt = trapezoid_weights(grid.nt, grid.ht);
    let ns = grid.n_space();
    let mut w = vec![T::zero(); grid.n_nodes()];
    for k in window.levels() {
        for s in 0..ns {
            w[k * ns + s] = ws[s] * wt[k];
        }
    }
    w
}

/// Weights over the full cylinder `Q_T`.
pub fn full_weights<T: Scalar>(grid: &Grid<T>) -> Vec<T> {
    cylinder_weights(grid, TimeWindow::full(grid.nt))
}

/// `sum w_i f_i^2`.
pub fn weighted_sq_sum<T: Scalar>(w: &[T], f: &[T]) -> T {
    w.iter().zip(f).fold(T::zero(), |acc, (w, f)| acc + *w * *f * *f)
}

/// Squared `H^{2,1}` integrand summed against the weights:
/// `f^2 + |grad f|^2 + |D^2 f|^2 + f_t^2`.
pub fn h21_sq_weighted<T: Scalar>(f: &ScalarField<T>, w: &[T]) -> T {
    let mut total = weighted_sq_sum(w, f.values());
    for g in f.grad() {
        total += weighted_sq_sum(w, g.values());
    }
    for row in f.hessian() {
        for h in row {
            total += weighted_sq_sum(w, h.values());
        }
    }
    total + weighted_sq_sum(w, f.d_t().values())
}

/// Discrete `H^{2,1}` norm of `f` over the time window (e.g. `Q_{T,eps}`).
pub fn norm_h21_cylinder<T: Scalar>(f: &ScalarField<T>, window: TimeWindow) -> Result<T> {
    if window.is_empty() || window.k_hi >= f.grid().nt {
        return Err(Error::EmptyRegion(format!("time window {window:?} is empty or out of range")));
    }
    let w = cylinder_weights(f.grid(), window);
    Ok(h21_sq_weighted(f, &w).sqrt())
}

/// Squared `H^1(Omega)` norm of the time slice at level `k`.
pub fn h1_slice_sq<T: Scalar>(f: &ScalarField<T>, grad: &[ScalarField<T>], k: usize) -> T {
    let ws = space_weights(f.grid());
    let mut total = weighted_sq_sum(&ws, f.slice(k));
    for g in grad {
        total += weighted_sq_sum(&ws, g.slice(k));
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, shrink_cylinder, DomainSpec};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn grid1(nx: usize, nt: usize) -> Arc<Grid<f64>> {
        Arc::new(build_grid(DomainSpec::one_d(1.0, 2.0, 1.0, 1.0), nx, &[], nt).unwrap())
    }

    #[test]
    fn zero_and_homogeneity() {
        let g = grid1(9, 9);
        let w = shrink_cylinder(&g, 0.1).unwrap();
        let z = ScalarField::zeros(g.clone());
        assert_eq!(norm_h21_cylinder(&z, w).unwrap(), 0.0);
        let f = ScalarField::from_fn(g, |x, _, t| (x * t).sin() + x * x);
        let n = norm_h21_cylinder(&f, w).unwrap();
        assert_relative_eq!(norm_h21_cylinder(&f.scale(-3.5), w).unwrap(), 3.5 * n, max_relative = 1e-13);
    }

    /// f = x1 on the full cylinder: integrand x1^2 + 1, summed by brute force.
    #[test]
    fn linear_field_matches_brute_force_sum() {
        let (nx, nt) = (11, 7);
        let g = grid1(nx, nt);
        let f = ScalarField::from_fn(g.clone(), |x, _, _| x);
        let window = TimeWindow::full(nt);
        let got = norm_h21_cylinder(&f, window).unwrap();

        let hx = 0.1;
        let ht = 1.0 / 6.0;
        let mut brute = 0.0;
        for k in 0..nt {
            let wt = if k == 0 || k == nt - 1 { ht / 2.0 } else { ht };
            for i in 0..nx {
                let wx = if i == 0 || i == nx - 1 { hx / 2.0 } else { hx };
                let x = 1.0 + hx * i as f64;
                brute += wt * wx * (x * x + 1.0);
            }
        }
        assert_relative_eq!(got, brute.sqrt(), max_relative = 1e-12);
        // and the continuum value (int_1^2 (x^2 + 1) dx = 10/3) up to O(h^2)
        assert_relative_eq!(got, (10.0f64 / 3.0).sqrt(), max_relative = 1e-3);
    }

    #[test]
    fn region_monotone() {
        let g = grid1(9, 21);
        let f = ScalarField::from_fn(g.clone(), |x, _, t| (3.0 * x + t).cos());
        let mut prev = f64::INFINITY;
        for eps in [0.01, 0.1, 0.2, 0.3, 0.4, 0.45] {
            let w = shrink_cylinder(&g, eps).unwrap();
            let n = norm_h21_cylinder(&f, w).unwrap();
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn empty_region_rejected() {
        let g = grid1(5, 5);
        let f = ScalarField::zeros(g);
        assert!(norm_h21_cylinder(&f, TimeWindow { k_lo: 3, k_hi: 2 }).is_err());
    }
}
