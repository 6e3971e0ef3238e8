//! The discrete equations shared by the forward solver and the reconstruction.
//!
//! Bellman rows live at interior space nodes on levels `k = 0..nt-1`:
//!
//! ```text
//! (u[k+1] - u[k]) / ht + alpha Lap u[k] + (k^2/2)|grad u[k+1]|^2 + P(k+1) - s_B[k+1]
//! ```
//!
//! Fokker-Planck rows live at interior space nodes on levels `k + 1`:
//!
//! ```text
//! (m[k+1] - m[k]) / ht - alpha Lap m[k+1] + Div(m[k], u[k]) - s_F[k]
//! ```
//!
//! `Lap` and `grad` are centred; `Div` uses conservative face fluxes
//! `k^2_{i+1/2} (m_i + m_{i+1})/2 (u_{i+1} - u_i)/h`. Jacobian entries are
//! indexed by interleaved unknowns: `u` at node `p` is `2p`, `m` is `2p + 1`.

use arrayvec::ArrayVec;

use super::Model;
use crate::domain::Grid;
use crate::field::ScalarField;
use crate::scalar::Scalar;

/// Sparse row: `(unknown index, coefficient)`, duplicates allowed.
pub type Row<T> = Vec<(usize, T)>;

#[inline]
pub fn var_u(node: usize) -> usize {
    2 * node
}

#[inline]
pub fn var_m(node: usize) -> usize {
    2 * node + 1
}

/// `(stride, spacing)` of every space axis.
pub fn space_strides<T: Scalar>(grid: &Grid<T>) -> ArrayVec<(usize, T), 2> {
    grid.space_axes().iter().map(|&a| (grid.axis_stride(a), grid.spacing(a))).collect()
}

/// Centred five-point (three-point for `n = 1`) Laplacian at an interior
/// space node, as slice-relative entries.
pub fn lap_stencil<T: Scalar>(grid: &Grid<T>, s: usize) -> ArrayVec<(usize, T), 5> {
    let mut out = ArrayVec::new();
    let mut centre = T::zero();
    for (st, h) in space_strides(grid) {
        let c = T::one() / (h * h);
        out.push((s - st, c));
        out.push((s + st, c));
        centre -= c + c;
    }
    out.push((s, centre));
    out
}

fn apply_lap<T: Scalar>(grid: &Grid<T>, slice: &[T], s: usize) -> T {
    lap_stencil(grid, s).iter().fold(T::zero(), |acc, &(j, c)| acc + c * slice[j])
}

/// Explicit Bellman part on level `k`: `(k^2/2)|grad u|^2 + P - s_B` at every
/// interior space node (zero on the boundary).
pub fn bellman_explicit<T: Scalar>(model: &Model<T>, k: usize, u_slice: &[T], m_slice: &[T]) -> Vec<T> {
    let grid = model.grid();
    let ns = grid.n_space();
    let inter = model.interaction(k, m_slice);
    let strides = space_strides(grid);
    let half = T::lit(0.5);
    let mut out = vec![T::zero(); ns];
    for s in grid.interior_space_nodes() {
        let mut g2 = T::zero();
        for &(st, h) in &strides {
            let g = (u_slice[s + st] - u_slice[s - st]) / (h + h);
            g2 += g * g;
        }
        out[s] = half * model.k2(s) * g2 + inter.p[s] - model.source_b()[k * ns + s];
    }
    out
}

/// Conservative `div(k^2 m grad u)` at an interior node of one slice.
fn divergence<T: Scalar>(model: &Model<T>, u: &[T], m: &[T], s: usize) -> T {
    let half = T::lit(0.5);
    let mut div = T::zero();
    for (a, &(st, h)) in space_strides(model.grid()).iter().enumerate() {
        let (p, q) = (s - st, s + st);
        let f_plus = model.k2_mid(a, s) * half * (m[s] + m[q]) * (u[q] - u[s]) / h;
        let f_minus = model.k2_mid(a, p) * half * (m[p] + m[s]) * (u[s] - u[p]) / h;
        div += (f_plus - f_minus) / h;
    }
    div
}

/// Explicit Fokker-Planck part on level `k`: `Div(m, u) - s_F` at interior
/// nodes (zero on the boundary).
pub fn fp_explicit<T: Scalar>(model: &Model<T>, k: usize, u_slice: &[T], m_slice: &[T]) -> Vec<T> {
    let grid = model.grid();
    let ns = grid.n_space();
    let mut out = vec![T::zero(); ns];
    for s in grid.interior_space_nodes() {
        out[s] = divergence(model, u_slice, m_slice, s) - model.source_f()[k * ns + s];
    }
    out
}

/// Residual values, the node each row lives on, and (optionally) the rows.
#[derive(Debug, Clone)]
pub struct Residuals<T> {
    pub bellman: Vec<T>,
    pub bellman_nodes: Vec<usize>,
    pub bellman_rows: Vec<Row<T>>,
    pub fp: Vec<T>,
    pub fp_nodes: Vec<usize>,
    pub fp_rows: Vec<Row<T>>,
}

/// Evaluates both residuals on `(u, m)`; with `jacobian` also the sparse rows.
pub fn residuals<T: Scalar>(model: &Model<T>, u: &ScalarField<T>, m: &ScalarField<T>, jacobian: bool) -> Residuals<T> {
    let grid = model.grid();
    let ns = grid.n_space();
    let nt = grid.nt;
    let ht = grid.ht;
    let alpha = model.alpha();
    let inv_ht = T::one() / ht;
    let interior = grid.interior_space_nodes();
    let strides = space_strides(grid);
    let half = T::lit(0.5);
    let cap = (nt - 1) * interior.len();
    let mut r = Residuals {
        bellman: Vec::with_capacity(cap),
        bellman_nodes: Vec::with_capacity(cap),
        bellman_rows: Vec::new(),
        fp: Vec::with_capacity(cap),
        fp_nodes: Vec::with_capacity(cap),
        fp_rows: Vec::new(),
    };

    for k in 0..nt - 1 {
        let (u0, u1) = (u.slice(k), u.slice(k + 1));
        let m1 = m.slice(k + 1);
        let explicit = bellman_explicit(model, k + 1, u1, m1);
        let inter = if jacobian { Some(model.interaction(k + 1, m1)) } else { None };
        let (b0, b1) = (k * ns, (k + 1) * ns);
        for &s in &interior {
            let val = (u1[s] - u0[s]) * inv_ht + alpha * apply_lap(grid, u0, s) + explicit[s];
            r.bellman.push(val);
            r.bellman_nodes.push(b0 + s);
            if let Some(inter) = &inter {
                let mut row: Row<T> = Vec::with_capacity(12);
                row.push((var_u(b1 + s), inv_ht));
                row.push((var_u(b0 + s), -inv_ht));
                for (j, c) in lap_stencil(grid, s) {
                    row.push((var_u(b0 + j), alpha * c));
                }
                for &(st, h) in &strides {
                    let g = (u1[s + st] - u1[s - st]) / (h + h);
                    let d = model.k2(s) * g / (h + h);
                    row.push((var_u(b1 + s + st), d));
                    row.push((var_u(b1 + s - st), -d));
                }
                row.push((var_m(b1 + s), inter.p_z2[s]));
                if inter.p_z1[s] != T::zero() {
                    for &(j, w) in model.kernel_row(s) {
                        row.push((var_m(b1 + j), inter.p_z1[s] * w));
                    }
                }
                r.bellman_rows.push(row);
            }
        }

        let m0 = m.slice(k);
        let explicit = fp_explicit(model, k, u0, m0);
        for &s in &interior {
            let val = (m1[s] - m0[s]) * inv_ht - alpha * apply_lap(grid, m1, s) + explicit[s];
            r.fp.push(val);
            r.fp_nodes.push(b1 + s);
            if jacobian {
                let mut row: Row<T> = Vec::with_capacity(20);
                row.push((var_m(b1 + s), inv_ht));
                row.push((var_m(b0 + s), -inv_ht));
                for (j, c) in lap_stencil(grid, s) {
                    row.push((var_m(b1 + j), -alpha * c));
                }
                for (a, &(st, h)) in strides.iter().enumerate() {
                    let (p, q) = (s - st, s + st);
                    let hh = h * h;
                    // + F_{s, q} / h
                    let c = model.k2_mid(a, s);
                    let dm = c * half * (u0[q] - u0[s]) / hh;
                    let du = c * half * (m0[s] + m0[q]) / hh;
                    row.push((var_m(b0 + s), dm));
                    row.push((var_m(b0 + q), dm));
                    row.push((var_u(b0 + q), du));
                    row.push((var_u(b0 + s), -du));
                    // - F_{p, s} / h
                    let c = model.k2_mid(a, p);
                    let dm = c * half * (u0[s] - u0[p]) / hh;
                    let du = c * half * (m0[p] + m0[s]) / hh;
                    row.push((var_m(b0 + p), -dm));
                    row.push((var_m(b0 + s), -dm));
                    row.push((var_u(b0 + s), -du));
                    row.push((var_u(b0 + p), du));
                }
                r.fp_rows.push(row);
            }
        }
    }
    r
}

/// Maximum absolute residual over both equations.
pub fn max_residual<T: Scalar>(model: &Model<T>, u: &ScalarField<T>, m: &ScalarField<T>) -> T {
    let r = residuals(model, u, m, false);
    r.bellman.iter().chain(&r.fp).fold(T::zero(), |acc, v| acc.max(v.abs()))
}

