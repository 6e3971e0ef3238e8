//! The Carleman-weighted least-squares functional
//!
//! ```text
//! J = sum_B w psi R_B^2 + sum_F w psi R_F^2
//!   + gamma sum_traces ||trace - data||^2_{S_T}
//!   + beta (|u|^2_{H^2(Q_T)} + |m|^2_{H^2(Q_T)})
//! ```
//!
//! Every term is a weighted sum of squared rows `r`, each with a sparse
//! Jacobian row, so `grad J = 2 J^T W r` and the Gauss-Newton matrix is
//! `2 J^T W J`.

use std::sync::Arc;

use crate::banded::SymBanded;
use crate::cauchy::{face_geometry, CauchyData, LateralNorm, Trace};
use crate::cwf::CarlemanParams;
use crate::domain::{Axis, Face, Grid};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::mfg::scheme::{residuals, var_m, var_u, Row};
use crate::mfg::Model;
use crate::norms::{full_weights, space_weights};
use crate::scalar::Scalar;
use crate::stencil::{self, outward_normal_coeffs, trapezoid_weights, Deriv};

/// Penalty weights of the functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveWeights<T> {
    pub gamma: T,
    pub beta: T,
}

/// Value of `J` split into its terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveValue<T> {
    pub total: T,
    pub bellman: T,
    pub fp: T,
    pub boundary: T,
    pub regularization: T,
}

/// Which terms of `J` to include.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Terms {
    pub pde: bool,
    pub boundary: bool,
    pub regularization: bool,
}

impl Terms {
    pub const ALL: Terms = Terms { pde: true, boundary: true, regularization: true };
}

/// Affine rows `c . x - offset` with weights.
#[derive(Debug, Clone, Default)]
struct LinearRows<T> {
    rows: Vec<Row<T>>,
    offsets: Vec<T>,
    weights: Vec<T>,
}

impl<T: Scalar> LinearRows<T> {
    fn push(&mut self, row: Row<T>, offset: T, weight: T) {
        if weight != T::zero() && !row.is_empty() {
            self.rows.push(row);
            self.offsets.push(offset);
            self.weights.push(weight);
        }
    }

    fn value(&self, row: usize, x: &[T]) -> T {
        self.rows[row].iter().fold(T::zero(), |acc, &(j, c)| acc + c * x[j]) - self.offsets[row]
    }
}

/// The functional for fixed data, weight and penalty parameters.
#[derive(Debug, Clone)]
pub struct Objective<T> {
    model: Model<T>,
    psi: Vec<T>,
    space_w: Vec<T>,
    weights: ObjectiveWeights<T>,
    boundary: LinearRows<T>,
    regularization: LinearRows<T>,
    terms: Terms,
}

impl<T: Scalar> Objective<T> {
    pub fn new(model: Model<T>, data: &CauchyData<T>, params: &CarlemanParams<T>, weights: ObjectiveWeights<T>) -> Result<Self> {
        data.check_conforming()?;
        let grid = model.grid().clone();
        if *data.grid().as_ref() != *grid {
            return Err(Error::GridMismatch("Cauchy data and model live on different grids".into()));
        }
        if !(weights.gamma >= T::zero() && weights.beta >= T::zero()) {
            return Err(Error::InvalidParameter("penalty weights must be non-negative".into()));
        }
        let psi = params.weight_on_grid(&grid)?;
        let space_w = space_weights(&grid);
        let boundary = boundary_rows(&grid, data, weights.gamma);
        let regularization = regularization_rows(&grid, weights.beta);
        Ok(Self { model, psi, space_w, weights, boundary, regularization, terms: Terms::ALL })
    }

    /// Restricts evaluation to a subset of the terms.
    pub fn with_terms(mut self, terms: Terms) -> Self {
        self.terms = terms;
        self
    }

    pub fn model(&self) -> &Model<T> {
        &self.model
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        self.model.grid()
    }

    pub fn weights(&self) -> ObjectiveWeights<T> {
        self.weights
    }

    pub fn n_unknowns(&self) -> usize {
        2 * self.grid().n_nodes()
    }

    /// Replaces `beta` (rebuilding the regularization rows).
    pub fn set_beta(&mut self, beta: T) {
        self.weights.beta = beta;
        self.regularization = regularization_rows(self.model.grid(), beta);
    }

    fn pde_weight(&self, node: usize) -> T {
        let ns = self.grid().n_space();
        self.space_w[node % ns] * self.grid().ht * self.psi[node]
    }

    pub fn value(&self, x: &[T]) -> ObjectiveValue<T> {
        let (u, m) = split(self.grid(), x);
        let mut v = ObjectiveValue::default();
        if self.terms.pde {
            let r = residuals(&self.model, &u, &m, false);
            v.bellman = r.bellman.iter().zip(&r.bellman_nodes).fold(T::zero(), |a, (&ri, &n)| a + self.pde_weight(n) * ri * ri);
            v.fp = r.fp.iter().zip(&r.fp_nodes).fold(T::zero(), |a, (&ri, &n)| a + self.pde_weight(n) * ri * ri);
        }
        let lin = |rows: &LinearRows<T>| {
            (0..rows.rows.len()).fold(T::zero(), |a, i| {
                let r = rows.value(i, x);
                a + rows.weights[i] * r * r
            })
        };
        if self.terms.boundary {
            v.boundary = lin(&self.boundary);
        }
        if self.terms.regularization {
            v.regularization = lin(&self.regularization);
        }
        v.total = v.bellman + v.fp + v.boundary + v.regularization;
        v
    }

    /// Visits every weighted row `(weight, value, jacobian row)` at `x`.
    fn for_each_row(&self, x: &[T], mut f: impl FnMut(T, T, &Row<T>)) {
        if self.terms.pde {
            let (u, m) = split(self.grid(), x);
            let r = residuals(&self.model, &u, &m, true);
            for i in 0..r.bellman.len() {
                f(self.pde_weight(r.bellman_nodes[i]), r.bellman[i], &r.bellman_rows[i]);
            }
            for i in 0..r.fp.len() {
                f(self.pde_weight(r.fp_nodes[i]), r.fp[i], &r.fp_rows[i]);
            }
        }
        for (on, rows) in [(self.terms.boundary, &self.boundary), (self.terms.regularization, &self.regularization)] {
            if on {
                for i in 0..rows.rows.len() {
                    f(rows.weights[i], rows.value(i, x), &rows.rows[i]);
                }
            }
        }
    }

    /// Exact gradient of the discrete functional.
    pub fn gradient(&self, x: &[T]) -> Vec<T> {
        let mut g = vec![T::zero(); x.len()];
        let two = T::lit(2.0);
        self.for_each_row(x, |w, r, row| {
            let s = two * w * r;
            for &(j, c) in row {
                g[j] += s * c;
            }
        });
        g
    }

    /// Bandwidth of `J^T W J` in the interleaved unknown ordering.
    pub fn bandwidth(&self, x: &[T]) -> usize {
        let mut bw = 0;
        self.for_each_row(x, |_, _, row| bw = bw.max(row_span(row)));
        bw
    }

    /// Gauss-Newton matrix `2 J^T W J` and gradient at `x`.
    pub fn gauss_newton(&self, x: &[T]) -> (SymBanded<T>, Vec<T>) {
        let mut rows: Vec<(T, T, Row<T>)> = Vec::new();
        self.for_each_row(x, |w, r, row| {
            let mut merged = Vec::with_capacity(row.len());
            compact_into(row, &mut merged);
            rows.push((w, r, merged));
        });
        let bw = rows.iter().map(|(_, _, row)| row_span(row)).max().unwrap_or(0);
        let n = x.len();
        let mut h = SymBanded::zeros(n, bw);
        let mut g = vec![T::zero(); n];
        let two = T::lit(2.0);
        for (w, r, row) in &rows {
            let s = two * *w * *r;
            for (a, &(i, ci)) in row.iter().enumerate() {
                g[i] += s * ci;
                let wc = two * *w * ci;
                for &(j, cj) in &row[..=a] {
                    h.add(i, j, wc * cj);
                }
            }
        }
        (h, g)
    }

    /// Cost estimate of a banded solve: `n * bw^2`.
    pub fn banded_cost(&self, x: &[T]) -> f64 {
        let bw = self.bandwidth(x) as f64;
        x.len() as f64 * bw * bw
    }
}

fn row_span<T>(row: &Row<T>) -> usize {
    match (row.iter().map(|e| e.0).min(), row.iter().map(|e| e.0).max()) {
        (Some(lo), Some(hi)) => hi - lo,
        _ => 0,
    }
}

/// Sorts `row` by unknown and merges duplicates into `out`.
fn compact_into<T: Scalar>(row: &Row<T>, out: &mut Row<T>) {
    out.clear();
    out.extend_from_slice(row);
    out.sort_unstable_by_key(|e| e.0);
    let mut w = 0;
    for r in 0..out.len() {
        if w > 0 && out[w - 1].0 == out[r].0 {
            let c = out[r].1;
            out[w - 1].1 += c;
        } else {
            out[w] = out[r];
            w += 1;
        }
    }
    out.truncate(w);
}

/// Splits interleaved unknowns into `(u, m)`.
pub fn split<T: Scalar>(grid: &Arc<Grid<T>>, x: &[T]) -> (ScalarField<T>, ScalarField<T>) {
    let n = grid.n_nodes();
    let mut u = Vec::with_capacity(n);
    let mut m = Vec::with_capacity(n);
    for p in 0..n {
        u.push(x[var_u(p)]);
        m.push(x[var_m(p)]);
    }
    (
        ScalarField::from_values(grid.clone(), u).unwrap_or_else(|_| nonfinite_field(grid)),
        ScalarField::from_values(grid.clone(), m).unwrap_or_else(|_| nonfinite_field(grid)),
    )
}

fn nonfinite_field<T: Scalar>(grid: &Arc<Grid<T>>) -> ScalarField<T> {
    ScalarField::from_fn(grid.clone(), |_, _, _| T::nan())
}

/// Interleaves `(u, m)` into one unknown vector.
pub fn join<T: Scalar>(u: &ScalarField<T>, m: &ScalarField<T>) -> Vec<T> {
    let mut x = Vec::with_capacity(2 * u.len());
    for (a, b) in u.values().iter().zip(m.values()) {
        x.push(*a);
        x.push(*b);
    }
    x
}

/// Sparse row of a trace entry at face node `j`, level `k`.
fn trace_row<T: Scalar>(grid: &Grid<T>, face: &Face, which: Trace, j: usize, k: usize) -> Row<T> {
    let ns = grid.n_space();
    let s = face.nodes[j];
    let base = k * ns;
    let var = |p: usize| if which.is_density() { var_m(p) } else { var_u(p) };
    if which.is_neumann() {
        let c = outward_normal_coeffs(T::lit(face.normal_spacing));
        (0..3)
            .map(|l| {
                let node = (s as isize + l as isize * face.inward_stride) as usize;
                (var(base + node), c[l])
            })
            .collect()
    } else {
        vec![(var(base + s), T::one())]
    }
}

/// `sum_l c_l (trace_l - data_l)` as an affine row.
fn combine_trace_rows<T: Scalar>(
    grid: &Grid<T>,
    face: &Face,
    which: Trace,
    data: &[T],
    terms: impl IntoIterator<Item = (usize, usize, T)>,
) -> (Row<T>, T) {
    let nf = face.len();
    let mut row = Vec::new();
    let mut offset = T::zero();
    for (j, k, c) in terms {
        for (v, cv) in trace_row(grid, face, which, j, k) {
            row.push((v, c * cv));
        }
        offset += c * data[k * nf + j];
    }
    (row, offset)
}

/// Rows reproducing `gamma * sum ||trace - data||^2` face by face, with the
/// same stencils and quadrature as the lateral norms.
fn boundary_rows<T: Scalar>(grid: &Grid<T>, data: &CauchyData<T>, gamma: T) -> LinearRows<T> {
    let mut out = LinearRows::default();
    if gamma == T::zero() {
        return out;
    }
    let nt = grid.nt;
    let wt = trapezoid_weights(nt, grid.ht);
    for (fd, face) in data.faces.iter().zip(&grid.faces) {
        let nf = face.len();
        let (ws, hs) = face_geometry::<T>(face);
        for which in Trace::ALL {
            let values = fd.get(which);
            let h21 = which.norm_kind() == LateralNorm::H21;
            for k in 0..nt {
                for j in 0..nf {
                    let w = gamma * ws[j] * wt[k];
                    let (row, off) = combine_trace_rows(grid, face, which, values, [(j, k, T::one())]);
                    out.push(row, off, w);
                    if let Some(h) = hs {
                        let d1 = stencil::d1_row(j, nf, h);
                        let (row, off) = combine_trace_rows(grid, face, which, values, d1.iter().map(|&(l, c)| (l, k, c)));
                        out.push(row, off, w);
                        if h21 {
                            let d2 = stencil::d2_row(j, nf, h);
                            let (row, off) =
                                combine_trace_rows(grid, face, which, values, d2.iter().map(|&(l, c)| (l, k, c)));
                            out.push(row, off, w);
                        }
                    }
                    if h21 {
                        let dt = stencil::d1_row(k, nt, grid.ht);
                        let (row, off) = combine_trace_rows(grid, face, which, values, dt.iter().map(|&(l, c)| (j, l, c)));
                        out.push(row, off, w);
                    }
                }
            }
        }
    }
    out
}

/// Stencil row of `d^2 / (d a d b)` at `node`, in node indices.
pub(crate) fn second_derivative_row<T: Scalar>(grid: &Grid<T>, node: usize, a: Axis, b: Axis) -> Vec<(usize, T)> {
    let pos = |axis: Axis, p: usize| (p / grid.axis_stride(axis)) % grid.axis_len(axis);
    let line = |axis: Axis, p: usize, kind: Deriv| -> Vec<(usize, T)> {
        let st = grid.axis_stride(axis);
        let j = pos(axis, p);
        let start = p - j * st;
        stencil::row(kind, j, grid.axis_len(axis), grid.spacing(axis)).iter().map(|&(l, c)| (start + l * st, c)).collect()
    };
    if a == b {
        return line(a, node, Deriv::Second);
    }
    let mut out = Vec::with_capacity(9);
    for (p, c1) in line(a, node, Deriv::First) {
        for (q, c2) in line(b, p, Deriv::First) {
            out.push((q, c1 * c2));
        }
    }
    out
}

/// `beta` times the full space-time second-derivative seminorm of `u` and `m`
/// (every ordered pair of axes, trapezoidal weights).
fn regularization_rows<T: Scalar>(grid: &Grid<T>, beta: T) -> LinearRows<T> {
    let mut out = LinearRows::default();
    if beta == T::zero() {
        return out;
    }
    let w = full_weights(grid);
    let axes = grid.axes();
    for node in 0..grid.n_nodes() {
        for &a in &axes {
            for &b in &axes {
                let row = second_derivative_row(grid, node, a, b);
                let ru: Row<T> = row.iter().map(|&(p, c)| (var_u(p), c)).collect();
                let rm: Row<T> = row.iter().map(|&(p, c)| (var_m(p), c)).collect();
                out.push(ru, T::zero(), beta * w[node]);
                out.push(rm, T::zero(), beta * w[node]);
            }
        }
    }
    out
}
