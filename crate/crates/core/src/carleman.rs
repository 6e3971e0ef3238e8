//! Numerical verification of the Carleman estimates for `d_t - alpha Laplace`
//! and `d_t + alpha Laplace` with the weight of [`crate::cwf`].
//!
//! For a test function `u` and a weight parameter `lambda` the verifier
//! forms
//!
//! ```text
//! D(lambda) = (1/lambda) int u_t^2 psi + (1/lambda) sum_ij int u_{x_i x_j}^2 psi
//!           + int (lambda |grad u|^2 + lambda^3 u^2) psi
//!           - boundary deficit - endpoint deficit
//! ```
//!
//! and the ratio `r = lhs / D` where `D > 0`. All integrals use the
//! (optionally normalized) weight, so the shared factor cancels in `r`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cauchy::{extract_traces, Trace};
use crate::cwf::CarlemanParams;
use crate::domain::Grid;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::norms::{full_weights, h1_slice_sq};
use crate::reconstruct::smooth_random_field;
use crate::scalar::Scalar;

/// Parabolic operator under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    /// `u_t - alpha Laplace u`
    Forward,
    /// `u_t + alpha Laplace u`
    Backward,
}

impl Operator {
    pub fn label(self) -> &'static str {
        match self {
            Operator::Forward => "forward",
            Operator::Backward => "backward",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "forward" | "minus" => Some(Operator::Forward),
            "backward" | "plus" => Some(Operator::Backward),
            _ => None,
        }
    }

    /// The operator that time reversal maps this one to.
    pub fn reversed(self) -> Self {
        match self {
            Operator::Forward => Operator::Backward,
            Operator::Backward => Operator::Forward,
        }
    }

    fn sign(self) -> f64 {
        match self {
            Operator::Forward => -1.0,
            Operator::Backward => 1.0,
        }
    }
}

/// Right-hand side groups at one `lambda`, without powers of `lambda` and
/// without the constant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CarlemanComponents<T> {
    /// `int u_t^2 psi`
    pub time: T,
    /// `sum_ij int u_{x_i x_j}^2 psi`
    pub hessian: T,
    /// `int |grad u|^2 psi`
    pub gradient: T,
    /// `int u^2 psi`
    pub zeroth: T,
    /// `(|d_nu u|^2_{H^{1,0}(S_T)} + |u|^2_{H^{2,1}(S_T)}) e^{3 lambda b^2}`
    pub boundary: T,
    /// `(|u(T)|^2_{H^1} + |u(0)|^2_{H^1}) exp(-2 lambda (c^2 T^2/4 - b^2))`
    pub endpoint: T,
}

impl<T: Scalar> CarlemanComponents<T> {
    /// `(1/lambda)(time + hessian) + lambda gradient + lambda^3 zeroth`.
    pub fn volume(&self, lambda: T) -> T {
        (self.time + self.hessian) / lambda + lambda * self.gradient + lambda * lambda * lambda * self.zeroth
    }

    pub fn denominator(&self, lambda: T) -> T {
        self.volume(lambda) - self.boundary - self.endpoint
    }
}

fn weighted<T: Scalar>(w: &[T], psi: &[T], f: &[T]) -> T {
    w.iter().zip(psi).zip(f).fold(T::zero(), |a, ((w, p), f)| a + *w * *p * *f * *f)
}

/// `int (u_t -+ alpha Laplace u)^2 psi` over the full cylinder.
pub fn carleman_lhs<T: Scalar>(u: &ScalarField<T>, op: Operator, params: &CarlemanParams<T>) -> Result<T> {
    let grid = u.grid();
    let psi = params.weight_on_grid(grid)?;
    let w = full_weights(grid);
    let s = T::lit(op.sign()) * grid.domain.alpha;
    let r = u.d_t().zip_map(&u.laplacian(), |t, l| t + s * l);
    Ok(weighted(&w, &psi, r.values()))
}

/// The right-hand side groups of the estimate at `params.lambda`.
pub fn carleman_rhs_components<T: Scalar>(u: &ScalarField<T>, params: &CarlemanParams<T>) -> Result<CarlemanComponents<T>> {
    let grid = u.grid();
    let psi = params.weight_on_grid(grid)?;
    let w = full_weights(grid);
    let grad = u.grad();
    let mut c = CarlemanComponents {
        time: weighted(&w, &psi, u.d_t().values()),
        zeroth: weighted(&w, &psi, u.values()),
        ..Default::default()
    };
    for g in &grad {
        c.gradient += weighted(&w, &psi, g.values());
    }
    for row in u.hessian() {
        for h in row {
            c.hessian += weighted(&w, &psi, h.values());
        }
    }
    let traces = extract_traces(u, u)?;
    let lateral = traces.norm(Trace::G1)?.powi(2) + traces.norm(Trace::G0)?.powi(2);
    c.boundary = if lateral > T::zero() { lateral * params.boundary_factor()? } else { T::zero() };
    let ends = h1_slice_sq(u, &grad, grid.nt - 1) + h1_slice_sq(u, &grad, 0);
    c.endpoint = if ends > T::zero() { ends * params.endpoint_factor()? } else { T::zero() };
    Ok(c)
}

/// A labelled test function.
#[derive(Debug, Clone)]
pub struct TestFunction<T> {
    pub label: String,
    pub field: ScalarField<T>,
}

/// One `(u, lambda)` cell of the verification table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlemanCell<T> {
    pub member: usize,
    pub lambda: T,
    pub lhs: T,
    pub components: CarlemanComponents<T>,
    /// `(1/lambda) time`, `(1/lambda) hessian`, `lambda gradient + lambda^3 zeroth`
    pub volume_terms: [T; 3],
    pub boundary_deficit: T,
    pub endpoint_deficit: T,
    pub denominator: T,
    /// `lhs / D`, present only where `D > 0`.
    pub ratio: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlemanReport<T> {
    pub operator: Operator,
    pub lambda_grid: Vec<T>,
    pub members: Vec<String>,
    /// Members whose denominator vanishes at every `lambda` (e.g. `u = 0`).
    pub skipped: Vec<usize>,
    pub cells: Vec<CarlemanCell<T>>,
    /// Smallest ratio over the family at each `lambda` (`None` if some
    /// non-skipped member has `D <= 0` there).
    pub min_ratio: Vec<Option<T>>,
    pub lambda0_estimate: Option<T>,
    pub c_star: Option<T>,
    pub endpoint_valid: bool,
    pub c2: T,
    pub eps: T,
    pub normalize: bool,
    pub warnings: Vec<String>,
}

impl<T: Scalar> CarlemanReport<T> {
    pub fn cell(&self, member: usize, lambda_index: usize) -> &CarlemanCell<T> {
        &self.cells[member * self.lambda_grid.len() + lambda_index]
    }

    /// `max / min` of the per-lambda minimal ratio over the given lambdas.
    pub fn min_ratio_spread(&self, from: usize) -> Option<T> {
        let vals: Option<Vec<T>> = self.min_ratio[from..].iter().copied().collect();
        let vals = vals?;
        let lo = vals.iter().copied().fold(T::infinity(), T::min);
        let hi = vals.iter().copied().fold(T::zero(), T::max);
        (lo > T::zero()).then(|| hi / lo)
    }

    /// Index of `lambda0_estimate` in the grid.
    pub fn lambda0_index(&self) -> Option<usize> {
        let l0 = self.lambda0_estimate?;
        self.lambda_grid.iter().position(|l| *l == l0)
    }
}

/// Evaluates the estimate for every `(u, lambda)` pair.
///
/// `lambda0_estimate` is the smallest grid `lambda` from which every
/// non-skipped member has `D > 0` and a non-decreasing ratio; `c_star` is the
/// smallest ratio at or above it.
pub fn verify_estimate<T: Scalar>(
    op: Operator,
    family: &[TestFunction<T>],
    params: &CarlemanParams<T>,
    lambda_grid: &[T],
) -> Result<CarlemanReport<T>> {
    let Some(first) = family.first() else {
        return Err(Error::InvalidParameter("the test family is empty".into()));
    };
    if lambda_grid.is_empty() {
        return Err(Error::InvalidParameter("the lambda grid is empty".into()));
    }
    for f in family {
        if !f.field.same_grid(&first.field) {
            return Err(Error::GridMismatch(format!("test function {} lives on a different grid", f.label)));
        }
    }
    let nl = lambda_grid.len();
    let jobs: Vec<(usize, usize)> = (0..family.len()).flat_map(|i| (0..nl).map(move |j| (i, j))).collect();
    let cells: Vec<Result<CarlemanCell<T>>> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let lambda = lambda_grid[j];
            let p = params.with_lambda(lambda);
            let u = &family[i].field;
            let lhs = carleman_lhs(u, op, &p)?;
            let c = carleman_rhs_components(u, &p)?;
            let denominator = c.denominator(lambda);
            Ok(CarlemanCell {
                member: i,
                lambda,
                lhs,
                components: c,
                volume_terms: [c.time / lambda, c.hessian / lambda, lambda * c.gradient + lambda.powi(3) * c.zeroth],
                boundary_deficit: c.boundary,
                endpoint_deficit: c.endpoint,
                denominator,
                ratio: (denominator > T::zero()).then(|| lhs / denominator),
            })
        })
        .collect();
    let cells = cells.into_iter().collect::<Result<Vec<_>>>()?;

    let skipped: Vec<usize> = (0..family.len())
        .filter(|&i| cells[i * nl..(i + 1) * nl].iter().all(|c| c.denominator == T::zero() && c.lhs == T::zero()))
        .collect();
    let active: Vec<usize> = (0..family.len()).filter(|i| !skipped.contains(i)).collect();

    let min_ratio: Vec<Option<T>> = (0..nl)
        .map(|j| {
            let mut lo: Option<T> = None;
            for &i in &active {
                let r = cells[i * nl + j].ratio?;
                if !(r > T::zero()) {
                    return None;
                }
                lo = Some(lo.map_or(r, |v: T| v.min(r)));
            }
            lo
        })
        .collect();

    let tail_ok = |j0: usize| {
        active.iter().all(|&i| {
            let row = &cells[i * nl..(i + 1) * nl];
            row[j0..].iter().all(|c| c.ratio.is_some_and(|r| r > T::zero()))
                && row[j0..].windows(2).all(|w| w[1].ratio >= w[0].ratio)
        })
    };
    let j0 = if active.is_empty() { None } else { (0..nl).find(|&j| tail_ok(j)) };
    let lambda0_estimate = j0.map(|j| lambda_grid[j]);
    let c_star = j0.and_then(|j| {
        min_ratio[j..].iter().copied().collect::<Option<Vec<T>>>().map(|v| v.into_iter().fold(T::infinity(), T::min))
    });

    let mut warnings = Vec::new();
    if !params.endpoint_valid {
        warnings.push("c^2 T^2 / 4 <= b^2: the endpoint factor grows with lambda".to_string());
    }
    if j0.is_none() && !active.is_empty() {
        warnings.push("no lambda in the grid from which every ratio is positive and non-decreasing".to_string());
    }
    Ok(CarlemanReport {
        operator: op,
        lambda_grid: lambda_grid.to_vec(),
        members: family.iter().map(|f| f.label.clone()).collect(),
        skipped,
        cells,
        min_ratio,
        lambda0_estimate,
        c_star,
        endpoint_valid: params.endpoint_valid,
        c2: params.c2,
        eps: params.eps,
        normalize: params.normalize,
        warnings,
    })
}

/// Largest relative difference between the `lhs`, denominators and ratios
/// of two reports over the same family and lambda grid.
pub fn report_discrepancy<T: Scalar>(a: &CarlemanReport<T>, b: &CarlemanReport<T>) -> Result<T> {
    if a.cells.len() != b.cells.len() || a.lambda_grid != b.lambda_grid {
        return Err(Error::InvalidParameter("reports cover different families or lambda grids".into()));
    }
    let rel = |x: T, y: T| {
        let s = x.abs().max(y.abs());
        if s == T::zero() {
            T::zero()
        } else {
            (x - y).abs() / s
        }
    };
    let mut worst = T::zero();
    for (p, q) in a.cells.iter().zip(&b.cells) {
        worst = worst.max(rel(p.lhs, q.lhs)).max(rel(p.denominator, q.denominator));
        match (p.ratio, q.ratio) {
            (Some(x), Some(y)) => worst = worst.max(rel(x, y)),
            (None, None) => {}
            _ => return Ok(T::infinity()),
        }
    }
    Ok(worst)
}

/// Time-reversed copy of every member.
pub fn time_reversed_family<T: Scalar>(family: &[TestFunction<T>]) -> Vec<TestFunction<T>> {
    family.iter().map(|f| TestFunction { label: format!("{} (reversed)", f.label), field: f.field.time_reversed() }).collect()
}

/// `sin^4` bump on `[margin, 1 - margin]` of the unit interval, zero outside:
/// vanishes with its first three derivatives at both ends.
pub fn bump(s: f64, margin: f64) -> f64 {
    if s <= margin || s >= 1.0 - margin {
        return 0.0;
    }
    (std::f64::consts::PI * (s - margin) / (1.0 - 2.0 * margin)).sin().powi(4)
}

/// Normalized coordinates `(xi1, xi2, tau)` in `[0, 1]^3`.
fn unit_coords<T: Scalar>(grid: &Grid<T>, x1: T, x2: T, t: T) -> (f64, f64, f64) {
    let (a, b) = (grid.domain.a.to_f64_lossy(), grid.domain.b.to_f64_lossy());
    let w = grid.domain.half_widths.first().map_or(1.0, |h| h.to_f64_lossy());
    let xi2 = if grid.dim() == 2 { (x2.to_f64_lossy() + w) / (2.0 * w) } else { 0.5 };
    (
        (x1.to_f64_lossy() - a) / (b - a),
        xi2,
        t.to_f64_lossy() / grid.domain.t_end.to_f64_lossy(),
    )
}

fn cutoff<T: Scalar>(grid: &Grid<T>, x1: T, x2: T, t: T, margin: f64) -> f64 {
    let (s1, s2, tau) = unit_coords(grid, x1, x2, t);
    let c2 = if grid.dim() == 2 { bump(s2, margin) } else { 1.0 };
    bump(s1, margin) * c2 * bump(tau, margin)
}

/// Test functions vanishing to second order near the lateral boundary and at
/// `t = 0, T`: polynomial times trigonometric profiles and seeded random
/// smooth fields, all multiplied by the cutoff.
pub fn vanishing_family<T: Scalar>(grid: &Arc<Grid<T>>, n_random: usize, seed: u64, margin: f64) -> Vec<TestFunction<T>> {
    let mut out = Vec::new();
    for p in 0..3 {
        for q in 0..2 {
            for freq in 1..=2 {
                let field = ScalarField::from_fn(grid.clone(), |x1, x2, t| {
                    let (s1, s2, tau) = unit_coords(grid, x1, x2, t);
                    let poly = s1.powi(p) * tau.powi(q);
                    let trig = (freq as f64 * std::f64::consts::PI * (s1 + 0.5 * s2 + 0.25 * tau)).cos();
                    T::lit((1.0 + poly) * trig * cutoff(grid, x1, x2, t, margin))
                });
                out.push(TestFunction { label: format!("poly{p}{q}-trig{freq}"), field });
            }
        }
    }
    for r in 0..n_random {
        let s = seed.wrapping_add(r as u64);
        let base = smooth_random_field(grid, s, T::one());
        let field = ScalarField::from_fn(grid.clone(), |x1, x2, t| T::lit(cutoff(grid, x1, x2, t, margin)));
        out.push(TestFunction { label: format!("random-{s}"), field: base.zip_map(&field, |a, b| a * b) });
    }
    out
}

/// Smooth functions with nonzero lateral and endpoint traces, exercising the
/// deficit groups.
pub fn boundary_family<T: Scalar>(grid: &Arc<Grid<T>>) -> Vec<TestFunction<T>> {
    let specs: [(&str, fn(f64, f64, f64) -> f64); 4] = [
        ("x1^2", |x1, _, _| x1 * x1),
        ("sin(x1 + t)", |x1, x2, t| (x1 + t + 0.5 * x2).sin()),
        ("x1 t", |x1, _, t| x1 * t),
        ("exp(x1 - t)", |x1, x2, t| (x1 - t).exp() * (1.0 + 0.25 * x2)),
    ];
    specs
        .iter()
        .map(|(label, f)| TestFunction {
            label: label.to_string(),
            field: ScalarField::from_fn(grid.clone(), |x1, x2, t| T::lit(f(x1.to_f64_lossy(), x2.to_f64_lossy(), t.to_f64_lossy()))),
        })
        .collect()
}
