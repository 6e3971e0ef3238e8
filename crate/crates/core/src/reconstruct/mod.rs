//! Recovery of `(u, m)` from lateral Cauchy data by minimizing the
//! Carleman-weighted least-squares functional of [`objective`].
//!
//! The minimizer is a projected Levenberg-Marquardt / Gauss-Newton iteration
//! with a banded direct solve, or projected L-BFGS when the band is too wide.
//! Iterates are clipped to the a-priori box `|u| <= R4`, `|m| <= R5`.

pub mod objective;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use objective::{join, split, Objective, ObjectiveValue, ObjectiveWeights, Terms};

use crate::cauchy::{extract_traces, CauchyData};
use crate::cwf::CarlemanParams;
use crate::domain::{Grid, TimeWindow};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::mfg::{MfgSolution, Model};
use crate::norms::{cylinder_weights, norm_h21_cylinder};
use crate::scalar::Scalar;

/// A-priori bounds `R1..R5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AprioriBounds<T> {
    pub r1: T,
    pub r2: T,
    pub r3: T,
    pub r4: T,
    pub r5: T,
}

impl<T: Scalar> AprioriBounds<T> {
    pub fn new(r1: T, r2: T, r3: T, r4: T, r5: T) -> Self {
        Self { r1, r2, r3, r4, r5 }
    }

    pub fn uniform(r: T) -> Self {
        Self::new(r, r, r, r, r)
    }

    /// `R = max(R1, ..., R5)`.
    pub fn r(&self) -> T {
        self.r1.max(self.r2).max(self.r3).max(self.r4).max(self.r5)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("R1", self.r1), ("R2", self.r2), ("R3", self.r3), ("R4", self.r4), ("R5", self.r5)] {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Descent direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Gauss-Newton when the banded solve is affordable, L-BFGS otherwise.
    Auto,
    GaussNewton,
    Lbfgs,
}

/// Starting point of the iteration.
#[derive(Debug, Clone)]
pub enum InitialGuess<T> {
    Zero,
    Fields(ScalarField<T>, ScalarField<T>),
    /// Smooth random fields of the given amplitude.
    Random { seed: u64, amplitude: T },
}

#[derive(Debug, Clone)]
pub struct ReconOptions<T> {
    /// Boundary penalty; `None` gives `1e4 / cell volume`.
    pub gamma: Option<T>,
    /// Absolute regularization weight; `None` gives `beta_rel` times the
    /// residual part of `J(x0)`.
    pub beta: Option<T>,
    pub beta_rel: T,
    /// Gauss-Newton step cap; L-BFGS gets 50 times as many.
    pub max_iters: usize,
    /// Stop when `|grad J| <= grad_tol * |grad J(x0)|`. The initial gradient
    /// is dominated by the boundary penalty; the default sits just above the
    /// rounding floor of that term.
    pub grad_tol: T,
    pub method: Method,
    pub init: InitialGuess<T>,
    /// Largest `n * bandwidth^2` for which `Auto` picks Gauss-Newton.
    pub banded_budget: f64,
}

impl<T: Scalar> Default for ReconOptions<T> {
    fn default() -> Self {
        Self {
            gamma: None,
            beta: None,
            beta_rel: T::lit(1e-7),
            max_iters: 200,
            grad_tol: T::lit(1e-14),
            method: Method::Auto,
            init: InitialGuess::Zero,
            banded_budget: 4e9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    GradientTolerance,
    Stagnation,
    MaxIterations,
    LineSearchFailure,
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult<T> {
    pub solution: MfgSolution<T>,
    pub objective_history: Vec<T>,
    /// Lateral norms of `trace(u, m) - data` for `g0, g1, p0, p1`.
    pub boundary_misfit: [T; 4],
    /// Weighted Bellman and Fokker-Planck residual terms of `J`.
    pub weighted_residuals: [T; 2],
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub gradient_norm: T,
    pub initial_gradient_norm: T,
    pub gamma: T,
    pub beta: T,
    pub method: Method,
}

/// `1e4 / (mean cell volume)`.
pub fn default_gamma<T: Scalar>(grid: &Grid<T>) -> T {
    T::lit(1e4) / grid.cell_volume()
}

fn norm2<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, x| a + *x * *x).sqrt()
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

/// Clips interleaved unknowns to the a-priori box.
pub fn project<T: Scalar>(x: &mut [T], bounds: &AprioriBounds<T>) {
    for (i, v) in x.iter_mut().enumerate() {
        let r = if i % 2 == 0 { bounds.r4 } else { bounds.r5 };
        *v = v.max(-r).min(r);
    }
}

/// Smooth random field: a few seeded space-time cosine modes.
pub fn smooth_random_field<T: Scalar>(grid: &Arc<Grid<T>>, seed: u64, amplitude: T) -> ScalarField<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes = 3;
    let coeffs: Vec<f64> = (0..modes * modes * modes).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (a, b) = (grid.domain.a.to_f64_lossy(), grid.domain.b.to_f64_lossy());
    let w = grid.domain.half_widths.first().map_or(1.0, |h| h.to_f64_lossy());
    let t_end = grid.domain.t_end.to_f64_lossy();
    let norm = (modes * modes * modes) as f64;
    ScalarField::from_fn(grid.clone(), |x1, x2, t| {
        let xi = (x1.to_f64_lossy() - a) / (b - a);
        let eta = (x2.to_f64_lossy() + w) / (2.0 * w);
        let tau = t.to_f64_lossy() / t_end;
        let mut v = 0.0;
        for p in 0..modes {
            for q in 0..modes {
                for r in 0..modes {
                    let c = coeffs[(p * modes + q) * modes + r];
                    v += c * (p as f64 * std::f64::consts::PI * xi).cos()
                        * (q as f64 * std::f64::consts::PI * eta).cos()
                        * (r as f64 * std::f64::consts::PI * tau).cos();
                }
            }
        }
        amplitude * T::lit(v / norm.sqrt())
    })
}

fn initial_point<T: Scalar>(grid: &Arc<Grid<T>>, init: &InitialGuess<T>) -> Result<Vec<T>> {
    Ok(match init {
        InitialGuess::Zero => vec![T::zero(); 2 * grid.n_nodes()],
        InitialGuess::Fields(u, m) => {
            if **u.grid() != **grid || **m.grid() != **grid {
                return Err(Error::GridMismatch("initial guess lives on a different grid".into()));
            }
            join(u, m)
        }
        InitialGuess::Random { seed, amplitude } => {
            let u = smooth_random_field(grid, *seed, *amplitude);
            let m = smooth_random_field(grid, seed.wrapping_add(0x9e37_79b9), *amplitude);
            join(&u, &m)
        }
    })
}

/// Minimizes the functional for the given data.
pub fn reconstruct<T: Scalar>(
    model: &Model<T>,
    data: &CauchyData<T>,
    params: &CarlemanParams<T>,
    opts: &ReconOptions<T>,
) -> Result<ReconstructionResult<T>> {
    let grid = model.grid().clone();
    let gamma = opts.gamma.unwrap_or_else(|| default_gamma(&grid));
    let mut objective = Objective::new(model.clone(), data, params, ObjectiveWeights { gamma, beta: T::zero() })?;
    let mut x = initial_point(&grid, &opts.init)?;
    let bounds = *model.bounds();
    project(&mut x, &bounds);
    let beta = match opts.beta {
        Some(b) => b,
        None => {
            let v = objective.value(&x);
            opts.beta_rel * (v.bellman + v.fp)
        }
    };
    objective.set_beta(beta);
    let method = match opts.method {
        Method::Auto if objective.banded_cost(&x) <= opts.banded_budget => Method::GaussNewton,
        Method::Auto => Method::Lbfgs,
        m => m,
    };
    let run = match method {
        Method::Lbfgs => minimize_lbfgs(&objective, x, &bounds, opts),
        _ => minimize_gauss_newton(&objective, x, &bounds, opts)?,
    };
    finish(&objective, data, run, gamma, beta, method)
}

struct Run<T> {
    x: Vec<T>,
    history: Vec<T>,
    iterations: usize,
    stop: StopReason,
    grad_norm: T,
    grad0: T,
    last_step: T,
}

fn finish<T: Scalar>(
    objective: &Objective<T>,
    data: &CauchyData<T>,
    run: Run<T>,
    gamma: T,
    beta: T,
    method: Method,
) -> Result<ReconstructionResult<T>> {
    let grid = objective.grid();
    let (u, m) = split(grid, &run.x);
    let misfit = extract_traces(&u, &m)?.difference(data)?.norms()?;
    let v = objective.value(&run.x);
    let converged = matches!(run.stop, StopReason::GradientTolerance | StopReason::Stagnation);
    Ok(ReconstructionResult {
        solution: MfgSolution { u, m, picard_iters: run.iterations, final_update_norm: run.last_step, converged },
        objective_history: run.history,
        boundary_misfit: misfit,
        weighted_residuals: [v.bellman, v.fp],
        iterations: run.iterations,
        converged,
        stop_reason: run.stop,
        gradient_norm: run.grad_norm,
        initial_gradient_norm: run.grad0,
        gamma,
        beta,
        method,
    })
}

/// Projected Armijo backtracking from `x` along `d`; returns the accepted
/// point and value.
fn line_search<T: Scalar>(
    objective: &Objective<T>,
    x: &[T],
    f: T,
    g: &[T],
    d: &[T],
    bounds: &AprioriBounds<T>,
) -> Option<(Vec<T>, T)> {
    let c1 = T::lit(1e-4);
    let mut a = T::one();
    for _ in 0..30 {
        let mut xn: Vec<T> = x.iter().zip(d).map(|(xi, di)| *xi + a * *di).collect();
        project(&mut xn, bounds);
        let step: Vec<T> = xn.iter().zip(x).map(|(p, q)| *p - *q).collect();
        let fn_ = objective.value(&xn).total;
        if fn_.is_finite() && fn_ <= f && fn_ <= f + c1 * dot(g, &step) {
            return Some((xn, fn_));
        }
        a *= T::lit(0.5);
    }
    None
}

fn stagnated<T: Scalar>(f_old: T, f_new: T, f0: T) -> bool {
    f_old - f_new <= T::lit(1e-15) * f_old.max(T::min_positive_value()) || f_new <= T::lit(1e-30) * f0
}

fn minimize_gauss_newton<T: Scalar>(
    objective: &Objective<T>,
    mut x: Vec<T>,
    bounds: &AprioriBounds<T>,
    opts: &ReconOptions<T>,
) -> Result<Run<T>> {
    let mut f = objective.value(&x).total;
    let f0 = f;
    let mut history = vec![f];
    let mut mu = T::lit(1e-6);
    let mut grad0 = T::zero();
    let mut grad_norm;
    let mut last_step = T::zero();
    let mut stale = 0;
    for iter in 0..opts.max_iters {
        let (h, g) = objective.gauss_newton(&x);
        grad_norm = norm2(&g);
        if iter == 0 {
            grad0 = grad_norm;
        }
        if grad_norm <= opts.grad_tol * grad0 || grad_norm == T::zero() {
            return Ok(Run { x, history, iterations: iter, stop: StopReason::GradientTolerance, grad_norm, grad0, last_step });
        }
        let diag = h.diagonal();
        let dmax = diag.iter().fold(T::zero(), |a, d| a.max(*d));
        let mut accepted = None;
        for _ in 0..12 {
            let mut hm = h.clone();
            for (i, d) in diag.iter().enumerate() {
                let damp = mu * (*d + T::lit(1e-12) * dmax);
                hm.add(i, i, damp);
            }
            let Ok(ldl) = hm.factor() else {
                mu *= T::lit(10.0);
                continue;
            };
            let neg_g: Vec<T> = g.iter().map(|v| -*v).collect();
            let d = ldl.solve(&neg_g);
            if let Some(found) = line_search(objective, &x, f, &g, &d, bounds) {
                accepted = Some(found);
                mu = (mu / T::lit(3.0)).max(T::lit(1e-12));
                break;
            }
            mu *= T::lit(10.0);
        }
        let Some((xn, fn_)) = accepted else {
            return Ok(Run { x, history, iterations: iter, stop: StopReason::LineSearchFailure, grad_norm, grad0, last_step });
        };
        last_step = norm2(&xn.iter().zip(&x).map(|(a, b)| *a - *b).collect::<Vec<_>>());
        let stag = stagnated(f, fn_, f0);
        x = xn;
        f = fn_;
        history.push(f);
        stale = if stag { stale + 1 } else { 0 };
        if stale >= 2 || f <= T::lit(1e-30) * f0 {
            let g = objective.gradient(&x);
            grad_norm = norm2(&g);
            return Ok(Run { x, history, iterations: iter + 1, stop: StopReason::Stagnation, grad_norm, grad0, last_step });
        }
    }
    grad_norm = norm2(&objective.gradient(&x));
    let stop = if grad_norm <= opts.grad_tol * grad0 { StopReason::GradientTolerance } else { StopReason::MaxIterations };
    Ok(Run { iterations: opts.max_iters, x, history, stop, grad_norm, grad0, last_step })
}

fn minimize_lbfgs<T: Scalar>(objective: &Objective<T>, mut x: Vec<T>, bounds: &AprioriBounds<T>, opts: &ReconOptions<T>) -> Run<T> {
    let memory = 12;
    let mut f = objective.value(&x).total;
    let f0 = f;
    let mut history = vec![f];
    let mut g = objective.gradient(&x);
    let grad0 = norm2(&g);
    let mut grad_norm = grad0;
    let mut pairs: Vec<(Vec<T>, Vec<T>, T)> = Vec::new();
    let mut last_step = T::zero();
    let mut stale = 0;
    let max_iters = opts.max_iters * 50;
    for iter in 0..max_iters {
        if grad_norm <= opts.grad_tol * grad0 || grad_norm == T::zero() {
            return Run { x, history, iterations: iter, stop: StopReason::GradientTolerance, grad_norm, grad0, last_step };
        }
        // two-loop recursion
        let mut q: Vec<T> = g.clone();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = *rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * *yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.last() {
            let scale = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= scale);
        } else {
            let scale = T::one() / grad_norm.max(T::min_positive_value());
            q.iter_mut().for_each(|v| *v *= scale);
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = *rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (*a - b) * *si;
            }
        }
        let mut d: Vec<T> = q.iter().map(|v| -*v).collect();
        if dot(&d, &g) >= T::zero() {
            pairs.clear();
            d = g.iter().map(|v| -*v / grad_norm).collect();
        }
        let Some((xn, fn_)) = line_search(objective, &x, f, &g, &d, bounds) else {
            if pairs.is_empty() {
                return Run { x, history, iterations: iter, stop: StopReason::LineSearchFailure, grad_norm, grad0, last_step };
            }
            pairs.clear();
            continue;
        };
        let gn = objective.gradient(&xn);
        let s: Vec<T> = xn.iter().zip(&x).map(|(a, b)| *a - *b).collect();
        let y: Vec<T> = gn.iter().zip(&g).map(|(a, b)| *a - *b).collect();
        let sy = dot(&s, &y);
        if sy > T::lit(1e-14) * norm2(&s) * norm2(&y) {
            pairs.push((s.clone(), y, T::one() / sy));
            if pairs.len() > memory {
                pairs.remove(0);
            }
        }
        last_step = norm2(&s);
        let stag = stagnated(f, fn_, f0);
        x = xn;
        f = fn_;
        g = gn;
        grad_norm = norm2(&g);
        history.push(f);
        stale = if stag { stale + 1 } else { 0 };
        if stale >= 5 || f <= T::lit(1e-30) * f0 {
            return Run { x, history, iterations: iter + 1, stop: StopReason::Stagnation, grad_norm, grad0, last_step };
        }
    }
    let stop = if grad_norm <= opts.grad_tol * grad0 { StopReason::GradientTolerance } else { StopReason::MaxIterations };
    Run { x, history, iterations: max_iters, stop, grad_norm, grad0, last_step }
}

/// `J` at `(u, m)`.
pub fn assemble_objective<T: Scalar>(
    model: &Model<T>,
    u: &ScalarField<T>,
    m: &ScalarField<T>,
    data: &CauchyData<T>,
    params: &CarlemanParams<T>,
    weights: ObjectiveWeights<T>,
) -> Result<ObjectiveValue<T>> {
    u.check_same_grid(m)?;
    Ok(Objective::new(model.clone(), data, params, weights)?.value(&join(u, m)))
}

/// Gradient of `J` with respect to the nodal values of `u` and `m`.
pub fn objective_gradient<T: Scalar>(
    model: &Model<T>,
    u: &ScalarField<T>,
    m: &ScalarField<T>,
    data: &CauchyData<T>,
    params: &CarlemanParams<T>,
    weights: ObjectiveWeights<T>,
) -> Result<(ScalarField<T>, ScalarField<T>)> {
    u.check_same_grid(m)?;
    let g = Objective::new(model.clone(), data, params, weights)?.gradient(&join(u, m));
    Ok(split(u.grid(), &g))
}

/// Agreement of reconstructions from several starting points.
#[derive(Debug, Clone)]
pub struct MultiStartReport<T> {
    pub seeds: Vec<Option<u64>>,
    pub results: Vec<ReconstructionResult<T>>,
    /// Largest pairwise `H^{2,1}` distance of the `u` and `m` parts on the window.
    pub max_pairwise_distance: T,
}

/// Zero start plus one smooth random start per seed, run in parallel.
pub fn multistart<T: Scalar>(
    model: &Model<T>,
    data: &CauchyData<T>,
    params: &CarlemanParams<T>,
    opts: &ReconOptions<T>,
    seeds: &[u64],
    window: TimeWindow,
) -> Result<MultiStartReport<T>> {
    let amplitude = T::lit(0.1) * model.bounds().r4.min(model.bounds().r5);
    let mut starts: Vec<Option<u64>> = vec![None];
    starts.extend(seeds.iter().map(|&s| Some(s)));
    let results: Vec<Result<ReconstructionResult<T>>> = starts
        .par_iter()
        .map(|seed| {
            let mut o = opts.clone();
            o.init = match seed {
                None => InitialGuess::Zero,
                Some(s) => InitialGuess::Random { seed: *s, amplitude },
            };
            reconstruct(model, data, params, &o)
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut worst = T::zero();
    for i in 0..results.len() {
        for j in 0..i {
            let (a, b) = (&results[i].solution, &results[j].solution);
            let d = norm_h21_cylinder(&a.u.sub(&b.u), window)? + norm_h21_cylinder(&a.m.sub(&b.m), window)?;
            worst = worst.max(d);
        }
    }
    Ok(MultiStartReport { seeds: starts, results, max_pairwise_distance: worst })
}

/// Measured constant of the transverse-integral weight inequality
/// `int (int_{Omega_1} |m| dy)^2 psi <= C int m^2 psi` with bound
/// `C <= |Omega_1|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlocalWeightCheck<T> {
    pub lhs: T,
    pub weighted_l2: T,
    pub constant: T,
    pub bound: T,
}

pub fn nonlocal_weight_constant<T: Scalar>(m: &ScalarField<T>, params: &CarlemanParams<T>) -> Result<NonlocalWeightCheck<T>> {
    let grid = m.grid();
    if grid.dim() != 2 {
        return Err(Error::InvalidParameter("the transverse integral needs n = 2".into()));
    }
    let psi = params.weight_on_grid(grid)?;
    let w = cylinder_weights(grid, TimeWindow::full(grid.nt));
    let wy = crate::stencil::trapezoid_weights(grid.nx2(), grid.hxi[0]);
    let ns = grid.n_space();
    let mut lhs = T::zero();
    let mut l2 = T::zero();
    for k in 0..grid.nt {
        for i1 in 0..grid.nx1 {
            let integral = (0..grid.nx2()).fold(T::zero(), |a, j| a + wy[j] * m.at(i1, j, k).abs());
            for i2 in 0..grid.nx2() {
                let p = k * ns + grid.index(i1, i2, 0);
                lhs += w[p] * psi[p] * integral * integral;
            }
        }
    }
    for p in 0..grid.n_nodes() {
        l2 += w[p] * psi[p] * m.values()[p] * m.values()[p];
    }
    let omega1 = grid.domain.cross_section_measure();
    let constant = if l2 > T::zero() { lhs / l2 } else { T::zero() };
    Ok(NonlocalWeightCheck { lhs, weighted_l2: l2, constant, bound: omega1 * omega1 })
}

#[cfg(test)]
mod tests;
