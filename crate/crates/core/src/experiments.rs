//! End-to-end experiments on a resolved [`ExperimentConfig`].
//!
//! Inverse errors are measured against the discrete forward solution the
//! data were extracted from, on `Q_{T,eps}`; the distance to the closed-form
//! pair is reported alongside.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::carleman::{report_discrepancy, time_reversed_family, vanishing_family, CarlemanReport, Operator};
use crate::cauchy::{extract_traces, perturb_to_delta, CauchyData};
use crate::config::{ExperimentConfig, InitKind};
use crate::cwf::{apriori_decay, delta0, lambda_of_delta_unchecked, CarlemanParams};
use crate::domain::{shrink_cylinder, TimeWindow};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::mfg::{picard_solve, solve_bellman_backward, solve_fp_forward, PicardOptions};
use crate::norms::norm_h21_cylinder;
use crate::reconstruct::{multistart, reconstruct, InitialGuess, ReconOptions, ReconstructionResult, StopReason};
use crate::scenario::{ForwardRun, Scenario};

/// Forward solve, exact traces and evaluation window of a scenario.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub run: ForwardRun<f64>,
    pub data: CauchyData<f64>,
    pub window: TimeWindow,
    /// Forward discretization error on the window.
    pub forward_error: f64,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    let run = config.scenario.solve::<f64>()?;
    run.require_valid()?;
    let eps = config.carleman.eps;
    let window = shrink_cylinder(&run.grid, eps)?;
    let data = extract_traces(&run.solution.u, &run.solution.m)?;
    let forward_error = run.discretization_error(eps)?;
    Ok(Prepared { config: config.clone(), run, data, window, forward_error })
}

impl Prepared {
    pub fn params(&self, lambda: f64) -> Result<CarlemanParams<f64>> {
        let c = &self.config.carleman;
        Ok(CarlemanParams::for_domain(&self.run.grid.domain, lambda, c.eps)?.with_normalize(c.normalize))
    }

    /// `|u - u_h| + |m - m_h|` in `H^{2,1}(Q_{T,eps})` against the discrete
    /// truth and against the closed-form pair.
    pub fn errors(&self, u: &ScalarField<f64>, m: &ScalarField<f64>) -> Result<(f64, f64)> {
        let s = &self.run.solution;
        let w = self.window;
        let discrete = norm_h21_cylinder(&u.sub(&s.u), w)? + norm_h21_cylinder(&m.sub(&s.m), w)?;
        let exact = norm_h21_cylinder(&u.sub(&self.run.exact_u), w)? + norm_h21_cylinder(&m.sub(&self.run.exact_m), w)?;
        Ok((discrete, exact))
    }

    pub fn recon_options(&self) -> ReconOptions<f64> {
        let r = &self.config.recon;
        let init = match r.init {
            InitKind::Zero => InitialGuess::Zero,
            InitKind::Truth => InitialGuess::Fields(self.run.solution.u.clone(), self.run.solution.m.clone()),
            InitKind::Random => InitialGuess::Random {
                seed: self.config.seed,
                amplitude: 0.1 * self.run.model.bounds().r4.min(self.run.model.bounds().r5),
            },
        };
        ReconOptions {
            gamma: r.gamma,
            beta: r.beta,
            beta_rel: r.beta_rel,
            max_iters: r.max_iters,
            grad_tol: r.grad_tol,
            method: r.method,
            init,
            ..ReconOptions::default()
        }
    }

    /// Exact traces with noise of level `delta` (none for `delta = 0`).
    pub fn noisy_data(&self, delta: f64, seed: u64) -> Result<CauchyData<f64>> {
        if delta == 0.0 {
            Ok(self.data.clone())
        } else {
            perturb_to_delta(&self.data, delta, seed)
        }
    }
}

/// The weight parameter used for one reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaChoice {
    pub lambda: f64,
    /// `ln(1 / delta) / (5 b^2)` before clipping (absent for `delta = 0`).
    pub lambda_of_delta: Option<f64>,
    /// `fixed`, `rule` or `clipped`.
    pub policy: LambdaPolicy,
    /// `delta > delta0(lambda1)`: the admissibility gate was overridden.
    pub gate_overridden: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaPolicy {
    Fixed,
    Rule,
    Clipped,
}

/// `carleman.lambda` if set, else `lambda(delta)` clipped to
/// `[lambda1, lambda_max]`; exact data use `lambda1`.
pub fn choose_lambda(config: &ExperimentConfig, delta: f64) -> LambdaChoice {
    let c = &config.carleman;
    let b = config.scenario.domain.b;
    let gate_overridden = delta > delta0(b, c.lambda1);
    if let Some(l) = c.lambda {
        return LambdaChoice { lambda: l, lambda_of_delta: None, policy: LambdaPolicy::Fixed, gate_overridden };
    }
    if delta == 0.0 {
        return LambdaChoice { lambda: c.lambda1, lambda_of_delta: None, policy: LambdaPolicy::Clipped, gate_overridden: false };
    }
    let raw = lambda_of_delta_unchecked(delta, b);
    let lambda = raw.max(c.lambda1).min(c.lambda_max);
    let policy = if lambda == raw { LambdaPolicy::Rule } else { LambdaPolicy::Clipped };
    LambdaChoice { lambda, lambda_of_delta: Some(raw), policy, gate_overridden }
}

/// Scalar outcome of one reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconSummary {
    pub lambda: f64,
    pub gamma: f64,
    pub beta: f64,
    pub method: String,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub converged: bool,
    pub objective_initial: f64,
    pub objective_final: f64,
    pub gradient_norm: f64,
    pub initial_gradient_norm: f64,
    /// `g0, g1, p0, p1`
    pub boundary_misfit: [f64; 4],
    /// Bellman, Fokker-Planck
    pub weighted_residuals: [f64; 2],
}

impl ReconSummary {
    pub fn new(r: &ReconstructionResult<f64>, lambda: f64) -> Self {
        Self {
            lambda,
            gamma: r.gamma,
            beta: r.beta,
            method: format!("{:?}", r.method).to_lowercase(),
            iterations: r.iterations,
            stop_reason: r.stop_reason,
            converged: r.converged,
            objective_initial: r.objective_history[0],
            objective_final: *r.objective_history.last().expect("history starts with J(x0)"),
            gradient_norm: r.gradient_norm,
            initial_gradient_norm: r.initial_gradient_norm,
            boundary_misfit: r.boundary_misfit,
            weighted_residuals: r.weighted_residuals,
        }
    }
}

/// Parameter rules of the weight for a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightRules {
    pub eps: f64,
    pub c2: f64,
    pub rho: f64,
    pub endpoint_valid: bool,
    pub lambda1: f64,
    pub lambda_max: f64,
    pub delta0: f64,
}

impl WeightRules {
    pub fn new(p: &Prepared) -> Result<Self> {
        let c = &p.config.carleman;
        let params = p.params(c.lambda1)?;
        Ok(Self {
            eps: c.eps,
            c2: params.c2,
            rho: params.rho,
            endpoint_valid: params.endpoint_valid,
            lambda1: c.lambda1,
            lambda_max: c.lambda_max,
            delta0: delta0(p.config.scenario.domain.b, c.lambda1),
        })
    }
}

// ---------------------------------------------------------------- forward

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardReport {
    pub scenario: String,
    pub nx1: usize,
    pub nxi: Vec<usize>,
    pub nt: usize,
    pub picard_iters: usize,
    pub converged: bool,
    pub final_update_norm: f64,
    /// `H^{2,1}(Q_{T,eps})` distance of the discrete solution to the
    /// closed-form pair.
    pub discretization_error: f64,
    pub sup_u: f64,
    pub sup_grad_u: f64,
    pub sup_lap_u: f64,
    pub sup_m: f64,
    pub sup_grad_m: f64,
    pub box_within: bool,
    pub g1_sup: f64,
    pub pz_sup: f64,
    pub k_c1: f64,
    pub coefficients_within: bool,
    pub rules: WeightRules,
}

/// Forward solve with its checks; fails if the scenario is invalid.
pub fn run_forward(config: &ExperimentConfig) -> Result<(Prepared, ForwardReport)> {
    let p = prepare(config)?;
    let r = &p.run;
    let b = r.box_check;
    let report = ForwardReport {
        scenario: config.scenario.id.clone(),
        nx1: r.grid.nx1,
        nxi: r.grid.nxi.clone(),
        nt: r.grid.nt,
        picard_iters: r.solution.picard_iters,
        converged: r.solution.converged,
        final_update_norm: r.solution.final_update_norm,
        discretization_error: p.forward_error,
        sup_u: b.sup_u,
        sup_grad_u: b.sup_grad_u,
        sup_lap_u: b.sup_lap_u,
        sup_m: b.sup_m,
        sup_grad_m: b.sup_grad_m,
        box_within: b.within,
        g1_sup: r.g1_sup,
        pz_sup: r.pz_sup,
        k_c1: r.k_c1,
        coefficients_within: r.coefficients_within,
        rules: WeightRules::new(&p)?,
    };
    Ok((p, report))
}

/// Refinement along space or time against a fine reference solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderStudy {
    /// `space` or `time`
    pub axis: String,
    /// Refined node counts along the studied axis.
    pub nodes: Vec<usize>,
    pub reference_nodes: usize,
    /// Node count of the fixed axis.
    pub fixed_nodes: usize,
    /// Max-norm errors on the coarse nodes: Bellman, Fokker-Planck, Picard.
    pub errors: [Vec<f64>; 3],
    /// Least-squares slopes of `ln error` against `ln h`.
    pub orders: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub scenario: String,
    pub space: OrderStudy,
    pub time: OrderStudy,
    pub space_threshold: f64,
    pub time_threshold: f64,
    pub passed: bool,
}

struct Components {
    bellman: ScalarField<f64>,
    fp: ScalarField<f64>,
    picard: (ScalarField<f64>, ScalarField<f64>),
}

fn components(s: &Scenario) -> Result<Components> {
    let model = s.model::<f64>()?;
    let grid = model.grid().clone();
    let mf = s.manufactured()?;
    let bc = mf.boundary_conditions(&grid)?;
    let (u_star, m_star) = mf.fields(&grid);
    let bellman = solve_bellman_backward(&model, &m_star, &bc)?;
    let fp = solve_fp_forward(&model, &u_star, &bc)?;
    let opts = PicardOptions { theta: s.picard.theta, tol: s.picard.tol, max_iters: s.picard.max_iters };
    let sol = picard_solve(&model, &bc, opts)?;
    if !sol.converged {
        return Err(Error::InvalidParameter(format!("Picard solve did not converge on {}x{}", s.nx1, s.nt)));
    }
    Ok(Components { bellman, fp, picard: (sol.u, sol.m) })
}

/// Max difference on the coarse nodes; `rx`, `rt` are the refinement ratios.
fn restricted_error(coarse: &ScalarField<f64>, fine: &ScalarField<f64>, rx: usize, rt: usize) -> f64 {
    let gc = coarse.grid();
    let mut worst = 0.0f64;
    for k in 0..gc.nt {
        for i in 0..gc.nx1 {
            worst = worst.max((coarse.at(i, 0, k) - fine.at(i * rx, 0, k * rt)).abs());
        }
    }
    worst
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn study(base: &Scenario, axis: &str, nodes: &[usize], reference: usize, fixed: usize) -> Result<OrderStudy> {
    let at = |n: usize| if axis == "space" { base.with_resolution(n, &[], fixed) } else { base.with_resolution(fixed, &[], n) };
    let fine = components(&at(reference))?;
    let coarse: Vec<Result<Components>> = nodes.par_iter().map(|&n| components(&at(n))).collect();
    let mut errors: [Vec<f64>; 3] = Default::default();
    let mut steps = Vec::new();
    for (&n, c) in nodes.iter().zip(coarse) {
        let c = c?;
        if (reference - 1) % (n - 1) != 0 {
            return Err(Error::InvalidParameter(format!("{n} nodes do not nest in {reference}")));
        }
        let r = (reference - 1) / (n - 1);
        let (rx, rt) = if axis == "space" { (r, 1) } else { (1, r) };
        errors[0].push(restricted_error(&c.bellman, &fine.bellman, rx, rt));
        errors[1].push(restricted_error(&c.fp, &fine.fp, rx, rt));
        errors[2].push(restricted_error(&c.picard.0, &fine.picard.0, rx, rt).max(restricted_error(&c.picard.1, &fine.picard.1, rx, rt)));
        steps.push(1.0 / (n - 1) as f64);
    }
    let orders = [0, 1, 2].map(|i| loglog_slope(&steps, &errors[i]).unwrap_or(f64::NAN));
    Ok(OrderStudy { axis: axis.into(), nodes: nodes.to_vec(), reference_nodes: reference, fixed_nodes: fixed, errors, orders })
}

/// Spatial (`nx1` in 11, 21, 41 against 161 at fixed `nt`) and temporal
/// (`nt` in 21, 41, 81 against 641 at fixed `nx1`) refinement of a
/// one-dimensional scenario.
pub fn forward_order_study(base: &Scenario) -> Result<OrderReport> {
    if base.domain.n != 1 {
        return Err(Error::InvalidParameter("the order study runs on one-dimensional scenarios".into()));
    }
    let space = study(base, "space", &[11, 21, 41], 161, 41)?;
    let time = study(base, "time", &[21, 41, 81], 641, 21)?;
    let (space_threshold, time_threshold) = (1.9, 0.9);
    let passed = space.orders.iter().all(|o| *o >= space_threshold) && time.orders.iter().all(|o| *o >= time_threshold);
    Ok(OrderReport { scenario: base.id.clone(), space, time, space_threshold, time_threshold, passed })
}

// ------------------------------------------------------------- uniqueness

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub scenario: String,
    pub rules: WeightRules,
    pub lambda: LambdaChoice,
    /// Noise actually present in the data labelled exact (negative control).
    pub injected_noise: f64,
    /// Forward discretization error on the window.
    pub floor: f64,
    pub factor: f64,
    /// Error against the discrete truth.
    pub error: f64,
    /// Error against the closed-form pair.
    pub error_vs_exact: f64,
    pub passed: bool,
    pub recon: ReconSummary,
}

/// Reconstruction from exact data; `injected_noise > 0` corrupts the data
/// while still calling them exact.
pub fn run_uniqueness_check(p: &Prepared, injected_noise: f64) -> Result<(UniquenessReport, ReconstructionResult<f64>)> {
    let data = p.noisy_data(injected_noise, p.config.seed)?;
    let lambda = choose_lambda(&p.config, 0.0);
    let params = p.params(lambda.lambda)?;
    let r = reconstruct(&p.run.model, &data, &params, &p.recon_options())?;
    let (error, error_vs_exact) = p.errors(&r.solution.u, &r.solution.m)?;
    let factor = 10.0;
    let report = UniquenessReport {
        scenario: p.config.scenario.id.clone(),
        rules: WeightRules::new(p)?,
        lambda,
        injected_noise,
        floor: p.forward_error,
        factor,
        error,
        error_vs_exact,
        passed: error <= factor * p.forward_error,
        recon: ReconSummary::new(&r, lambda.lambda),
    };
    Ok((report, r))
}

// -------------------------------------------------------------- stability

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub delta: f64,
    pub seed: u64,
    pub lambda: LambdaChoice,
    pub error: f64,
    pub error_vs_exact: f64,
    /// `delta^rho`
    pub delta_pow_rho: f64,
    /// `delta^(2 rho)`
    pub delta_pow_2rho: f64,
    /// `exp(-lambda (b^2 - a^2) / 2)` at the lambda used.
    pub apriori_decay: f64,
    pub recon: ReconSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub scenario: String,
    pub eps: f64,
    pub rho_theoretical: f64,
    pub rules: WeightRules,
    /// Positive noise levels, strictly decreasing.
    pub delta_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub runs: Vec<SweepRun>,
    /// Mean error over seeds per delta.
    pub errors: Vec<f64>,
    /// Exact-data reconstruction error.
    pub floor: f64,
    pub floor_factor: f64,
    pub fit_deltas: Vec<f64>,
    pub fitted_slope: Option<f64>,
    pub slope_tolerance: f64,
    pub monotone_factor: f64,
    pub monotone: bool,
    /// The exact-data run, also a uniqueness check.
    pub uniqueness: UniquenessReport,
    pub passed: bool,
    pub warnings: Vec<String>,
}

pub fn run_stability_sweep(p: &Prepared) -> Result<StabilityReport> {
    let w = &p.config.sweep;
    let mut deltas: Vec<f64> = w.deltas.iter().copied().filter(|d| *d > 0.0).collect();
    deltas.sort_by(|a, b| b.total_cmp(a));
    if deltas.windows(2).any(|v| v[0] == v[1]) {
        return Err(Error::Config("`sweep.deltas` contains duplicates".into()));
    }
    let mut warnings = Vec::new();
    if w.deltas.contains(&0.0) {
        warnings.push("delta = 0 routed to the uniqueness check and excluded from the fit".to_string());
    }
    if deltas.len() < 2 {
        warnings.push("insufficient delta grid: the slope needs at least two positive noise levels".to_string());
    }
    let jobs: Vec<Option<(f64, u64)>> =
        std::iter::once(None).chain(deltas.iter().flat_map(|&d| w.seeds.iter().map(move |&s| Some((d, s))))).collect();
    let rho = p.params(p.config.carleman.lambda1)?.rho;
    let (a, b) = (p.config.scenario.domain.a, p.config.scenario.domain.b);
    enum Out {
        Exact(Box<UniquenessReport>),
        Run(Box<SweepRun>),
    }
    let outs: Vec<Result<Out>> = jobs
        .par_iter()
        .map(|job| match *job {
            None => Ok(Out::Exact(Box::new(run_uniqueness_check(p, 0.0)?.0))),
            Some((delta, seed)) => {
                let data = p.noisy_data(delta, seed)?;
                let lambda = choose_lambda(&p.config, delta);
                let r = reconstruct(&p.run.model, &data, &p.params(lambda.lambda)?, &p.recon_options())?;
                let (error, error_vs_exact) = p.errors(&r.solution.u, &r.solution.m)?;
                Ok(Out::Run(Box::new(SweepRun {
                    delta,
                    seed,
                    lambda,
                    error,
                    error_vs_exact,
                    delta_pow_rho: delta.powf(rho),
                    delta_pow_2rho: delta.powf(2.0 * rho),
                    apriori_decay: apriori_decay(lambda.lambda, a, b),
                    recon: ReconSummary::new(&r, lambda.lambda),
                })))
            }
        })
        .collect();
    let mut uniqueness = None;
    let mut runs = Vec::new();
    for o in outs {
        match o? {
            Out::Exact(u) => uniqueness = Some(*u),
            Out::Run(r) => runs.push(*r),
        }
    }
    let uniqueness = uniqueness.expect("exact-data job is always scheduled");
    for r in &runs {
        if !r.recon.converged {
            warnings.push(format!("delta = {:e}, seed {}: reconstruction stopped with {:?}", r.delta, r.seed, r.recon.stop_reason));
        }
    }
    let errors: Vec<f64> = deltas
        .iter()
        .map(|d| {
            let e: Vec<f64> = runs.iter().filter(|r| r.delta == *d).map(|r| r.error).collect();
            e.iter().sum::<f64>() / e.len() as f64
        })
        .collect();
    let floor = uniqueness.error;
    let (fit_deltas, fit_errors): (Vec<f64>, Vec<f64>) =
        deltas.iter().zip(&errors).filter(|(_, e)| **e > w.floor_factor * floor).map(|(d, e)| (*d, *e)).unzip();
    let fitted_slope = loglog_slope(&fit_deltas, &fit_errors);
    if deltas.len() >= 2 && fitted_slope.is_none() {
        warnings.push("fewer than two errors above the floor: slope undefined".to_string());
    }
    let monotone = errors.windows(2).all(|v| v[1] <= w.monotone_factor * v[0]);
    let passed = fitted_slope.is_some_and(|s| s >= rho - w.slope_tolerance) && monotone;
    Ok(StabilityReport {
        scenario: p.config.scenario.id.clone(),
        eps: p.config.carleman.eps,
        rho_theoretical: rho,
        rules: WeightRules::new(p)?,
        delta_grid: deltas,
        seeds: w.seeds.clone(),
        runs,
        errors,
        floor,
        floor_factor: w.floor_factor,
        fit_deltas,
        fitted_slope,
        slope_tolerance: w.slope_tolerance,
        monotone_factor: w.monotone_factor,
        monotone,
        uniqueness,
        passed,
        warnings,
    })
}

// ------------------------------------------------------------ reconstruct

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStartSummary {
    pub seeds: Vec<Option<u64>>,
    pub objective_final: Vec<f64>,
    pub max_pairwise_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructReport {
    pub scenario: String,
    pub rules: WeightRules,
    /// Noise level of manufactured data; `None` for external data.
    pub delta: Option<f64>,
    pub lambda: LambdaChoice,
    /// Errors against the scenario truth (manufactured data only).
    pub error: Option<f64>,
    pub error_vs_exact: Option<f64>,
    pub recon: ReconSummary,
    pub multistart: Option<MultiStartSummary>,
}

/// Reconstructs from `data`, or from the scenario traces with noise `delta`.
pub fn run_reconstruct(
    p: &Prepared,
    data: Option<&CauchyData<f64>>,
    delta: f64,
) -> Result<(ReconstructReport, ReconstructionResult<f64>)> {
    let owned;
    let (data, manufactured) = match data {
        Some(d) => (d, false),
        None => {
            owned = p.noisy_data(delta, p.config.seed)?;
            (&owned, true)
        }
    };
    let lambda = choose_lambda(&p.config, if manufactured { delta } else { 0.0 });
    let params = p.params(lambda.lambda)?;
    let opts = p.recon_options();
    let n_extra = p.config.recon.multistart;
    let (r, multi) = if n_extra > 0 {
        let seeds: Vec<u64> = (0..n_extra as u64).map(|i| p.config.seed.wrapping_add(i + 1)).collect();
        let mut ms = multistart(&p.run.model, data, &params, &opts, &seeds, p.window)?;
        let summary = MultiStartSummary {
            seeds: ms.seeds.clone(),
            objective_final: ms.results.iter().map(|r| *r.objective_history.last().expect("nonempty")).collect(),
            max_pairwise_distance: ms.max_pairwise_distance,
        };
        (ms.results.swap_remove(0), Some(summary))
    } else {
        (reconstruct(&p.run.model, data, &params, &opts)?, None)
    };
    let (error, error_vs_exact) = if manufactured {
        let (a, b) = p.errors(&r.solution.u, &r.solution.m)?;
        (Some(a), Some(b))
    } else {
        (None, None)
    };
    let report = ReconstructReport {
        scenario: p.config.scenario.id.clone(),
        rules: WeightRules::new(p)?,
        delta: manufactured.then_some(delta),
        lambda,
        error,
        error_vs_exact,
        recon: ReconSummary::new(&r, lambda.lambda),
        multistart: multi,
    };
    Ok((report, r))
}

// --------------------------------------------------------------- carleman

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlemanCheck {
    pub operator: Operator,
    pub members: usize,
    pub lambda0_estimate: Option<f64>,
    pub positive_from_lambda0: bool,
    /// `max / min` of the per-lambda minimal ratio over the whole grid.
    pub min_ratio_spread: Option<f64>,
    pub spread_limit: f64,
    pub endpoint_valid: bool,
    pub passed: bool,
}

impl CarlemanCheck {
    pub fn new(r: &CarlemanReport<f64>, min_members: usize) -> Self {
        let nl = r.lambda_grid.len();
        let positive_from_lambda0 = r.lambda0_index().is_some_and(|j0| {
            (0..r.members.len()).filter(|i| !r.skipped.contains(i)).all(|i| (j0..nl).all(|j| r.cell(i, j).ratio.is_some_and(|v| v > 0.0)))
        });
        let spread = r.min_ratio_spread(0);
        let spread_limit = 10.0;
        let members = r.members.len() - r.skipped.len();
        let passed = members >= min_members
            && positive_from_lambda0
            && spread.is_some_and(|s| s < spread_limit)
            && r.endpoint_valid;
        Self {
            operator: r.operator,
            members,
            lambda0_estimate: r.lambda0_estimate,
            positive_from_lambda0,
            min_ratio_spread: spread,
            spread_limit,
            endpoint_valid: r.endpoint_valid,
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlemanExperiment {
    pub primary: CarlemanReport<f64>,
    /// The reversed operator on the time-reversed family.
    pub reversed: CarlemanReport<f64>,
    pub checks: [CarlemanCheck; 2],
    pub reversal_discrepancy: f64,
    pub reversal_tolerance: f64,
    pub passed: bool,
}

/// Verifies the configured operator on the vanishing family of the
/// scenario grid and the reversed operator on its time reversal.
pub fn run_carleman(config: &ExperimentConfig) -> Result<CarlemanExperiment> {
    let c = &config.carleman;
    let grid = config.scenario.grid::<f64>()?;
    let family = vanishing_family(&grid, c.family_random, config.seed, c.margin);
    let params = CarlemanParams::for_domain(&grid.domain, c.lambdas[0], c.eps)?.with_normalize(c.normalize);
    let primary = crate::carleman::verify_estimate(c.operator, &family, &params, &c.lambdas)?;
    let reversed = crate::carleman::verify_estimate(c.operator.reversed(), &time_reversed_family(&family), &params, &c.lambdas)?;
    let reversal_discrepancy = report_discrepancy(&primary, &reversed)?;
    let min_members = 20;
    let checks = [CarlemanCheck::new(&primary, min_members), CarlemanCheck::new(&reversed, min_members)];
    let reversal_tolerance = 1e-10;
    let passed = checks.iter().all(|k| k.passed) && reversal_discrepancy <= reversal_tolerance;
    Ok(CarlemanExperiment { primary, reversed, checks, reversal_discrepancy, reversal_tolerance, passed })
}
