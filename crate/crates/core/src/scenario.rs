//! Shipped forward scenarios.
//!
//! Every scenario is a manufactured pair `(u*, m*)` with the sources that
//! make it an exact solution, so the discretization error of the forward
//! solve is measurable. The discrete Picard solution is the ground truth of
//! the inverse experiments.
//!
//! * `s1`: `n = 1`, local interaction `P = m`.
//! * `s2`: `n = 1`, `P = z2 + tanh(z1)` with a constant multiplier `G1`.
//! * `s3`: `n = 2`, transverse kernel `G1 = 0.5 + 0.2 x2 y2`.

use std::sync::Arc;

use crate::domain::{build_grid, shrink_cylinder, DomainSpec, Grid};
use crate::error::{Error, Result};
use crate::expr::{Env, Var};
use crate::field::ScalarField;
use crate::mfg::{check_apriori_box, picard_solve, BoundaryConditions, BoxCheck, InteractionSpec, Manufactured, MfgSolution, Model, PicardOptions};
use crate::norms::norm_h21_cylinder;
use crate::reconstruct::AprioriBounds;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub domain: DomainSpec<f64>,
    pub nx1: usize,
    pub nxi: Vec<usize>,
    pub nt: usize,
    pub p: String,
    pub g1: String,
    pub k: String,
    pub u_exact: String,
    pub m_exact: String,
    pub bounds: AprioriBounds<f64>,
    pub picard: PicardOptions<f64>,
}

pub const SCENARIO_IDS: [&str; 3] = ["s1", "s2", "s3"];

impl Scenario {
    pub fn builtin(id: &str) -> Option<Self> {
        let one_d = DomainSpec::one_d(0.5, 1.0, 1.0, 0.5);
        let picard = PicardOptions::default();
        Some(match id {
            "s1" => Self {
                id: id.into(),
                domain: one_d,
                nx1: 41,
                nxi: vec![],
                nt: 41,
                p: "z2".into(),
                g1: "0".into(),
                k: "0.5 + 0.25 * x1".into(),
                u_exact: "0.5 * sin(2 * x1 + t)".into(),
                m_exact: "1 + 0.5 * cos(3 * x1) * exp(-t)".into(),
                bounds: AprioriBounds::new(1.0, 1.0, 1.0, 3.0, 3.0),
                picard,
            },
            "s2" => Self {
                id: id.into(),
                domain: one_d,
                nx1: 41,
                nxi: vec![],
                nt: 41,
                p: "z2 + tanh(z1)".into(),
                g1: "0.5".into(),
                k: "0.6 + 0.1 * x1".into(),
                u_exact: "0.5 * sin(x1 + t)".into(),
                m_exact: "1 + 0.3 * cos(2 * x1) * exp(-t)".into(),
                bounds: AprioriBounds::new(1.0, 2.0, 1.0, 3.0, 3.0),
                picard,
            },
            "s3" => Self {
                id: id.into(),
                domain: DomainSpec::two_d(0.5, 1.0, 0.25, 1.0, 0.5),
                nx1: 21,
                nxi: vec![21],
                nt: 21,
                p: "z2 + tanh(z1)".into(),
                g1: "0.5 + 0.2 * x2 * y2".into(),
                k: "0.6 + 0.1 * x1".into(),
                u_exact: "0.3 * sin(x1 + t) * cos(x2)".into(),
                m_exact: "1 + 0.2 * cos(2 * x1 + x2) * exp(-t)".into(),
                bounds: AprioriBounds::new(1.0, 2.0, 1.0, 3.0, 3.0),
                picard,
            },
            _ => return None,
        })
    }

    pub fn with_resolution(&self, nx1: usize, nxi: &[usize], nt: usize) -> Self {
        Self { nx1, nxi: nxi.to_vec(), nt, ..self.clone() }
    }

    pub fn grid<T: Scalar>(&self) -> Result<Arc<Grid<T>>> {
        let d = &self.domain;
        let spec = DomainSpec {
            n: d.n,
            a: T::lit(d.a),
            b: T::lit(d.b),
            half_widths: d.half_widths.iter().map(|w| T::lit(*w)).collect(),
            t_end: T::lit(d.t_end),
            alpha: T::lit(d.alpha),
        };
        Ok(Arc::new(build_grid(spec, self.nx1, &self.nxi, self.nt)?))
    }

    pub fn interaction(&self) -> Result<InteractionSpec> {
        InteractionSpec::parse(&self.p, &self.g1, &self.k)
    }

    pub fn manufactured(&self) -> Result<Manufactured> {
        Manufactured::parse(&self.u_exact, &self.m_exact)
    }

    pub fn apriori_bounds<T: Scalar>(&self) -> AprioriBounds<T> {
        let b = &self.bounds;
        AprioriBounds::new(T::lit(b.r1), T::lit(b.r2), T::lit(b.r3), T::lit(b.r4), T::lit(b.r5))
    }

    /// Model with the manufacturing sources on this scenario's grid.
    pub fn model<T: Scalar>(&self) -> Result<Model<T>> {
        let grid = self.grid::<T>()?;
        self.manufactured()?.model(grid, self.interaction()?, self.apriori_bounds())
    }

    /// Runs the forward Picard solve and the scenario checks.
    pub fn solve<T: Scalar>(&self) -> Result<ForwardRun<T>> {
        self.bounds.validate()?;
        let model = self.model::<T>()?;
        let grid = model.grid().clone();
        let mf = self.manufactured()?;
        let bc = mf.boundary_conditions(&grid)?;
        let opts = PicardOptions { theta: T::lit(self.picard.theta), tol: T::lit(self.picard.tol), max_iters: self.picard.max_iters };
        let solution = picard_solve(&model, &bc, opts)?;
        let (exact_u, exact_m) = mf.fields(&grid);
        let box_check = check_apriori_box(&solution.u, &solution.m, model.bounds());
        let m_range = (-model.bounds().r5, model.bounds().r5);
        let (g1_sup, pz_sup) = model.sampled_interaction_bounds(m_range);
        let k_c1 = self.k_c1_norm(&grid);
        let b = model.bounds();
        let coefficients_within = g1_sup <= b.r1 && pz_sup <= b.r2 && k_c1 <= b.r3;
        Ok(ForwardRun { grid, model, bc, solution, exact_u, exact_m, box_check, g1_sup, pz_sup, k_c1, coefficients_within })
    }

    /// Sampled `max(sup|k|, sup|grad k|)` on the spatial grid.
    fn k_c1_norm<T: Scalar>(&self, grid: &Grid<T>) -> T {
        let Ok(spec) = self.interaction() else { return T::infinity() };
        let (d1, d2) = (spec.k.diff(Var::X1), spec.k.diff(Var::X2));
        let mut best = T::zero();
        for s in 0..grid.n_space() {
            let (i1, i2) = grid.space_coords(s);
            let env = Env::point(grid.x1(i1), grid.x2(i2), T::zero());
            let g: T = d1.eval(&env).powi(2) + d2.eval(&env).powi(2);
            best = best.max(spec.k.eval(&env).abs()).max(g.sqrt());
        }
        best
    }
}

/// Forward solve of a scenario with its checks.
#[derive(Debug, Clone)]
pub struct ForwardRun<T> {
    pub grid: Arc<Grid<T>>,
    pub model: Model<T>,
    pub bc: BoundaryConditions<T>,
    pub solution: MfgSolution<T>,
    pub exact_u: ScalarField<T>,
    pub exact_m: ScalarField<T>,
    pub box_check: BoxCheck<T>,
    pub g1_sup: T,
    pub pz_sup: T,
    pub k_c1: T,
    pub coefficients_within: bool,
}

impl<T: Scalar> ForwardRun<T> {
    /// `|u_h - u*| + |m_h - m*|` in `H^{2,1}(Q_{T,eps})`: the discretization
    /// error of the forward solve.
    pub fn discretization_error(&self, eps: T) -> Result<T> {
        let w = shrink_cylinder(&self.grid, eps)?;
        Ok(norm_h21_cylinder(&self.solution.u.sub(&self.exact_u), w)? + norm_h21_cylinder(&self.solution.m.sub(&self.exact_m), w)?)
    }

    /// Fails unless the Picard solve converged and the solution and
    /// coefficients respect the a-priori bounds.
    pub fn require_valid(&self) -> Result<()> {
        if !self.solution.converged {
            return Err(Error::InvalidParameter(format!(
                "forward Picard solve did not converge (update norm {})",
                self.solution.final_update_norm
            )));
        }
        if !self.box_check.within || !self.coefficients_within {
            return Err(Error::InvalidParameter(format!("scenario violates its a-priori bounds: {:?}", self.box_check)));
        }
        Ok(())
    }
}
