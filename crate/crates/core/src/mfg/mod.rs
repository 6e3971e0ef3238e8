//! Forward solver for the coupled Bellman / Fokker-Planck system
//!
//! ```text
//! u_t + alpha Lap u + (k^2/2)|grad u|^2 + P(x, t, NL(m), m) = s_B
//! m_t - alpha Lap m + div(k^2 m grad u)                      = s_F
//! ```
//!
//! with a terminal condition for `u`, an initial condition for `m` and
//! Dirichlet lateral data for both. `NL(m)` is the transverse kernel integral
//! (pointwise multiplier when `n = 1`). The sources `s_B`, `s_F` are zero for
//! the plain system and are used to manufacture exact solutions.

mod manufactured;
pub mod scheme;
mod solver;

use std::sync::Arc;

pub use manufactured::Manufactured;
pub use solver::{picard_solve, solve_bellman_backward, solve_fp_forward, PicardOptions};

use crate::domain::{Axis, Grid};
use crate::error::{Error, Result};
use crate::expr::{Env, Expr, Var};
use crate::field::ScalarField;
use crate::reconstruct::AprioriBounds;
use crate::scalar::Scalar;
use crate::stencil::trapezoid_weights;

/// Interaction term `P(x, t, z1, z2)`, kernel `G1` and coefficient `k(x)`.
///
/// `z1` is the nonlocal term, `z2` the local density. `g1` is an expression in
/// `x1, x2, y2` (only `x1, x2` for `n = 1`), `k` in `x1, x2`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSpec {
    pub p: Expr,
    pub g1: Expr,
    pub k: Expr,
}

impl InteractionSpec {
    pub fn parse(p: &str, g1: &str, k: &str) -> Result<Self> {
        Ok(Self { p: Expr::parse(p)?, g1: Expr::parse(g1)?, k: Expr::parse(k)? })
    }

    pub fn p_z1(&self) -> Expr {
        self.p.diff(Var::Z1)
    }

    pub fn p_z2(&self) -> Expr {
        self.p.diff(Var::Z2)
    }
}

/// `P`, its partial derivatives and the nonlocal term on one time slice.
#[derive(Debug, Clone)]
pub struct Interaction<T> {
    pub nonlocal: Vec<T>,
    pub p: Vec<T>,
    pub p_z1: Vec<T>,
    pub p_z2: Vec<T>,
}

/// A discretized problem: grid, coefficients, sources and a-priori bounds.
#[derive(Debug, Clone)]
pub struct Model<T> {
    grid: Arc<Grid<T>>,
    spec: InteractionSpec,
    p_z1: Expr,
    p_z2: Expr,
    k2: Vec<T>,
    k2_mid: Vec<Vec<T>>,
    kernel: Vec<Vec<(usize, T)>>,
    source_b: Vec<T>,
    source_f: Vec<T>,
    bounds: AprioriBounds<T>,
}

impl<T: Scalar> Model<T> {
    pub fn new(grid: Arc<Grid<T>>, spec: InteractionSpec, bounds: AprioriBounds<T>) -> Result<Self> {
        bounds.validate()?;
        let ns = grid.n_space();
        let k_at = |x1: T, x2: T| spec.k.eval(&Env::point(x1, x2, T::zero()));
        let coords: Vec<(T, T)> = (0..ns)
            .map(|s| {
                let (i1, i2) = grid.space_coords(s);
                (grid.x1(i1), grid.x2(i2))
            })
            .collect();
        let k2: Vec<T> = coords.iter().map(|&(x1, x2)| k_at(x1, x2).powi(2)).collect();
        let half = T::lit(0.5);
        let k2_mid = grid
            .space_axes()
            .iter()
            .map(|&axis| {
                let h = grid.spacing(axis);
                coords
                    .iter()
                    .map(|&(x1, x2)| match axis {
                        Axis::Space(0) => k_at(x1 + half * h, x2).powi(2),
                        _ => k_at(x1, x2 + half * h).powi(2),
                    })
                    .collect()
            })
            .collect();
        let kernel = build_kernel(&grid, &spec.g1);
        let p_z1 = spec.p_z1();
        let p_z2 = spec.p_z2();
        let n = grid.n_nodes();
        Ok(Self {
            grid,
            spec,
            p_z1,
            p_z2,
            k2,
            k2_mid,
            kernel,
            source_b: vec![T::zero(); n],
            source_f: vec![T::zero(); n],
            bounds,
        })
    }

    pub fn with_sources(mut self, source_b: Vec<T>, source_f: Vec<T>) -> Result<Self> {
        let n = self.grid.n_nodes();
        if source_b.len() != n || source_f.len() != n {
            return Err(Error::GridMismatch("source length differs from node count".into()));
        }
        self.source_b = source_b;
        self.source_f = source_f;
        Ok(self)
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn spec(&self) -> &InteractionSpec {
        &self.spec
    }

    pub fn bounds(&self) -> &AprioriBounds<T> {
        &self.bounds
    }

    pub fn alpha(&self) -> T {
        self.grid.domain.alpha
    }

    pub fn source_b(&self) -> &[T] {
        &self.source_b
    }

    pub fn source_f(&self) -> &[T] {
        &self.source_f
    }

    /// `k^2` at the space node `s`.
    pub fn k2(&self, s: usize) -> T {
        self.k2[s]
    }

    /// `k^2` at the midpoint between `s` and its upper neighbour along `axis`.
    pub fn k2_mid(&self, axis: usize, s: usize) -> T {
        self.k2_mid[axis][s]
    }

    /// Quadrature entries `(slice index, weight)` of the nonlocal term at `s`.
    pub fn kernel_row(&self, s: usize) -> &[(usize, T)] {
        &self.kernel[s]
    }

    pub fn nonlocal_slice(&self, m_slice: &[T]) -> Vec<T> {
        self.kernel.iter().map(|row| row.iter().fold(T::zero(), |acc, &(j, w)| acc + w * m_slice[j])).collect()
    }

    /// Interaction values on time level `k` for the density slice `m_slice`.
    pub fn interaction(&self, k: usize, m_slice: &[T]) -> Interaction<T> {
        let nonlocal = self.nonlocal_slice(m_slice);
        let t = self.grid.t(k);
        let ns = self.grid.n_space();
        let mut out = Interaction {
            nonlocal: nonlocal.clone(),
            p: Vec::with_capacity(ns),
            p_z1: Vec::with_capacity(ns),
            p_z2: Vec::with_capacity(ns),
        };
        for s in 0..ns {
            let (i1, i2) = self.grid.space_coords(s);
            let env = Env::point(self.grid.x1(i1), self.grid.x2(i2), t)
                .with(Var::Z1, nonlocal[s])
                .with(Var::Z2, m_slice[s]);
            out.p.push(self.spec.p.eval(&env));
            out.p_z1.push(self.p_z1.eval(&env));
            out.p_z2.push(self.p_z2.eval(&env));
        }
        out
    }

    /// Sampled `sup |G1|` and `sup |P_z1|, |P_z2|` over the grid and the
    /// given density range, for comparison with `R1` and `R2`.
    pub fn sampled_interaction_bounds(&self, z_range: (T, T)) -> (T, T) {
        let g = &self.grid;
        let mut g1_max = T::zero();
        let mut pz_max = T::zero();
        let samples = 5;
        for s in 0..g.n_space() {
            let (i1, i2) = g.space_coords(s);
            let (x1, x2) = (g.x1(i1), g.x2(i2));
            let ys: Vec<T> = if g.dim() == 2 { (0..g.nx2()).map(|j| g.x2(j)).collect() } else { vec![T::zero()] };
            for y in ys {
                let v = self.spec.g1.eval(&Env::point(x1, x2, T::zero()).with(Var::Y2, y)).abs();
                g1_max = g1_max.max(v);
            }
            for k in (0..g.nt).step_by((g.nt / 4).max(1)) {
                for a in 0..samples {
                    for b in 0..samples {
                        let za = z_range.0 + (z_range.1 - z_range.0) * T::count(a) / T::count(samples - 1);
                        let zb = z_range.0 + (z_range.1 - z_range.0) * T::count(b) / T::count(samples - 1);
                        let env = Env::point(x1, x2, g.t(k)).with(Var::Z1, za).with(Var::Z2, zb);
                        pz_max = pz_max.max(self.p_z1.eval(&env).abs()).max(self.p_z2.eval(&env).abs());
                    }
                }
            }
        }
        (g1_max, pz_max)
    }
}

fn build_kernel<T: Scalar>(grid: &Grid<T>, g1: &Expr) -> Vec<Vec<(usize, T)>> {
    let ns = grid.n_space();
    (0..ns)
        .map(|s| {
            let (i1, i2) = grid.space_coords(s);
            let env = Env::point(grid.x1(i1), grid.x2(i2), T::zero());
            if grid.dim() == 1 {
                vec![(s, g1.eval(&env))]
            } else {
                let w = trapezoid_weights(grid.nx2(), grid.hxi[0]);
                (0..grid.nx2())
                    .map(|j| {
                        let v = g1.eval(&env.with(Var::Y2, grid.x2(j)));
                        (grid.index(i1, j, 0), w[j] * v)
                    })
                    .filter(|&(_, w)| w != T::zero())
                    .collect()
            }
        })
        .collect()
}

/// Nonlocal term of `m` on time level `k`.
pub fn nonlocal_term<T: Scalar>(model: &Model<T>, m: &ScalarField<T>, k: usize) -> Vec<T> {
    model.nonlocal_slice(m.slice(k))
}

/// Terminal, initial and Dirichlet data of the forward problem.
///
/// `dirichlet_u` and `dirichlet_m` are node arrays; only lateral boundary
/// entries are read.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryConditions<T> {
    pub terminal_u: Vec<T>,
    pub initial_m: Vec<T>,
    pub dirichlet_u: Vec<T>,
    pub dirichlet_m: Vec<T>,
}

impl<T: Scalar> BoundaryConditions<T> {
    /// Takes every datum from a reference pair (e.g. a manufactured solution).
    pub fn from_fields(u: &ScalarField<T>, m: &ScalarField<T>) -> Result<Self> {
        u.check_same_grid(m)?;
        let g = u.grid();
        Ok(Self {
            terminal_u: u.slice(g.nt - 1).to_vec(),
            initial_m: m.slice(0).to_vec(),
            dirichlet_u: u.values().to_vec(),
            dirichlet_m: m.values().to_vec(),
        })
    }
}

/// Outcome of the forward solve.
#[derive(Debug, Clone)]
pub struct MfgSolution<T> {
    pub u: ScalarField<T>,
    pub m: ScalarField<T>,
    pub picard_iters: usize,
    pub final_update_norm: T,
    pub converged: bool,
}

/// Sup norms checked against the a-priori boxes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxCheck<T> {
    pub sup_u: T,
    pub sup_grad_u: T,
    pub sup_lap_u: T,
    pub sup_m: T,
    pub sup_grad_m: T,
    pub within: bool,
}

/// Compares `sup|u|, sup|grad u|, sup|Lap u|` with `R4` and
/// `sup|m|, sup|grad m|` with `R5`.
pub fn check_apriori_box<T: Scalar>(u: &ScalarField<T>, m: &ScalarField<T>, bounds: &AprioriBounds<T>) -> BoxCheck<T> {
    let grad_sup = |f: &ScalarField<T>| {
        let g = f.grad();
        let mut best = T::zero();
        for i in 0..f.len() {
            let sq = g.iter().fold(T::zero(), |acc, d| acc + d.values()[i] * d.values()[i]);
            best = best.max(sq.sqrt());
        }
        best
    };
    let sup_u = u.max_abs();
    let sup_grad_u = grad_sup(u);
    let sup_lap_u = u.laplacian().max_abs();
    let sup_m = m.max_abs();
    let sup_grad_m = grad_sup(m);
    let within = sup_u <= bounds.r4
        && sup_grad_u <= bounds.r4
        && sup_lap_u <= bounds.r4
        && sup_m <= bounds.r5
        && sup_grad_m <= bounds.r5;
    BoxCheck { sup_u, sup_grad_u, sup_lap_u, sup_m, sup_grad_m, within }
}
