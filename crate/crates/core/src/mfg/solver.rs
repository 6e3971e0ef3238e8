use super::scheme::{bellman_explicit, fp_explicit, lap_stencil};
use super::{BoundaryConditions, MfgSolution, Model};
use crate::banded::{BandedLdl, SymBanded};
use crate::domain::Grid;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::scalar::Scalar;

/// Damped Picard iteration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions<T> {
    pub theta: T,
    pub tol: T,
    pub max_iters: usize,
}

impl<T: Scalar> Default for PicardOptions<T> {
    fn default() -> Self {
        Self { theta: T::lit(0.5), tol: T::lit(1e-10), max_iters: 200 }
    }
}

/// `I / ht - alpha Lap` on interior nodes, factored once per grid.
struct ImplicitStep<T> {
    interior: Vec<usize>,
    ldl: BandedLdl<T>,
    alpha: T,
    inv_ht: T,
}

impl<T: Scalar> ImplicitStep<T> {
    fn new(grid: &Grid<T>, alpha: T) -> Result<Self> {
        let interior = grid.interior_space_nodes();
        let mut pos = vec![usize::MAX; grid.n_space()];
        for (i, &s) in interior.iter().enumerate() {
            pos[s] = i;
        }
        let bw = if grid.dim() == 1 { 1 } else { grid.nx1 - 2 };
        let inv_ht = T::one() / grid.ht;
        let mut a = SymBanded::zeros(interior.len(), bw);
        for (i, &s) in interior.iter().enumerate() {
            a.add(i, i, inv_ht);
            for (j, c) in lap_stencil(grid, s) {
                let pj = pos[j];
                if pj != usize::MAX && pj <= i {
                    a.add(i, pj, -alpha * c);
                }
            }
        }
        Ok(Self { interior, ldl: a.factor()?, alpha, inv_ht })
    }

    /// Solves `x / ht - alpha Lap x = rhs` at interior nodes; boundary values
    /// of `out` must already hold the Dirichlet data.
    fn solve(&self, grid: &Grid<T>, rhs: &[T], out: &mut [T]) {
        let mut b: Vec<T> = self.interior.iter().map(|&s| rhs[s]).collect();
        for (i, &s) in self.interior.iter().enumerate() {
            for (j, c) in lap_stencil(grid, s) {
                if grid.is_boundary_space(j) {
                    b[i] += self.alpha * c * out[j];
                }
            }
        }
        let x = self.ldl.solve(&b);
        for (i, &s) in self.interior.iter().enumerate() {
            out[s] = x[i];
        }
    }
}

fn check_blowup<T: Scalar>(slice: &[T], limit: T, equation: &'static str) -> Result<()> {
    let worst = slice.iter().fold(T::zero(), |acc, v| if v.is_finite() { acc.max(v.abs()) } else { T::infinity() });
    if worst > limit {
        return Err(Error::BlowUp { equation, value: worst.to_f64_lossy(), limit: limit.to_f64_lossy() });
    }
    Ok(())
}

fn set_boundary<T: Scalar>(grid: &Grid<T>, slice: &mut [T], data: &[T]) {
    for s in grid.boundary_space_nodes() {
        slice[s] = data[s];
    }
}

fn check_bc<T: Scalar>(grid: &Grid<T>, bc: &BoundaryConditions<T>) -> Result<()> {
    let (ns, n) = (grid.n_space(), grid.n_nodes());
    if bc.terminal_u.len() != ns || bc.initial_m.len() != ns || bc.dirichlet_u.len() != n || bc.dirichlet_m.len() != n {
        return Err(Error::GridMismatch("boundary condition arrays do not match the grid".into()));
    }
    Ok(())
}

/// Marches the Bellman equation from `t = T` down to `t = 0` for a given
/// density `m`.
pub fn solve_bellman_backward<T: Scalar>(
    model: &Model<T>,
    m: &ScalarField<T>,
    bc: &BoundaryConditions<T>,
) -> Result<ScalarField<T>> {
    let grid = model.grid();
    check_bc(grid, bc)?;
    let step = ImplicitStep::new(grid, model.alpha())?;
    bellman_with(model, &step, m, bc)
}

fn bellman_with<T: Scalar>(
    model: &Model<T>,
    step: &ImplicitStep<T>,
    m: &ScalarField<T>,
    bc: &BoundaryConditions<T>,
) -> Result<ScalarField<T>> {
    let grid = model.grid();
    let (ns, nt) = (grid.n_space(), grid.nt);
    let limit = T::lit(10.0) * model.bounds().r4;
    let mut u = ScalarField::zeros(grid.clone());
    {
        let last = u.slice_mut(nt - 1);
        last.copy_from_slice(&bc.terminal_u);
        set_boundary(grid, last, &bc.dirichlet_u[(nt - 1) * ns..]);
    }
    for k in (0..nt - 1).rev() {
        let explicit = bellman_explicit(model, k + 1, u.slice(k + 1), m.slice(k + 1));
        let rhs: Vec<T> = u.slice(k + 1).iter().zip(&explicit).map(|(&v, &e)| v * step.inv_ht + e).collect();
        let vals = u.values_mut();
        let cur = &mut vals[k * ns..(k + 1) * ns];
        set_boundary(grid, cur, &bc.dirichlet_u[k * ns..(k + 1) * ns]);
        step.solve(grid, &rhs, cur);
        check_blowup(cur, limit, "bellman")?;
    }
    Ok(u)
}

/// Marches the Fokker-Planck equation from `t = 0` up to `t = T` for a given
/// value function `u`.
pub fn solve_fp_forward<T: Scalar>(
    model: &Model<T>,
    u: &ScalarField<T>,
    bc: &BoundaryConditions<T>,
) -> Result<ScalarField<T>> {
    let grid = model.grid();
    check_bc(grid, bc)?;
    let step = ImplicitStep::new(grid, model.alpha())?;
    fp_with(model, &step, u, bc)
}

fn fp_with<T: Scalar>(
    model: &Model<T>,
    step: &ImplicitStep<T>,
    u: &ScalarField<T>,
    bc: &BoundaryConditions<T>,
) -> Result<ScalarField<T>> {
    let grid = model.grid();
    let (ns, nt) = (grid.n_space(), grid.nt);
    let limit = T::lit(10.0) * model.bounds().r5;
    let mut m = ScalarField::zeros(grid.clone());
    {
        let first = m.slice_mut(0);
        first.copy_from_slice(&bc.initial_m);
        set_boundary(grid, first, &bc.dirichlet_m[..ns]);
    }
    for k in 0..nt - 1 {
        let explicit = fp_explicit(model, k, u.slice(k), m.slice(k));
        let rhs: Vec<T> = m.slice(k).iter().zip(&explicit).map(|(&v, &e)| v * step.inv_ht - e).collect();
        let vals = m.values_mut();
        let next = &mut vals[(k + 1) * ns..(k + 2) * ns];
        set_boundary(grid, next, &bc.dirichlet_m[(k + 1) * ns..(k + 2) * ns]);
        step.solve(grid, &rhs, next);
        check_blowup(next, limit, "fokker-planck")?;
    }
    Ok(m)
}

fn max_diff<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc.max((*x - *y).abs()))
}

/// Damped Picard coupling of the two marches.
///
/// The start density repeats `m(., 0)` in time with the Dirichlet data on the
/// boundary. The update norm is `max|u_new - u| + max|F(u_new) - m|`, the
/// undamped Fokker-Planck residual, so a zero damping never reports
/// convergence unless the start is already a fixed point.
pub fn picard_solve<T: Scalar>(
    model: &Model<T>,
    bc: &BoundaryConditions<T>,
    opts: PicardOptions<T>,
) -> Result<MfgSolution<T>> {
    let grid = model.grid();
    check_bc(grid, bc)?;
    if !(opts.theta >= T::zero() && opts.theta <= T::one()) {
        return Err(Error::InvalidParameter(format!("damping must lie in [0, 1], got {}", opts.theta)));
    }
    let ns = grid.n_space();
    let step = ImplicitStep::new(grid, model.alpha())?;
    let mut m = ScalarField::zeros(grid.clone());
    for k in 0..grid.nt {
        let slice = m.slice_mut(k);
        slice.copy_from_slice(&bc.initial_m);
        set_boundary(grid, slice, &bc.dirichlet_m[k * ns..(k + 1) * ns]);
    }
    let mut u = ScalarField::zeros(grid.clone());
    let mut update = T::infinity();
    for iter in 1..=opts.max_iters {
        let u_new = bellman_with(model, &step, &m, bc)?;
        let fm = fp_with(model, &step, &u_new, bc)?;
        update = max_diff(u_new.values(), u.values()) + max_diff(fm.values(), m.values());
        let theta = opts.theta;
        m = m.zip_map(&fm, |old, new| (T::one() - theta) * old + theta * new);
        u = u_new;
        if update <= opts.tol {
            return Ok(MfgSolution { u, m, picard_iters: iter, final_update_norm: update, converged: true });
        }
    }
    Ok(MfgSolution { u, m, picard_iters: opts.max_iters, final_update_norm: update, converged: false })
}
