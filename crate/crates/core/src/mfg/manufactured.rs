use std::sync::Arc;

use super::{BoundaryConditions, InteractionSpec, Model};
use crate::domain::Grid;
use crate::error::Result;
use crate::expr::{add, mul, sub, Env, Expr, Var};
use crate::field::ScalarField;
use crate::reconstruct::AprioriBounds;
use crate::scalar::Scalar;

/// Closed-form pair `(u*, m*)` in `x1, x2, t`; the sources that make it an
/// exact solution of the continuous system are derived symbolically.
#[derive(Debug, Clone, PartialEq)]
pub struct Manufactured {
    pub u: Expr,
    pub m: Expr,
}

impl Manufactured {
    pub fn parse(u: &str, m: &str) -> Result<Self> {
        Ok(Self { u: Expr::parse(u)?, m: Expr::parse(m)? })
    }

    pub fn fields<T: Scalar>(&self, grid: &Arc<Grid<T>>) -> (ScalarField<T>, ScalarField<T>) {
        let eval = |e: &Expr| ScalarField::from_fn(grid.clone(), |x1, x2, t| e.eval(&Env::point(x1, x2, t)));
        (eval(&self.u), eval(&self.m))
    }

    /// Model on `grid` with the manufacturing sources installed.
    pub fn model<T: Scalar>(&self, grid: Arc<Grid<T>>, spec: InteractionSpec, bounds: AprioriBounds<T>) -> Result<Model<T>> {
        let base = Model::new(grid.clone(), spec, bounds)?;
        let (sb, sf) = self.sources(&base);
        base.with_sources(sb, sf)
    }

    pub fn boundary_conditions<T: Scalar>(&self, grid: &Arc<Grid<T>>) -> Result<BoundaryConditions<T>> {
        let (u, m) = self.fields(grid);
        BoundaryConditions::from_fields(&u, &m)
    }

    /// `(s_B, s_F)` at every node. The nonlocal term of `m*` uses the grid
    /// quadrature of the model.
    pub fn sources<T: Scalar>(&self, model: &Model<T>) -> (Vec<T>, Vec<T>) {
        let grid = model.grid();
        let alpha = grid.domain.alpha.to_f64_lossy();
        let vars: Vec<Var> = if grid.dim() == 1 { vec![Var::X1] } else { vec![Var::X1, Var::X2] };
        let k = &model.spec().k;
        let k2 = mul(k.clone(), k.clone());

        // u_t + alpha Lap u + (k^2/2)|grad u|^2, without P
        let mut grad_sq = Expr::Const(0.0);
        for &v in &vars {
            let d = self.u.diff(v);
            grad_sq = add(grad_sq, mul(d.clone(), d));
        }
        let bellman_local = add(
            add(self.u.diff(Var::T), mul(Expr::Const(alpha), self.u.laplacian(&vars))),
            mul(mul(Expr::Const(0.5), k2.clone()), grad_sq),
        );

        // m_t - alpha Lap m + div(k^2 m grad u)
        let mut div = Expr::Const(0.0);
        for &v in &vars {
            div = add(div, mul(mul(k2.clone(), self.m.clone()), self.u.diff(v)).diff(v));
        }
        let fp = add(sub(self.m.diff(Var::T), mul(Expr::Const(alpha), self.m.laplacian(&vars))), div);

        let (_, m_field) = self.fields(grid);
        let ns = grid.n_space();
        let mut sb = vec![T::zero(); grid.n_nodes()];
        let mut sf = vec![T::zero(); grid.n_nodes()];
        for kt in 0..grid.nt {
            let inter = model.interaction(kt, m_field.slice(kt));
            for s in 0..ns {
                let (i1, i2) = grid.space_coords(s);
                let env = Env::point(grid.x1(i1), grid.x2(i2), grid.t(kt));
                sb[kt * ns + s] = bellman_local.eval(&env) + inter.p[s];
                sf[kt * ns + s] = fp.eval(&env);
            }
        }
        (sb, sf)
    }
}
