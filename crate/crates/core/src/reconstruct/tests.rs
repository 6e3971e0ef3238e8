use std::sync::Arc;

use approx::assert_relative_eq;

use super::*;
use crate::cauchy::extract_traces;
use crate::domain::{build_grid, Axis, DomainSpec};
use crate::field::apply_axis;
use crate::mfg::{picard_solve, InteractionSpec, Manufactured, PicardOptions};
use crate::norms::full_weights;
use crate::stencil::Deriv;

struct Setup {
    grid: Arc<Grid<f64>>,
    model: Model<f64>,
    params: CarlemanParams<f64>,
    truth: MfgSolution<f64>,
    data: CauchyData<f64>,
}

fn setup(spec: DomainSpec<f64>, nx: usize, nxi: &[usize], nt: usize, lambda: f64) -> Setup {
    let grid = Arc::new(build_grid(spec.clone(), nx, nxi, nt).unwrap());
    let mf = Manufactured::parse("0.3 * sin(x1 + t) * cos(x2)", "1 + 0.2 * cos(2 * x1 + x2) * exp(-t)").unwrap();
    let ispec = InteractionSpec::parse("z2 + tanh(z1)", "0.5 + 0.2 * x2 * y2", "0.6 + 0.1 * x1").unwrap();
    let model = mf.model(grid.clone(), ispec, AprioriBounds::uniform(20.0)).unwrap();
    let bc = mf.boundary_conditions(&grid).unwrap();
    let truth = picard_solve(&model, &bc, PicardOptions { theta: 1.0, tol: 1e-13, max_iters: 100 }).unwrap();
    let data = extract_traces(&truth.u, &truth.m).unwrap();
    let params = CarlemanParams::for_domain(&spec, lambda, 0.125).unwrap();
    Setup { grid, model, params, truth, data }
}

fn small_1d() -> Setup {
    setup(DomainSpec::one_d(0.5, 1.0, 1.0, 1.0), 9, &[], 9, 2.0)
}

fn small_2d() -> Setup {
    setup(DomainSpec::two_d(0.5, 1.0, 0.25, 1.0, 1.0), 6, &[5], 5, 2.0)
}

fn probe_point(s: &Setup) -> Vec<f64> {
    let u = smooth_random_field(&s.grid, 3, 0.5);
    let m = smooth_random_field(&s.grid, 4, 0.5).map(|v| v + 1.0);
    join(&u, &m)
}

#[test]
fn gradient_matches_central_differences() {
    for s in [small_1d(), small_2d()] {
        let w = ObjectiveWeights { gamma: 3.0, beta: 1e-3 };
        let obj = Objective::new(s.model.clone(), &s.data, &s.params, w).unwrap();
        let x = probe_point(&s);
        let g = obj.gradient(&x);
        let gmax = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let h = 1e-5;
        for i in (0..x.len()).step_by(7) {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            let fd = (obj.value(&xp).total - obj.value(&xm).total) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * gmax.max(g[i].abs()), "{i}: {fd} vs {}", g[i]);
        }
    }
}

#[test]
fn gauss_newton_gradient_agrees_with_gradient() {
    let s = small_2d();
    let obj = Objective::new(s.model.clone(), &s.data, &s.params, ObjectiveWeights { gamma: 2.0, beta: 1e-2 }).unwrap();
    let x = probe_point(&s);
    let (h, g) = obj.gauss_newton(&x);
    let g2 = obj.gradient(&x);
    for (a, b) in g.iter().zip(&g2) {
        assert_relative_eq!(*a, *b, epsilon = 1e-9, max_relative = 1e-10);
    }
    // positive semidefinite on a random direction
    let d: Vec<f64> = (0..x.len()).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
    let hd = h.matvec(&d);
    assert!(hd.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() >= 0.0);
}

#[test]
fn regularization_gradient_matches_direct_assembly() {
    let s = small_2d();
    let beta = 0.7;
    let obj = Objective::new(s.model.clone(), &s.data, &s.params, ObjectiveWeights { gamma: 0.0, beta })
        .unwrap()
        .with_terms(Terms { pde: false, boundary: false, regularization: true });
    let x = probe_point(&s);
    let (u, m) = split(&s.grid, &x);
    let w = full_weights(&s.grid);
    let axes = s.grid.axes();
    let d2 = |f: &[f64], a: Axis, b: Axis, tr: bool| -> Vec<f64> {
        if a == b {
            apply_axis(&s.grid, f, a, Deriv::Second, tr)
        } else if tr {
            apply_axis(&s.grid, &apply_axis(&s.grid, f, a, Deriv::First, true), b, Deriv::First, true)
        } else {
            apply_axis(&s.grid, &apply_axis(&s.grid, f, b, Deriv::First, false), a, Deriv::First, false)
        }
    };
    let mut value = 0.0;
    let mut gu = vec![0.0; s.grid.n_nodes()];
    let mut gm = gu.clone();
    for &a in &axes {
        for &b in &axes {
            for (f, g) in [(u.values(), &mut gu), (m.values(), &mut gm)] {
                let d = d2(f, a, b, false);
                value += beta * d.iter().zip(&w).map(|(v, wi)| wi * v * v).sum::<f64>();
                let wd: Vec<f64> = d.iter().zip(&w).map(|(v, wi)| 2.0 * beta * wi * v).collect();
                for (gi, t) in g.iter_mut().zip(d2(&wd, a, b, true)) {
                    *gi += t;
                }
            }
        }
    }
    assert_relative_eq!(obj.value(&x).regularization, value, max_relative = 1e-12);
    let (ggu, ggm) = split(&s.grid, &obj.gradient(&x));
    for (a, b) in ggu.values().iter().zip(&gu).chain(ggm.values().iter().zip(&gm)) {
        assert_relative_eq!(*a, *b, epsilon = 1e-9, max_relative = 1e-10);
    }
}

#[test]
fn zero_fields_with_zero_data_give_zero() {
    let grid = Arc::new(build_grid(DomainSpec::one_d(0.5, 1.0, 1.0, 1.0), 9, &[], 9).unwrap());
    let model = Model::new(grid.clone(), InteractionSpec::parse("z2 + z1", "1", "1").unwrap(), AprioriBounds::uniform(5.0)).unwrap();
    let params = CarlemanParams::for_domain(&grid.domain, 2.0, 0.125).unwrap();
    let zero = ScalarField::zeros(grid.clone());
    let data = CauchyData::zeros(grid.clone());
    let v = assemble_objective(&model, &zero, &zero, &data, &params, ObjectiveWeights { gamma: 5.0, beta: 1.0 }).unwrap();
    assert_eq!(v.total, 0.0);
}

#[test]
fn truth_is_a_zero_of_the_functional() {
    let s = small_2d();
    let v = assemble_objective(&s.model, &s.truth.u, &s.truth.m, &s.data, &s.params, ObjectiveWeights { gamma: 1e3, beta: 0.0 }).unwrap();
    assert!(v.total < 1e-18, "{v:?}");
}

#[test]
fn boundary_term_is_linear_in_gamma() {
    let s = small_1d();
    let x = probe_point(&s);
    let (u, m) = split(&s.grid, &x);
    let at = |gamma: f64| assemble_objective(&s.model, &u, &m, &s.data, &s.params, ObjectiveWeights { gamma, beta: 0.0 }).unwrap();
    let (one, two) = (at(1.5), at(3.0));
    assert!(one.boundary > 0.0);
    assert_relative_eq!(two.boundary, 2.0 * one.boundary, max_relative = 1e-13);
    assert_eq!(one.bellman, two.bellman);
}

#[test]
fn boundary_term_equals_lateral_norms() {
    let s = small_2d();
    let x = probe_point(&s);
    let (u, m) = split(&s.grid, &x);
    let gamma = 2.5;
    let v = assemble_objective(&s.model, &u, &m, &s.data, &s.params, ObjectiveWeights { gamma, beta: 0.0 }).unwrap();
    let norms = extract_traces(&u, &m).unwrap().difference(&s.data).unwrap().norms().unwrap();
    let expected: f64 = gamma * norms.iter().map(|n| n * n).sum::<f64>();
    assert_relative_eq!(v.boundary, expected, max_relative = 1e-11);
}

#[test]
fn starting_at_the_truth_stays_there() {
    let s = small_1d();
    let opts = ReconOptions {
        beta: Some(0.0),
        init: InitialGuess::Fields(s.truth.u.clone(), s.truth.m.clone()),
        max_iters: 5,
        ..ReconOptions::default()
    };
    let r = reconstruct(&s.model, &s.data, &s.params, &opts).unwrap();
    assert!(r.solution.u.sub(&s.truth.u).max_abs() < 1e-10);
    assert!(r.solution.m.sub(&s.truth.m).max_abs() < 1e-10);
}

/// Exact data: the error is small in the middle of the time interval and
/// grows toward `t = 0` and `t = T`, where the weight carries no information.
#[test]
fn reconstruction_from_zero_is_accurate_inside_the_window() {
    let s = setup(DomainSpec::one_d(0.5, 1.0, 1.0, 1.0), 9, &[], 9, 5.0);
    let opts = ReconOptions { beta: Some(0.0), max_iters: 200, ..ReconOptions::default() };
    let r = reconstruct(&s.model, &s.data, &s.params, &opts).unwrap();
    assert_eq!(r.method, Method::GaussNewton);
    for w in r.objective_history.windows(2) {
        assert!(w[1] <= w[0]);
    }
    assert!(*r.objective_history.last().unwrap() < 1e-10 * r.objective_history[0]);
    let window = crate::domain::shrink_cylinder(&s.grid, 0.25).unwrap();
    let err_at = |k: usize| {
        (0..s.grid.nx1).fold(0.0f64, |a, i| {
            a.max((r.solution.u.at(i, 0, k) - s.truth.u.at(i, 0, k)).abs())
                .max((r.solution.m.at(i, 0, k) - s.truth.m.at(i, 0, k)).abs())
        })
    };
    let inside = (window.k_lo..=window.k_hi).map(err_at).fold(0.0, f64::max);
    assert!(inside < 5e-3, "{inside}");
    assert!(err_at(4) < err_at(0) && err_at(4) < err_at(8));
}

#[test]
fn lbfgs_history_is_non_increasing() {
    let s = small_2d();
    let opts = ReconOptions { method: Method::Lbfgs, max_iters: 40, ..ReconOptions::default() };
    let r = reconstruct(&s.model, &s.data, &s.params, &opts).unwrap();
    assert_eq!(r.method, Method::Lbfgs);
    assert!(r.objective_history.len() > 1);
    for w in r.objective_history.windows(2) {
        assert!(w[1] <= w[0]);
    }
    assert!(r.objective_history.last().unwrap() < &r.objective_history[0]);
}

#[test]
fn projection_clips_to_the_box() {
    let b = AprioriBounds::new(1.0, 1.0, 1.0, 2.0, 3.0);
    let mut x = vec![5.0, -5.0, -1.0, 1.0];
    project(&mut x, &b);
    assert_eq!(x, vec![2.0, -3.0, -1.0, 1.0]);
}

#[test]
fn nonlocal_weight_constant_respects_the_bound() {
    let s = small_2d();
    for m in [s.truth.m.clone(), smooth_random_field(&s.grid, 11, 1.0)] {
        let c = nonlocal_weight_constant(&m, &s.params).unwrap();
        assert!(c.constant > 0.0);
        assert!(c.constant <= c.bound * (1.0 + 1e-12), "{c:?}");
    }
    let one_d = small_1d();
    assert!(nonlocal_weight_constant(&one_d.truth.m, &one_d.params).is_err());
}

