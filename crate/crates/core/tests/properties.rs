use std::sync::Arc;

use proptest::prelude::*;

use mfg_lateral::cauchy::{extract_traces, norm_lateral, perturb_to_delta, Trace};
use mfg_lateral::cwf::{c_squared, cwf_value, lambda_of_delta_unchecked, CarlemanParams};
use mfg_lateral::domain::{build_grid, shrink_cylinder, DomainSpec, Grid};
use mfg_lateral::field::ScalarField;
use mfg_lateral::norms::norm_h21_cylinder;

fn grid_1d() -> Arc<Grid<f64>> {
    Arc::new(build_grid(DomainSpec::one_d(0.5, 1.0, 1.0, 0.5), 7, &[], 6).unwrap())
}

fn grid_2d() -> Arc<Grid<f64>> {
    Arc::new(build_grid(DomainSpec::two_d(0.5, 1.0, 0.25, 1.0, 0.5), 5, &[5], 4).unwrap())
}

fn field(grid: &Arc<Grid<f64>>, v: &[f64]) -> ScalarField<f64> {
    ScalarField::from_values(grid.clone(), v[..grid.n_nodes()].to_vec()).unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 100)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn cylinder_norm_is_homogeneous_and_subadditive(f in values(), g in values(), c in -5.0f64..5.0, two_d in any::<bool>()) {
        let grid = if two_d { grid_2d() } else { grid_1d() };
        let w = shrink_cylinder(&grid, 0.2).unwrap();
        let (f, g) = (field(&grid, &f), field(&grid, &g));
        let nf = norm_h21_cylinder(&f, w).unwrap();
        prop_assert!(close(norm_h21_cylinder(&f.scale(c), w).unwrap(), c.abs() * nf, 1e-12));
        let sum = norm_h21_cylinder(&f.add(&g), w).unwrap();
        prop_assert!(sum <= (nf + norm_h21_cylinder(&g, w).unwrap()) * (1.0 + 1e-12));
    }

    #[test]
    fn lateral_norms_are_homogeneous_and_subadditive(f in values(), g in values(), c in -5.0f64..5.0, two_d in any::<bool>()) {
        let grid = if two_d { grid_2d() } else { grid_1d() };
        let (f, g) = (field(&grid, &f), field(&grid, &g));
        let df = extract_traces(&f, &g).unwrap();
        let dg = extract_traces(&g, &f.scale(0.5)).unwrap();
        let dsum = df.combine(&dg, |a, b| a + b).unwrap();
        let dscaled = df.combine(&df, |a, _| c * a).unwrap();
        for which in Trace::ALL {
            let (a, b) = (norm_lateral(&df, which).unwrap(), norm_lateral(&dg, which).unwrap());
            prop_assert!(close(norm_lateral(&dscaled, which).unwrap(), c.abs() * a, 1e-12));
            prop_assert!(norm_lateral(&dsum, which).unwrap() <= (a + b) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn perturbation_norms_equal_delta(seed in 0u64..10_000, log_delta in -6.0f64..-1.0, two_d in any::<bool>()) {
        let grid = if two_d {
            Arc::new(build_grid(DomainSpec::two_d(0.5, 1.0, 0.25, 1.0, 0.5), 11, &[11], 11).unwrap())
        } else {
            Arc::new(build_grid(DomainSpec::one_d(0.5, 1.0, 1.0, 0.5), 41, &[], 41).unwrap())
        };
        let u = ScalarField::from_fn(grid.clone(), |x: f64, y: f64, t: f64| (x + 2.0 * y + t).sin());
        let m = ScalarField::from_fn(grid.clone(), |x: f64, y: f64, t: f64| 1.0 + 0.3 * (x - y).cos() * (-t).exp());
        let data = extract_traces(&u, &m).unwrap();
        let delta = 10f64.powf(log_delta);
        let noisy = perturb_to_delta(&data, delta, seed).unwrap();
        let diff = noisy.difference(&data).unwrap();
        for which in Trace::ALL {
            let n = norm_lateral(&diff, which).unwrap();
            prop_assert!(close(n, delta, 1e-12), "{which:?}: {n} vs {delta}");
        }
    }

    #[test]
    fn weight_peaks_at_the_outer_face_and_mid_time(lambda in 1.0f64..40.0, x1 in 0.5f64..1.0, t in 0.0f64..1.0) {
        let dom = DomainSpec::one_d(0.5, 1.0, 1.0, 0.5);
        let p = CarlemanParams::for_domain(&dom, lambda, 0.125).unwrap();
        let v = cwf_value(x1, t, &p).unwrap();
        prop_assert!(v > 0.0 && v <= 1.0);
        prop_assert!(v <= cwf_value(1.0, t, &p).unwrap());
        prop_assert!(v <= cwf_value(x1, 0.5, &p).unwrap());
        prop_assert!(close(v, cwf_value(x1, 1.0 - t, &p).unwrap(), 1e-12));
        let raw = p.with_normalize(false);
        let closed = (2.0 * lambda * (x1 * x1 - p.c2 * (t - 0.5) * (t - 0.5))).exp();
        prop_assert!(close(cwf_value(x1, t, &raw).unwrap(), closed, 1e-12));
    }

    #[test]
    fn parameter_rules_hold(eps in 0.01f64..0.49, a in 0.1f64..1.0, gap in 0.1f64..2.0, log_delta in -12.0f64..-0.5) {
        let b = a + gap;
        let c2 = c_squared(eps, 1.0, a, b).unwrap();
        prop_assert!(close(c2 * eps * (1.0 - eps), b * b - a * a, 1e-12));
        let delta = 10f64.powf(log_delta);
        let lambda = lambda_of_delta_unchecked(delta, b);
        prop_assert!(close(delta * delta * (5.0 * lambda * b * b).exp(), delta, 1e-12));
    }

    #[test]
    fn time_reversal_is_an_involution(f in values()) {
        let grid = grid_1d();
        let f = field(&grid, &f);
        prop_assert_eq!(f.time_reversed().time_reversed(), f);
    }
}
