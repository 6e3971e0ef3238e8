//! Acceptance criteria, one line each on stderr.
//!
//! Run with `cargo test --release -p mfg-lateral-cli --test acceptance`.

mod common;

use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use mfg_lateral::cauchy::{extract_traces, norm_lateral, perturb_to_delta, Trace};
use mfg_lateral::config::{Config, ExperimentConfig};
use mfg_lateral::cwf::{apriori_decay, c_squared, cwf_value, lambda_of_delta, rho, CarlemanParams};
use mfg_lateral::experiments::{forward_order_study, prepare, run_carleman, run_stability_sweep, Prepared};
use mfg_lateral::norms::norm_h21_cylinder;
use mfg_lateral::reconstruct::{assemble_objective, default_gamma, objective_gradient, smooth_random_field, ObjectiveWeights};
use mfg_lateral::ScalarField;

use common::{check_golden, mfglab, same_files, with_grid, GOLDEN_RUNS};

type Outcome = Result<String, String>;

fn config(scenario: &str) -> ExperimentConfig {
    let mut raw = Config::default();
    raw.set("scenario", scenario).unwrap();
    raw.resolve().unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cwf_extremes() -> Outcome {
    let p = prepare(&config("s1")).map_err(|e| e.to_string())?;
    let grid = &p.run.grid;
    let d = &grid.domain;
    // closed cylinder; eps = T/8 is a grid level
    let eps = p.config.carleman.eps;
    let (a, b, t_end) = (d.a, d.b, d.t_end);
    let c2 = (b * b - a * a) / (eps * (t_end - eps));
    let mut worst = 0.0f64;
    for lambda in [1.0, 5.0, 20.0] {
        let params = CarlemanParams::for_domain(d, lambda, eps).unwrap().with_normalize(false);
        let mut max = f64::MIN;
        let mut min_window = f64::MAX;
        for k in 0..grid.nt {
            let t = grid.t(k);
            let mut row_max = f64::MIN;
            for i in 0..grid.nx1 {
                let v = cwf_value(grid.x1(i), t, &params).unwrap();
                row_max = row_max.max(v);
                max = max.max(v);
                if t >= eps - 1e-12 && t <= t_end - eps + 1e-12 {
                    min_window = min_window.min(v);
                }
            }
            let s = t - t_end / 2.0;
            worst = worst.max(rel(row_max, (2.0 * lambda * (b * b - c2 * s * s)).exp()));
        }
        let s = t_end / 2.0 - eps;
        worst = worst.max(rel(max, (2.0 * lambda * b * b).exp()));
        worst = worst.max(rel(min_window, (2.0 * lambda * (a * a - c2 * s * s)).exp()));
    }
    ensure(worst <= 1e-12, format!("max relative error {worst:.2e} (limit 1e-12)"))
}

fn parameter_rules() -> Outcome {
    let a = 0.5;
    let mut worst = 0.0f64;
    for b in [1.0f64, 2.0] {
        for delta in [1e-2f64, 1e-4, 1e-8] {
            let lambda = lambda_of_delta(delta, b, 0.1).map_err(|e| e.to_string())?;
            worst = worst.max(rel(delta * delta * (5.0 * lambda * b * b).exp(), delta));
            let r = rho(a, b).unwrap();
            worst = worst.max(rel(apriori_decay(lambda, a, b), delta.powf(r)));
            let eps = 0.125;
            worst = worst.max(rel(c_squared(eps, 1.0, a, b).unwrap() * eps * (1.0 - eps), b * b - a * a));
        }
    }
    ensure(worst <= 1e-12, format!("max relative error {worst:.2e} (limit 1e-12)"))
}

fn forward_order() -> Outcome {
    let r = forward_order_study(&config("s2").scenario).map_err(|e| e.to_string())?;
    let detail = format!(
        "space orders {:.3}/{:.3}/{:.3} (>= {}), time orders {:.3}/{:.3}/{:.3} (>= {}) for bellman/fp/picard",
        r.space.orders[0],
        r.space.orders[1],
        r.space.orders[2],
        r.space_threshold,
        r.time.orders[0],
        r.time.orders[1],
        r.time.orders[2],
        r.time_threshold
    );
    let ok = r.space.orders.iter().all(|&o| o >= 1.9) && r.time.orders.iter().all(|&o| o >= 0.9);
    ensure(ok && r.passed, detail)
}

fn carleman() -> Outcome {
    let mut cfg = config("s1");
    cfg.carleman.lambdas = vec![5.0, 10.0, 20.0, 40.0];
    let e = run_carleman(&cfg).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut ok = e.reversal_discrepancy <= 1e-10;
    for c in &e.checks {
        ok &= c.members >= 20 && c.endpoint_valid && c.positive_from_lambda0;
        ok &= c.min_ratio_spread.is_some_and(|s| s < 10.0);
        parts.push(format!(
            "{}: {} members, lambda0 {:?}, spread {:.2}",
            c.operator.label(),
            c.members,
            c.lambda0_estimate,
            c.min_ratio_spread.unwrap_or(f64::NAN)
        ));
    }
    ensure(ok && e.passed, format!("{}; reversal discrepancy {:.1e}", parts.join("; "), e.reversal_discrepancy))
}

fn gradient_check(p: &Prepared, seed: u64) -> Result<f64, String> {
    let grid = &p.run.grid;
    let params = p.params(p.config.carleman.lambda1).map_err(|e| e.to_string())?;
    let weights = ObjectiveWeights { gamma: default_gamma(grid), beta: 1e-6 };
    let s = &p.run.solution;
    let u = s.u.add(&smooth_random_field(grid, seed, 0.2));
    let m = s.m.add(&smooth_random_field(grid, seed + 1000, 0.2));
    let du = smooth_random_field(grid, seed + 2000, 1.0);
    let dm = smooth_random_field(grid, seed + 3000, 1.0);
    let (gu, gm) = objective_gradient(&p.run.model, &u, &m, &p.data, &params, weights).map_err(|e| e.to_string())?;
    let dot = |a: &ScalarField<f64>, b: &ScalarField<f64>| a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum::<f64>();
    let analytic = dot(&gu, &du) + dot(&gm, &dm);
    let j = |h: f64| {
        assemble_objective(&p.run.model, &u.add(&du.scale(h)), &m.add(&dm.scale(h)), &p.data, &params, weights)
            .unwrap()
            .total
    };
    // Richardson-extrapolated central differences
    let h = 1e-3;
    let d1 = (j(h) - j(-h)) / (2.0 * h);
    let d2 = (j(h / 2.0) - j(-h / 2.0)) / h;
    let fd = (4.0 * d2 - d1) / 3.0;
    Ok(rel(analytic, fd))
}

fn gradient() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for scenario in ["s1", "s2", "s3"] {
        let p = prepare(&config(scenario)).map_err(|e| e.to_string())?;
        let mut worst = 0.0f64;
        for seed in 0..10 {
            worst = worst.max(gradient_check(&p, seed)?);
        }
        ok &= worst <= 1e-6;
        parts.push(format!("{scenario} {worst:.1e}"));
    }
    ensure(ok, format!("max relative error over 10 points: {} (limit 1e-6)", parts.join(", ")))
}

fn uniqueness_and_rate() -> (Outcome, Outcome) {
    let cfg = config("s1");
    let p = match prepare(&cfg) {
        Ok(p) => p,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let r = match run_stability_sweep(&p) {
        Ok(r) => r,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let u = &r.uniqueness;
    let uniq = ensure(
        u.passed && u.error <= 10.0 * u.floor && u.injected_noise == 0.0,
        format!("error {:.2e} vs floor {:.2e} (limit 10x), {} iterations", u.error, u.floor, u.recon.iterations),
    );
    let lambdas: Vec<String> = r.runs.iter().map(|s| format!("{:.3}", s.lambda.lambda)).collect();
    let errors: Vec<String> = r.errors.iter().map(|e| format!("{e:.2e}")).collect();
    let slope = r.fitted_slope.unwrap_or(f64::NAN);
    let ok = r.passed && r.monotone && slope >= r.rho_theoretical - 0.02 && r.delta_grid == [1e-2, 1e-3, 1e-4] && r.eps == 0.125;
    let rate = ensure(
        ok,
        format!(
            "slope {:.4} vs rho {:.4} - 0.02, errors [{}], monotone {}, c2 {:.4}, lambda [{}]",
            slope,
            r.rho_theoretical,
            errors.join(", "),
            r.monotone,
            r.rules.c2,
            lambdas.join(", ")
        ),
    );
    (uniq, rate)
}

fn norm_contracts() -> Outcome {
    let mut worst_delta = 0.0f64;
    for scenario in ["s1", "s2"] {
        let p = prepare(&config(scenario)).map_err(|e| e.to_string())?;
        for delta in [1e-2, 1e-3, 1e-4] {
            for seed in 0..3 {
                let noisy = perturb_to_delta(&p.data, delta, seed).map_err(|e| e.to_string())?;
                let diff = noisy.difference(&p.data).map_err(|e| e.to_string())?;
                for which in Trace::ALL {
                    worst_delta = worst_delta.max(rel(norm_lateral(&diff, which).unwrap(), delta));
                }
            }
        }
    }
    let p = prepare(&config("s1")).map_err(|e| e.to_string())?;
    let grid = &p.run.grid;
    let mut failures = 0;
    for i in 0..100u64 {
        let f = smooth_random_field(grid, 2 * i, 1.0 + i as f64 / 10.0);
        let g = smooth_random_field(grid, 2 * i + 1, 1.0).map(|v| v * v);
        let c = -3.0 + 0.07 * i as f64;
        let w = p.window;
        let (nf, ng) = (norm_h21_cylinder(&f, w).unwrap(), norm_h21_cylinder(&g, w).unwrap());
        let homogeneous = rel(norm_h21_cylinder(&f.scale(c), w).unwrap(), c.abs() * nf) <= 1e-12;
        let triangle = norm_h21_cylinder(&f.add(&g), w).unwrap() <= (nf + ng) * (1.0 + 1e-12);
        let (df, dg) = (extract_traces(&f, &g).unwrap(), extract_traces(&g, &f).unwrap());
        let dsum = df.combine(&dg, |x, y| x + y).unwrap();
        let dscaled = df.combine(&df, |x, _| c * x).unwrap();
        let lateral = Trace::ALL.iter().all(|&t| {
            let (a, b) = (norm_lateral(&df, t).unwrap(), norm_lateral(&dg, t).unwrap());
            rel(norm_lateral(&dscaled, t).unwrap(), c.abs() * a) <= 1e-12
                && norm_lateral(&dsum, t).unwrap() <= (a + b) * (1.0 + 1e-12)
        });
        if !(homogeneous && triangle && lateral) {
            failures += 1;
        }
    }
    ensure(
        worst_delta <= 1e-12 && failures == 0,
        format!("noise norm relative error {worst_delta:.1e} (limit 1e-12), {failures}/100 norm-law failures"),
    )
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (name, args) in GOLDEN_RUNS {
        let args = with_grid(args);
        if mfglab(&args, &b.join(name)) != 0 {
            return Err(format!("{name}: repeat run failed"));
        }
        check_golden(name, &args[..args.len() - common::GRID.len()], &a)?;
        same_files(&a.join(name), &b.join(name)).map_err(|e| format!("{name} repeat: {e}"))?;
    }
    Ok(format!("{} subcommands bit-identical on repeat and against golden files", GOLDEN_RUNS.len()))
}

fn line(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        Err(e.downcast_ref::<String>().cloned().or(e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
    });
    report(n, name, outcome, start)
}

fn report(n: usize, name: &str, outcome: Outcome, start: Instant) -> bool {
    let (tag, detail, ok) = match outcome {
        Ok(d) => ("PASS", d, true),
        Err(d) => ("FAIL", d, false),
    };
    let secs = start.elapsed().as_secs_f64();
    let _ = writeln!(std::io::stderr(), "[{tag}] {n}. {name}: {detail} ({secs:.1}s)");
    ok
}

#[test]
fn acceptance_criteria() {
    let mut ok = true;
    ok &= line(1, "weight function extremes", cwf_extremes);
    ok &= line(2, "parameter rule identities", parameter_rules);
    ok &= line(3, "forward solver order", forward_order);
    ok &= line(4, "Carleman estimate verification", carleman);
    ok &= line(5, "objective gradient", gradient);
    let start = Instant::now();
    let (uniq, rate) = catch_unwind(uniqueness_and_rate).unwrap_or_else(|_| (Err("panic".into()), Err("panic".into())));
    ok &= report(6, "uniqueness from exact data", uniq, start);
    ok &= report(7, "Hoelder rate of the noise sweep", rate, start);
    ok &= line(8, "norm and noise contracts", norm_contracts);
    ok &= line(9, "reproducibility and golden files", reproducibility);
    assert!(ok, "acceptance criteria failed; see the lines above");
}
