//! `mfglab`: experiment driver for the `mfg-lateral` core.
//!
//! Every subcommand resolves a flat config (file, then `--set` and the
//! dedicated flags), runs, and writes its outputs plus `manifest.json` into
//! the output directory. Relative output paths are taken below
//! `$MFGLAB_OUTPUT_ROOT` when it is set.
//!
//! Exit codes: 0 pass, 1 experiment failure, 2 usage error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mfg_lateral::carleman::Operator;
use mfg_lateral::config::{Config, ExperimentConfig, KEYS};
use mfg_lateral::experiments::{
    forward_order_study, prepare, run_carleman, run_forward, run_reconstruct, run_stability_sweep, run_uniqueness_check,
    CarlemanExperiment, StabilityReport,
};
use mfg_lateral::io::{atomic_write, cauchy_from_csv, cauchy_to_csv, fields_to_csv, fmt_num, from_json, to_json, CauchyBundle};
use mfg_lateral::{CauchyData, Error};

pub const OUTPUT_ROOT_ENV: &str = "MFGLAB_OUTPUT_ROOT";

#[derive(Debug, Parser)]
#[command(name = "mfglab", version, about = "Mean field games with lateral Cauchy data: experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Forward solve: fields, Cauchy data and scenario checks.
    Forward {
        #[command(flatten)]
        common: Common,
        /// Also run the spatial and temporal refinement study.
        #[arg(long)]
        order_study: bool,
    },
    /// Numerical check of the Carleman estimate.
    VerifyCarleman {
        #[command(flatten)]
        common: Common,
        /// `forward` (d_t - alpha Lap) or `backward` (d_t + alpha Lap).
        #[arg(long)]
        operator: Option<String>,
        /// Comma-separated lambda grid.
        #[arg(long)]
        lambdas: Option<String>,
    },
    /// Reconstruction from lateral Cauchy data.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Cauchy data as CSV or JSON bundle; default: scenario traces.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Noise level added to the scenario traces.
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
    },
    /// Noise sweep and Hoelder-rate fit.
    StabilitySweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated noise levels.
        #[arg(long)]
        deltas: Option<String>,
    },
    /// Reconstruction from exact data compared with the discretization floor.
    UniquenessCheck {
        #[command(flatten)]
        common: Common,
        /// Noise injected into the data labelled exact (negative control).
        #[arg(long, default_value_t = 0.0)]
        inject_noise: f64,
    },
    /// Collects the manifests below a directory.
    Report {
        /// Directory to scan.
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lists the config keys.
    Keys,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Shipped scenario (overrides the config).
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Extra `key=value` overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Experiment(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Parse(_) | Error::Expression(_) => Failure::Usage(e.to_string()),
            _ => Failure::Experiment(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Experiment(format!("i/o: {e}"))
    }
}

/// Identity and outputs of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub subcommand: String,
    pub scenario: String,
    pub seed: u64,
    /// SHA-256 of the canonical config text.
    pub config_hash: String,
    pub config: String,
    pub passed: bool,
    pub outputs: Vec<OutputFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Runs the CLI and returns the exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}");
            2
        }
        Err(Failure::Experiment(m)) => {
            eprintln!("experiment failed: {m}");
            1
        }
    }
}

struct Resolved {
    raw: Config,
    cfg: ExperimentConfig,
    out: PathBuf,
}

fn resolve(common: &Common, subcommand: &str, extra: &[(&str, Option<String>)]) -> Result<Resolved, Failure> {
    let mut raw = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", p.display())))?;
            Config::parse(&text)?
        }
        None => Config::default(),
    };
    if let Some(s) = &common.scenario {
        raw.set("scenario", s)?;
    }
    if let Some(s) = common.seed {
        raw.set("seed", &s.to_string())?;
    }
    for kv in &common.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Failure::Usage(format!("`--set {kv}`: expected KEY=VALUE")))?;
        raw.set(k.trim(), v.trim())?;
    }
    for (k, v) in extra {
        if let Some(v) = v {
            raw.set(k, v)?;
        }
    }
    let cfg = raw.resolve()?;
    let default = PathBuf::from("runs").join(subcommand).join(&cfg.scenario.id);
    let out = output_dir(common.out.as_deref().unwrap_or(&default));
    Ok(Resolved { raw, cfg, out })
}

fn output_dir(p: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if p.is_relative() => PathBuf::from(root).join(p),
        _ => p.to_path_buf(),
    }
}

struct Writer {
    dir: PathBuf,
    outputs: Vec<OutputFile>,
}

impl Writer {
    fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), outputs: Vec::new() }
    }

    fn put(&mut self, name: &str, text: &str) -> Result<(), Failure> {
        atomic_write(&self.dir.join(name), text.as_bytes())?;
        self.outputs.push(OutputFile { file: name.into(), sha256: sha256_hex(text.as_bytes()) });
        Ok(())
    }

    fn finish(self, r: &Resolved, subcommand: &str, passed: bool) -> Result<bool, Failure> {
        let config = r.raw.to_string();
        let manifest = Manifest {
            tool: "mfglab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            core_version: mfg_lateral::VERSION.into(),
            subcommand: subcommand.into(),
            scenario: r.cfg.scenario.id.clone(),
            seed: r.cfg.seed,
            config_hash: sha256_hex(config.as_bytes()),
            config,
            passed,
            outputs: self.outputs,
        };
        atomic_write(&self.dir.join("manifest.json"), to_json(&manifest)?.as_bytes())?;
        println!("{subcommand} {}: {} ({})", r.cfg.scenario.id, if passed { "pass" } else { "FAIL" }, self.dir.display());
        Ok(passed)
    }
}

fn dispatch(cmd: Command) -> Result<bool, Failure> {
    match cmd {
        Command::Keys => {
            for (k, d) in KEYS {
                println!("{k:<24} {d}");
            }
            Ok(true)
        }
        Command::Forward { common, order_study } => {
            let r = resolve(&common, "forward", &[])?;
            let (p, report) = run_forward(&r.cfg)?;
            let mut w = Writer::new(&r.out);
            w.put("fields.csv", &fields_to_csv(&p.run.solution.u, &p.run.solution.m)?)?;
            w.put("cauchy.csv", &cauchy_to_csv(&p.data)?)?;
            w.put("cauchy.json", &to_json(&CauchyBundle::from_data(&p.data))?)?;
            w.put("forward.json", &to_json(&report)?)?;
            let mut passed = report.converged && report.box_within && report.coefficients_within;
            if order_study {
                let study = forward_order_study(&r.cfg.scenario)?;
                passed &= study.passed;
                w.put("order_study.json", &to_json(&study)?)?;
            }
            w.finish(&r, "forward", passed)
        }
        Command::VerifyCarleman { common, operator, lambdas } => {
            if let Some(op) = &operator {
                Operator::parse(op).ok_or_else(|| Failure::Usage(format!("unknown operator `{op}`")))?;
            }
            let r = resolve(&common, "verify-carleman", &[("carleman.operator", operator), ("carleman.lambdas", lambdas)])?;
            let exp = run_carleman(&r.cfg)?;
            let mut w = Writer::new(&r.out);
            w.put("carleman.json", &to_json(&exp)?)?;
            w.put("carleman.csv", &carleman_csv(&exp))?;
            w.finish(&r, "verify-carleman", exp.passed)
        }
        Command::Reconstruct { common, data, delta } => {
            let r = resolve(&common, "reconstruct", &[])?;
            if !(0.0..1.0).contains(&delta) {
                return Err(Failure::Usage(format!("--delta must lie in [0, 1), got {delta}")));
            }
            let p = prepare(&r.cfg)?;
            let external = data.as_deref().map(|path| load_data(path, &p.run.grid)).transpose()?;
            let (report, result) = run_reconstruct(&p, external.as_ref(), delta)?;
            let mut w = Writer::new(&r.out);
            w.put("fields.csv", &fields_to_csv(&result.solution.u, &result.solution.m)?)?;
            #[derive(Serialize)]
            struct Full<'a> {
                report: &'a mfg_lateral::experiments::ReconstructReport,
                objective_history: &'a [f64],
            }
            w.put("reconstruct.json", &to_json(&Full { report: &report, objective_history: &result.objective_history })?)?;
            let passed = report.recon.converged;
            w.finish(&r, "reconstruct", passed)
        }
        Command::StabilitySweep { common, deltas } => {
            let r = resolve(&common, "stability-sweep", &[("sweep.deltas", deltas)])?;
            let p = prepare(&r.cfg)?;
            let report = run_stability_sweep(&p)?;
            let mut w = Writer::new(&r.out);
            w.put("stability.json", &to_json(&report)?)?;
            w.put("stability.csv", &stability_csv(&report))?;
            w.finish(&r, "stability-sweep", report.passed)
        }
        Command::UniquenessCheck { common, inject_noise } => {
            let r = resolve(&common, "uniqueness-check", &[])?;
            if !(0.0..1.0).contains(&inject_noise) {
                return Err(Failure::Usage(format!("--inject-noise must lie in [0, 1), got {inject_noise}")));
            }
            let p = prepare(&r.cfg)?;
            let (report, result) = run_uniqueness_check(&p, inject_noise)?;
            let mut w = Writer::new(&r.out);
            w.put("fields.csv", &fields_to_csv(&result.solution.u, &result.solution.m)?)?;
            w.put("uniqueness.json", &to_json(&report)?)?;
            w.finish(&r, "uniqueness-check", report.passed)
        }
        Command::Report { runs, out } => report(&output_dir(&runs), out.as_deref().map(output_dir)),
    }
}

fn load_data(path: &Path, grid: &std::sync::Arc<mfg_lateral::Grid64>) -> Result<CauchyData<f64>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let data = if path.extension().is_some_and(|e| e == "json") {
        from_json::<CauchyBundle>(&text)?.to_data_on(grid.clone())
    } else {
        cauchy_from_csv(&text, grid)
    };
    data.map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

/// `operator,member,label,lambda,lhs,time,hessian,gradient,zeroth,boundary,endpoint,denominator,ratio`
pub fn carleman_csv(exp: &CarlemanExperiment) -> String {
    let mut s = String::from("operator,member,label,lambda,lhs,time,hessian,gradient,zeroth,boundary,endpoint,denominator,ratio\n");
    for rep in [&exp.primary, &exp.reversed] {
        for c in &rep.cells {
            let k = &c.components;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                rep.operator.label(),
                c.member,
                rep.members[c.member],
                fmt_num(c.lambda),
                fmt_num(c.lhs),
                fmt_num(k.time),
                fmt_num(k.hessian),
                fmt_num(k.gradient),
                fmt_num(k.zeroth),
                fmt_num(k.boundary),
                fmt_num(k.endpoint),
                fmt_num(c.denominator),
                opt(c.ratio)
            );
        }
    }
    s
}

/// `delta,seed,lambda,lambda_of_delta,error,error_vs_exact,delta_pow_rho,delta_pow_2rho,apriori_decay,iterations,converged,misfit_g0,misfit_g1,misfit_p0,misfit_p1`
pub fn stability_csv(r: &StabilityReport) -> String {
    let mut s = String::from(
        "delta,seed,lambda,lambda_of_delta,error,error_vs_exact,delta_pow_rho,delta_pow_2rho,apriori_decay,iterations,converged,misfit_g0,misfit_g1,misfit_p0,misfit_p1\n",
    );
    for run in &r.runs {
        let m = run.recon.boundary_misfit;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt_num(run.delta),
            run.seed,
            fmt_num(run.lambda.lambda),
            opt(run.lambda.lambda_of_delta),
            fmt_num(run.error),
            fmt_num(run.error_vs_exact),
            fmt_num(run.delta_pow_rho),
            fmt_num(run.delta_pow_2rho),
            fmt_num(run.apriori_decay),
            run.recon.iterations,
            run.recon.converged,
            fmt_num(m[0]),
            fmt_num(m[1]),
            fmt_num(m[2]),
            fmt_num(m[3])
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dir: String,
    pub subcommand: String,
    pub scenario: String,
    pub config_hash: String,
    pub passed: bool,
}

fn collect_manifests(dir: &Path, base: &Path, rows: &mut Vec<SummaryRow>) -> Result<(), Failure> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_manifests(&p, base, rows)?;
        } else if p.file_name().is_some_and(|n| n == "manifest.json") {
            let m: Manifest = from_json(&fs::read_to_string(&p)?)?;
            let rel = dir.strip_prefix(base).unwrap_or(dir);
            rows.push(SummaryRow {
                dir: rel.display().to_string(),
                subcommand: m.subcommand,
                scenario: m.scenario,
                config_hash: m.config_hash,
                passed: m.passed,
            });
        }
    }
    Ok(())
}

fn report(runs: &Path, out: Option<PathBuf>) -> Result<bool, Failure> {
    if !runs.is_dir() {
        return Err(Failure::Usage(format!("{} is not a directory", runs.display())));
    }
    let mut rows = Vec::new();
    collect_manifests(runs, runs, &mut rows)?;
    let out = out.unwrap_or_else(|| runs.to_path_buf());
    let mut csv = String::from("dir,subcommand,scenario,config_hash,passed\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{},{}", r.dir, r.subcommand, r.scenario, r.config_hash, r.passed);
        println!("{:<40} {:<18} {:<4} {}", r.dir, r.subcommand, r.scenario, if r.passed { "pass" } else { "FAIL" });
    }
    atomic_write(&out.join("summary.csv"), csv.as_bytes())?;
    atomic_write(&out.join("summary.json"), to_json(&rows)?.as_bytes())?;
    Ok(!rows.is_empty() && rows.iter().all(|r| r.passed))
}
