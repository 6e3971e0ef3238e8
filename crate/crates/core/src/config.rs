//! Flat `key = value` experiment configuration.
//!
//! One entry per line, `#` starts a comment, keys are dotted. A config starts
//! from a shipped scenario (`scenario = s1`) and overrides individual
//! values. Unknown keys are rejected. See [`KEYS`] for the documented set.

use std::collections::BTreeMap;
use std::fmt;

use crate::carleman::Operator;
use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::reconstruct::{AprioriBounds, Method};
use crate::scenario::Scenario;

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("scenario", "shipped scenario to start from: s1, s2 or s3"),
    ("seed", "master seed for noise and random starts"),
    ("domain.a", "inner x1 bound a > 0"),
    ("domain.b", "outer x1 bound b > a"),
    ("domain.a2", "transverse half-width (n = 2 only)"),
    ("domain.t_end", "time horizon T"),
    ("domain.alpha", "diffusion coefficient alpha"),
    ("grid.nx1", "nodes along x1"),
    ("grid.nx2", "nodes along x2 (n = 2 only)"),
    ("grid.nt", "nodes along t"),
    ("interaction.p", "P(x1, x2, t, z1, z2)"),
    ("interaction.g1", "kernel G1(x1, x2, y2)"),
    ("interaction.k", "coefficient k(x1, x2)"),
    ("exact.u", "manufactured value function u*(x1, x2, t)"),
    ("exact.m", "manufactured density m*(x1, x2, t)"),
    ("bounds.r1", "a-priori bound on |G1|"),
    ("bounds.r2", "a-priori bound on |P_z1|, |P_z2|"),
    ("bounds.r3", "a-priori bound on the C1 norm of k"),
    ("bounds.r4", "a-priori bound on |u|, |grad u|, |Lap u|"),
    ("bounds.r5", "a-priori bound on |m|, |grad m|"),
    ("picard.theta", "Picard damping in [0, 1]"),
    ("picard.tol", "Picard update tolerance"),
    ("picard.max_iters", "Picard iteration cap"),
    ("carleman.lambda", "weight parameter for reconstruction, or `auto` for lambda(delta)"),
    ("carleman.eps", "shrinking epsilon of Q_{T,eps} and of c^2"),
    ("carleman.normalize", "divide weighted integrals by max psi"),
    ("carleman.lambda1", "lower clip of lambda(delta)"),
    ("carleman.lambda_max", "upper clip of lambda(delta)"),
    ("carleman.lambdas", "lambda grid of the estimate verification"),
    ("carleman.operator", "forward (d_t - alpha Lap) or backward (d_t + alpha Lap)"),
    ("carleman.family_random", "number of random members in the test family"),
    ("carleman.margin", "relative width of the zero margin of test functions"),
    ("recon.gamma", "boundary penalty, or `auto` for 1e4 / cell volume"),
    ("recon.beta", "regularization weight, or `auto` for beta_rel times the residual part of J at the start"),
    ("recon.beta_rel", "relative regularization weight"),
    ("recon.max_iters", "Gauss-Newton iteration cap (L-BFGS: 50 times this)"),
    ("recon.grad_tol", "relative gradient tolerance"),
    ("recon.method", "auto, gauss-newton or lbfgs"),
    ("recon.init", "zero, truth or random"),
    ("recon.multistart", "number of extra seeded random starts"),
    ("sweep.deltas", "noise levels of the stability sweep"),
    ("sweep.seeds", "noise seeds per delta"),
    ("sweep.slope_tolerance", "allowed shortfall of the fitted slope below rho"),
    ("sweep.floor_factor", "fit only errors above this multiple of the floor"),
    ("sweep.monotone_factor", "allowed growth of the error as delta decreases"),
];

/// Raw entries in key order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected `key = value`, got `{raw}`", lineno + 1)));
            };
            let (k, v) = (k.trim(), v.trim());
            if cfg.entries.contains_key(k) {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", lineno + 1)));
            }
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    fn parsed<V: std::str::FromStr>(&self, key: &str) -> Result<Option<V>> {
        self.get(key)
            .map(|v| v.parse::<V>().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`"))))
            .transpose()
    }

    fn list<V: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<V>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<V>().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{s}`"))))
                    .collect()
            })
            .transpose()
    }

    fn auto_or<V: std::str::FromStr>(&self, key: &str) -> Result<Option<V>> {
        match self.get(key) {
            Some("auto") | None => Ok(None),
            Some(_) => self.parsed(key),
        }
    }

    /// Resolves the entries on top of the scenario defaults.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let id = self.get("scenario").unwrap_or("s1");
        let mut s = Scenario::builtin(id).ok_or_else(|| Error::Config(format!("unknown scenario `{id}`")))?;
        let d = &mut s.domain;
        set_f64(self, "domain.a", &mut d.a)?;
        set_f64(self, "domain.b", &mut d.b)?;
        set_f64(self, "domain.t_end", &mut d.t_end)?;
        set_f64(self, "domain.alpha", &mut d.alpha)?;
        if let Some(w) = self.parsed::<f64>("domain.a2")? {
            if d.n != 2 {
                return Err(Error::Config("`domain.a2` needs a two-dimensional scenario".into()));
            }
            d.half_widths = vec![w];
        }
        if let Some(n) = self.parsed("grid.nx1")? {
            s.nx1 = n;
        }
        if let Some(n) = self.parsed::<usize>("grid.nx2")? {
            if s.domain.n != 2 {
                return Err(Error::Config("`grid.nx2` needs a two-dimensional scenario".into()));
            }
            s.nxi = vec![n];
        }
        if let Some(n) = self.parsed("grid.nt")? {
            s.nt = n;
        }
        for (key, slot) in [
            ("interaction.p", &mut s.p),
            ("interaction.g1", &mut s.g1),
            ("interaction.k", &mut s.k),
            ("exact.u", &mut s.u_exact),
            ("exact.m", &mut s.m_exact),
        ] {
            if let Some(v) = self.get(key) {
                *slot = v.to_string();
            }
        }
        let b = &mut s.bounds;
        for (key, slot) in [("bounds.r1", &mut b.r1), ("bounds.r2", &mut b.r2), ("bounds.r3", &mut b.r3), ("bounds.r4", &mut b.r4), ("bounds.r5", &mut b.r5)] {
            set_f64(self, key, slot)?;
        }
        set_f64(self, "picard.theta", &mut s.picard.theta)?;
        set_f64(self, "picard.tol", &mut s.picard.tol)?;
        if let Some(n) = self.parsed("picard.max_iters")? {
            s.picard.max_iters = n;
        }
        s.domain.validate()?;
        s.bounds.validate()?;
        s.interaction()?;
        s.manufactured()?;

        let mut c = CarlemanSettings::default_for(&s.domain);
        c.lambda = self.auto_or("carleman.lambda")?;
        set_f64(self, "carleman.eps", &mut c.eps)?;
        if let Some(v) = self.parsed("carleman.normalize")? {
            c.normalize = v;
        }
        set_f64(self, "carleman.lambda1", &mut c.lambda1)?;
        set_f64(self, "carleman.lambda_max", &mut c.lambda_max)?;
        if let Some(v) = self.list("carleman.lambdas")? {
            c.lambdas = v;
        }
        if let Some(v) = self.get("carleman.operator") {
            c.operator = Operator::parse(v).ok_or_else(|| Error::Config(format!("`carleman.operator`: unknown operator `{v}`")))?;
        }
        if let Some(v) = self.parsed("carleman.family_random")? {
            c.family_random = v;
        }
        set_f64(self, "carleman.margin", &mut c.margin)?;

        let mut r = ReconSettings::default();
        r.gamma = self.auto_or("recon.gamma")?;
        r.beta = self.auto_or("recon.beta")?;
        set_f64(self, "recon.beta_rel", &mut r.beta_rel)?;
        if let Some(v) = self.parsed("recon.max_iters")? {
            r.max_iters = v;
        }
        set_f64(self, "recon.grad_tol", &mut r.grad_tol)?;
        if let Some(v) = self.get("recon.method") {
            r.method = match v {
                "auto" => Method::Auto,
                "gauss-newton" => Method::GaussNewton,
                "lbfgs" => Method::Lbfgs,
                _ => return Err(Error::Config(format!("`recon.method`: unknown method `{v}`"))),
            };
        }
        if let Some(v) = self.get("recon.init") {
            r.init = match v {
                "zero" => InitKind::Zero,
                "truth" => InitKind::Truth,
                "random" => InitKind::Random,
                _ => return Err(Error::Config(format!("`recon.init`: unknown initial guess `{v}`"))),
            };
        }
        if let Some(v) = self.parsed("recon.multistart")? {
            r.multistart = v;
        }

        let mut w = SweepSettings::default();
        if let Some(v) = self.list("sweep.deltas")? {
            w.deltas = v;
        }
        if let Some(v) = self.list("sweep.seeds")? {
            w.seeds = v;
        }
        set_f64(self, "sweep.slope_tolerance", &mut w.slope_tolerance)?;
        set_f64(self, "sweep.floor_factor", &mut w.floor_factor)?;
        set_f64(self, "sweep.monotone_factor", &mut w.monotone_factor)?;

        let cfg = ExperimentConfig { scenario: s, seed: self.parsed("seed")?.unwrap_or(1), carleman: c, recon: r, sweep: w };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Canonical text: sorted `key = value` lines. Hashing this text identifies
/// a configuration independently of comments and ordering.
impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

fn set_f64(cfg: &Config, key: &str, slot: &mut f64) -> Result<()> {
    if let Some(v) = cfg.parsed(key)? {
        *slot = v;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarlemanSettings {
    /// Fixed reconstruction lambda; `None` uses the clipped `lambda(delta)`.
    pub lambda: Option<f64>,
    pub eps: f64,
    pub normalize: bool,
    pub lambda1: f64,
    pub lambda_max: f64,
    pub lambdas: Vec<f64>,
    pub operator: Operator,
    pub family_random: usize,
    pub margin: f64,
}

impl CarlemanSettings {
    pub fn default_for(domain: &DomainSpec<f64>) -> Self {
        Self {
            lambda: None,
            eps: domain.t_end / 8.0,
            normalize: true,
            lambda1: 2.0,
            lambda_max: 40.0,
            lambdas: vec![5.0, 10.0, 20.0, 40.0],
            operator: Operator::Forward,
            family_random: 12,
            margin: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Zero,
    Truth,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconSettings {
    pub gamma: Option<f64>,
    pub beta: Option<f64>,
    pub beta_rel: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub method: Method,
    pub init: InitKind,
    pub multistart: usize,
}

impl Default for ReconSettings {
    fn default() -> Self {
        let d = crate::reconstruct::ReconOptions::<f64>::default();
        Self {
            gamma: d.gamma,
            beta: d.beta,
            beta_rel: d.beta_rel,
            max_iters: d.max_iters,
            grad_tol: d.grad_tol,
            method: d.method,
            init: InitKind::Zero,
            multistart: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub deltas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub slope_tolerance: f64,
    pub floor_factor: f64,
    pub monotone_factor: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self { deltas: vec![1e-2, 1e-3, 1e-4], seeds: vec![1], slope_tolerance: 0.02, floor_factor: 5.0, monotone_factor: 1.5 }
    }
}

/// A fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub carleman: CarlemanSettings,
    pub recon: ReconSettings,
    pub sweep: SweepSettings,
}

impl ExperimentConfig {
    pub fn for_scenario(id: &str) -> Result<Self> {
        let mut c = Config::default();
        c.set("scenario", id)?;
        c.resolve()
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.carleman;
        if !(c.eps > 0.0 && c.eps < self.scenario.domain.t_end / 2.0) {
            return Err(Error::Config(format!("`carleman.eps` = {} outside (0, T/2)", c.eps)));
        }
        if !(c.lambda1 >= 1.0 && c.lambda_max >= c.lambda1) {
            return Err(Error::Config("need 1 <= carleman.lambda1 <= carleman.lambda_max".into()));
        }
        if c.lambdas.is_empty() || c.lambdas.iter().any(|l| !(*l >= 1.0)) {
            return Err(Error::Config("`carleman.lambdas` must be a nonempty list of values >= 1".into()));
        }
        if !(c.margin > 0.0 && c.margin < 0.5) {
            return Err(Error::Config("`carleman.margin` must lie in (0, 1/2)".into()));
        }
        if let Some(l) = c.lambda {
            if !(l >= 1.0) {
                return Err(Error::Config("`carleman.lambda` must be >= 1".into()));
            }
        }
        let w = &self.sweep;
        if w.deltas.iter().any(|d| !(*d >= 0.0 && *d < 1.0)) {
            return Err(Error::Config("`sweep.deltas` must lie in [0, 1)".into()));
        }
        if w.seeds.is_empty() {
            return Err(Error::Config("`sweep.seeds` must not be empty".into()));
        }
        Ok(())
    }

    pub fn bounds(&self) -> AprioriBounds<f64> {
        self.scenario.bounds
    }
}
