//! The Carleman weight `psi(x1, t) = exp(2 lambda (x1^2 - c^2 (t - T/2)^2))`
//! and the scalar parameter rules tied to it.
//!
//! Weights are evaluated in log space. With `normalize` set, every weight is
//! divided by its maximum `psi(b, T/2) = exp(2 lambda b^2)`; the same factor
//! is applied to both sides of any inequality built from these weights.

use serde::{Deserialize, Serialize};

use crate::domain::{DomainSpec, Grid};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest admissible `|exponent|` before exponentiation.
pub const DEFAULT_EXPONENT_CAP: f64 = 700.0;

/// Parameters of the weight and the quantities derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlemanParams<T> {
    pub lambda: T,
    pub c2: T,
    pub eps: T,
    pub rho: T,
    /// `c^2 T^2 / 4 > b^2`: the endpoint term decays in `lambda`.
    pub endpoint_valid: bool,
    pub a: T,
    pub b: T,
    pub t_end: T,
    pub normalize: bool,
    pub exponent_cap: T,
}

impl<T: Scalar> CarlemanParams<T> {
    /// Parameters for a domain with `c^2` chosen from `eps`.
    pub fn for_domain(domain: &DomainSpec<T>, lambda: T, eps: T) -> Result<Self> {
        let c2 = c_squared(eps, domain.t_end, domain.a, domain.b)?;
        Self::with_c2(domain, lambda, c2, eps)
    }

    /// Parameters with an explicit `c^2` (eps kept for reporting).
    pub fn with_c2(domain: &DomainSpec<T>, lambda: T, c2: T, eps: T) -> Result<Self> {
        if !(lambda >= T::one()) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 1, got {lambda}")));
        }
        Self::unchecked(domain, lambda, c2, eps)
    }

    /// Same as [`CarlemanParams::with_c2`] without the `lambda >= 1` check
    /// (used for the degenerate `lambda = 0` weight in tests).
    pub fn unchecked(domain: &DomainSpec<T>, lambda: T, c2: T, eps: T) -> Result<Self> {
        if !(c2 > T::zero()) {
            return Err(Error::InvalidParameter(format!("c^2 must be positive, got {c2}")));
        }
        let rho = rho(domain.a, domain.b)?;
        let q = T::lit(4.0);
        let endpoint_valid = c2 * domain.t_end * domain.t_end / q - domain.b * domain.b > T::zero();
        Ok(Self {
            lambda,
            c2,
            eps,
            rho,
            endpoint_valid,
            a: domain.a,
            b: domain.b,
            t_end: domain.t_end,
            normalize: true,
            exponent_cap: T::lit(DEFAULT_EXPONENT_CAP),
        })
    }

    pub fn with_lambda(&self, lambda: T) -> Self {
        Self { lambda, ..self.clone() }
    }

    pub fn with_normalize(&self, normalize: bool) -> Self {
        Self { normalize, ..self.clone() }
    }

    /// Exponent `2 lambda (x1^2 - c^2 (t - T/2)^2)`, shifted by `-2 lambda b^2`
    /// when normalized.
    pub fn log_weight(&self, x1: T, t: T) -> T {
        let two = T::lit(2.0);
        let s = t - self.t_end / two;
        let mut e = two * self.lambda * (x1 * x1 - self.c2 * s * s);
        if self.normalize {
            e -= two * self.lambda * self.b * self.b;
        }
        e
    }

    /// Log of the weight normalization factor (`2 lambda b^2` or 0).
    pub fn log_normalization(&self) -> T {
        if self.normalize {
            T::lit(2.0) * self.lambda * self.b * self.b
        } else {
            T::zero()
        }
    }

    /// Guarded `exp`: errors when `|exponent|` exceeds the cap.
    pub fn guarded_exp(&self, exponent: T) -> Result<T> {
        if exponent.abs() > self.exponent_cap || !exponent.is_finite() {
            return Err(Error::ExponentOverflow {
                exponent: exponent.to_f64_lossy(),
                cap: self.exponent_cap.to_f64_lossy(),
            });
        }
        Ok(exponent.exp())
    }

    /// Factor `exp(3 lambda b^2)` of the lateral boundary term (normalized
    /// consistently with the weight).
    pub fn boundary_factor(&self) -> Result<T> {
        let e = T::lit(3.0) * self.lambda * self.b * self.b - self.log_normalization();
        self.guarded_exp(e)
    }

    /// Factor `exp(-2 lambda (c^2 T^2 / 4 - b^2))` of the endpoint term
    /// (normalized consistently with the weight).
    pub fn endpoint_factor(&self) -> Result<T> {
        let two = T::lit(2.0);
        let e = -two * self.lambda * (self.c2 * self.t_end * self.t_end / T::lit(4.0) - self.b * self.b)
            - self.log_normalization();
        self.guarded_exp(e)
    }

    /// Weight at every grid node, time-major like the fields.
    pub fn weight_on_grid(&self, grid: &Grid<T>) -> Result<Vec<T>> {
        let mut w = Vec::with_capacity(grid.n_nodes());
        for k in 0..grid.nt {
            let t = grid.t(k);
            for _i2 in 0..grid.nx2() {
                for i1 in 0..grid.nx1 {
                    w.push(self.guarded_exp(self.log_weight(grid.x1(i1), t))?);
                }
            }
        }
        Ok(w)
    }
}

/// `psi_lambda(x1, t)` (respecting `params.normalize`).
pub fn cwf_value<T: Scalar>(x1: T, t: T, params: &CarlemanParams<T>) -> Result<T> {
    params.guarded_exp(params.log_weight(x1, t))
}

/// `c^2 = (b^2 - a^2) / (eps (T - eps))`.
pub fn c_squared<T: Scalar>(eps: T, t_end: T, a: T, b: T) -> Result<T> {
    let half = t_end / T::lit(2.0);
    if !(eps > T::zero() && eps < half) {
        return Err(Error::EpsilonOutOfRange { eps: eps.to_f64_lossy(), half: half.to_f64_lossy() });
    }
    if !(a > T::zero() && b > a) {
        return Err(Error::InvalidParameter(format!("need 0 < a < b, got a = {a}, b = {b}")));
    }
    let c2 = (b * b - a * a) / (eps * (t_end - eps));
    if !c2.is_finite() {
        return Err(Error::InvalidParameter(format!("c^2 diverges for eps = {eps}")));
    }
    Ok(c2)
}

/// Hoelder exponent `rho = (b^2 - a^2) / (10 b^2)`.
pub fn rho<T: Scalar>(a: T, b: T) -> Result<T> {
    if !(a > T::zero() && b > a) {
        return Err(Error::InvalidParameter(format!("need 0 < a < b, got a = {a}, b = {b}")));
    }
    Ok((b * b - a * a) / (T::lit(10.0) * b * b))
}

/// `lambda(delta) = ln(1 / delta) / (5 b^2)` without the admissibility gate.
pub fn lambda_of_delta_unchecked<T: Scalar>(delta: T, b: T) -> T {
    -delta.ln() / (T::lit(5.0) * b * b)
}

/// Largest noise level `delta0 = exp(-5 b^2 lambda1)` with `lambda(delta0) >= lambda1`.
pub fn delta0<T: Scalar>(b: T, lambda1: T) -> T {
    (-T::lit(5.0) * b * b * lambda1).exp()
}

/// `lambda(delta)` for `delta` in `(0, delta0]`, so that `delta^2 exp(5 lambda b^2) = delta`.
pub fn lambda_of_delta<T: Scalar>(delta: T, b: T, lambda1: T) -> Result<T> {
    if !(delta > T::zero() && delta < T::one()) {
        return Err(Error::InvalidParameter(format!("noise level must lie in (0, 1), got {delta}")));
    }
    let lambda = lambda_of_delta_unchecked(delta, b);
    if lambda < lambda1 * (T::one() - T::lit(1e-12)) {
        return Err(Error::DeltaTooLarge {
            delta: delta.to_f64_lossy(),
            delta0: delta0(b, lambda1).to_f64_lossy(),
            lambda1: lambda1.to_f64_lossy(),
        });
    }
    Ok(lambda)
}

/// `exp(-lambda (b^2 - a^2) / 2)`, the factor multiplying the a-priori term
/// once `lambda = lambda(delta)`; equals `delta^rho`.
pub fn apriori_decay<T: Scalar>(lambda: T, a: T, b: T) -> T {
    (-lambda * (b * b - a * a) / T::lit(2.0)).exp()
}
