//! Numerical laboratory for the second-order mean field games system with
//! lateral Cauchy data.
//!
//! The crate provides the space-time grid, discrete norms and traces, a
//! forward solver for the coupled Bellman / Fokker-Planck system, numerical
//! verification of the two Carleman estimates for `d_t -+ alpha Laplace`, and
//! a Carleman-weighted least-squares reconstruction of `(u, m)` from lateral
//! Dirichlet and Neumann data.
//!
//! Numerical code is generic over [`Scalar`] (`f32` / `f64`); the `*64`
//! aliases below fix the scalar to `f64`.

pub mod banded;
pub mod carleman;
pub mod cauchy;
pub mod config;
pub mod cwf;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod expr;
pub mod field;
pub mod io;
pub mod mfg;
pub mod norms;
pub mod reconstruct;
pub mod scalar;
pub mod scenario;
pub mod stencil;

/// Version of this crate.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use cauchy::{extract_traces, norm_lateral, perturb_to_delta, CauchyData, Trace};
pub use cwf::{c_squared, cwf_value, lambda_of_delta, rho, CarlemanParams};
pub use domain::{build_grid, shrink_cylinder, DomainSpec, FaceId, Grid, TimeWindow};
pub use error::{Error, Result};
pub use field::ScalarField;
pub use norms::norm_h21_cylinder;
pub use scalar::Scalar;

pub type DomainSpec64 = DomainSpec<f64>;
pub type Grid64 = Grid<f64>;
pub type ScalarField64 = ScalarField<f64>;
pub type CauchyData64 = CauchyData<f64>;
pub type CarlemanParams64 = CarlemanParams<f64>;
pub type MfgSolution64 = mfg::MfgSolution<f64>;
pub type Model64 = mfg::Model<f64>;

pub type Grid32 = Grid<f32>;
pub type ScalarField32 = ScalarField<f32>;
