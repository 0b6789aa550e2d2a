//! Numerical laboratory for quasi-stationary distributions (QSDs) of
//! one-dimensional diffusions absorbed at the origin.
//!
//! A diffusion on `(0, ell)` is described by its speed measure `m` and scale
//! function `s` ([`model::DiffusionSpec`]). On a truncated grid
//! ([`grid::Grid`]) the crate computes
//!
//! * boundary classification and the infinite-QSD criterion (`model`),
//! * eigenfunctions `psi_lambda` and the spectral bottom `lambda_0` (`eigen`),
//! * the renewal transform `Phi`, hitting-time moment ladders and iteration
//!   diagnostics (`renewal`),
//! * Monte Carlo estimates of hitting times, Yaglom-conditioned laws, tail
//!   ratios and the jump-boundary occupation measure (`mc`).
//!
//! The `examples/` directory holds one runnable program per major
//! capability; the `qsd-lab` binary exposes the same operations as
//! subcommands driven by a TOML config.

// `!(x > 0.0)` is used deliberately throughout: unlike `x <= 0.0` it also
// rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod eigen;
mod error;
pub mod func;
pub mod grid;
pub mod mc;
pub mod model;
pub mod quad;
pub mod renewal;

pub use error::{QsdError, Result};
