//! Maximum likelihood estimation of finite mixtures of generalized normal
//! distributions (MGND).
//!
//! The crate provides
//! - [`gnd`]: the generalized normal density, its moments and a sampler,
//! - [`mixture`]: the K-component mixture, responsibilities and moments,
//! - [`em`]: the ECM estimator and its ECMs variant with an adaptive Newton
//!   step on the shape parameter and a gradient-gated stopping rule,
//! - [`sim`]: a Monte Carlo harness measuring AVG/RMSE of both estimators,
//! - [`select`]: log-returns, descriptive statistics and AIC/BIC ranking.

// Negated comparisons are deliberate: NaN must take the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod em;
pub mod error;
pub mod gnd;
pub mod mixture;
pub mod rng;
pub mod select;
pub mod sim;
pub mod special;

pub use em::{fit, fit_multistart, Algorithm, FitConfig, FitResult, GateRule, MultiStartFit};
pub use error::{Error, Result};
pub use gnd::GndParams;
pub use mixture::{Component, MgndModel};
