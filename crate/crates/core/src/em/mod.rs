//! ECM and ECMs estimation of MGND models.
//!
//! One iteration performs an E-step and then, per component, a Newton step
//! on the location, the closed-form scale update, a Newton step on the shape
//! and the weight update. ECMs differs from plain ECM in two places: the
//! shape step is damped by `α(ν) = e^{-ν}`, and the shape of component k is
//! only updated while its gradient exceeds `η`. The log-likelihood stopping
//! rule is checked only once every such gate is closed.

mod fit;
mod init;
mod steps;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{MgndModel, Responsibilities};

pub use fit::{fit, fit_multistart, fit_with_init, MultiStartFit};
pub use init::kmeans_init;
pub use steps::{
    alpha, e_step, q_component, shape_curvature, shape_derivatives, shape_gradient, shape_newton_step,
    update_location, update_scale, update_shape, update_weights, Collapse, ShapeStep, Update, UpdateStatus,
};

/// Floor applied to `|x - μ|` (and `|x - μ|/σ`) before fractional powers and logs.
pub const DISTANCE_FLOOR: f64 = 1e-10;
/// Lower bound for the scale update.
pub const SCALE_FLOOR: f64 = 1e-8;
/// Weight or responsibility mass below which a component is considered collapsed.
pub const COLLAPSE_MASS: f64 = 1e-10;
/// Consecutive iterations a scale may sit on its floor before the fit fails.
pub const SCALE_FLOOR_PATIENCE: usize = 10;
/// Allowed decrease of Q across an exact conditional maximization step.
pub const AUDIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Plain ECM: undamped shape steps, log-likelihood stopping rule.
    Ecm,
    /// ECM with adaptive step size and gradient-gated stopping.
    Ecms,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ecm" => Ok(Algorithm::Ecm),
            "ecms" => Ok(Algorithm::Ecms),
            other => Err(Error::InvalidArgument(format!("unknown algorithm '{other}' (expected ecm or ecms)"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Ecm => "ECM",
            Algorithm::Ecms => "ECMs",
        })
    }
}

/// How the ECMs gate compares the shape gradient with `η`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateRule {
    /// Open while `g(ν) > η`. A strongly negative gradient closes the gate.
    #[default]
    Signed,
    /// Open while `|g(ν)| > η`, so the shape may also move down.
    Magnitude,
}

impl std::str::FromStr for GateRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "signed" => Ok(GateRule::Signed),
            "magnitude" | "abs" => Ok(GateRule::Magnitude),
            other => Err(Error::InvalidArgument(format!("unknown gate rule '{other}' (expected signed or magnitude)"))),
        }
    }
}

impl GateRule {
    pub fn is_open(self, g: f64, eta: f64) -> bool {
        match self {
            GateRule::Signed => g > eta,
            GateRule::Magnitude => g.abs() > eta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub algorithm: Algorithm,
    /// Log-likelihood change at or below which the fit stops.
    pub epsilon: f64,
    /// Shape-gradient gate for ECMs. `-inf` disables gating.
    pub eta: f64,
    pub max_iter: usize,
    pub n_starts: usize,
    pub seed: u64,
    /// Initial shapes are drawn uniformly from this range.
    pub shape_init_range: (f64, f64),
    /// Holds every shape at this value when set.
    pub fixed_shape: Option<f64>,
    pub nu_bounds: (f64, f64),
    /// Forces `α ≡ 1` in ECMs mode.
    pub unit_step: bool,
    /// Checks that every scale and weight update does not decrease Q.
    pub audit: bool,
    pub gate: GateRule,
    /// Rejects a location Newton step that would decrease Q. Off by default;
    /// for `ν ≤ 1` the raw step can overshoot badly.
    pub location_guard: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Ecms,
            epsilon: 1e-5,
            eta: 5e-3,
            max_iter: 500,
            n_starts: 10,
            seed: 0,
            shape_init_range: (0.5, 3.0),
            fixed_shape: None,
            nu_bounds: (0.1, 30.0),
            unit_step: false,
            audit: false,
            gate: GateRule::Signed,
            location_guard: false,
        }
    }
}

impl FitConfig {
    pub fn ecm() -> Self {
        Self { algorithm: Algorithm::Ecm, ..Self::default() }
    }

    pub fn ecms() -> Self {
        Self::default()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_starts(mut self, n_starts: usize) -> Self {
        self.n_starts = n_starts;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if !(self.eta > 0.0 || self.eta == f64::NEG_INFINITY) || self.eta.is_nan() {
            return bad(format!("eta must be > 0 (or -inf to disable gating), got {}", self.eta));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive".into());
        }
        if self.n_starts == 0 {
            return bad("n_starts must be positive".into());
        }
        let (lo, hi) = self.nu_bounds;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return bad(format!("nu_bounds must satisfy 0 < low < high < inf, got ({lo}, {hi})"));
        }
        let (a, b) = self.shape_init_range;
        if !(a >= lo && b <= hi && a <= b) {
            return bad(format!("shape_init_range ({a}, {b}) must lie within nu_bounds ({lo}, {hi})"));
        }
        if let Some(v) = self.fixed_shape {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("fixed shape must be finite and > 0, got {v}"));
            }
        }
        Ok(())
    }

    pub(crate) fn shape_step(&self) -> ShapeStep {
        match (self.algorithm, self.unit_step) {
            (Algorithm::Ecms, false) => ShapeStep::Adaptive,
            _ => ShapeStep::Plain,
        }
    }

    pub(crate) fn gating(&self) -> bool {
        self.algorithm == Algorithm::Ecms && self.fixed_shape.is_none() && self.eta > f64::NEG_INFINITY
    }
}

/// State after one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loglik: f64,
    pub pi: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub nu: Vec<f64>,
    /// Shape gradient `g(ν_k)` evaluated at the start-of-iteration shape.
    pub gradient: Vec<f64>,
    /// ECMs gate flags `d_k`; always false for ECM.
    pub gate_closed: Vec<bool>,
}

/// Result of the Q-monotonicity audit of the exact conditional steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub checks: usize,
    pub violations: usize,
    /// Largest observed decrease of Q (0 when Q never decreased).
    pub worst_decrease: f64,
}

impl AuditSummary {
    pub(crate) fn record(&mut self, before: f64, after: f64) {
        self.checks += 1;
        let decrease = before - after;
        if decrease > self.worst_decrease || decrease.is_nan() {
            self.worst_decrease = decrease;
        }
        if !(decrease <= AUDIT_TOLERANCE) {
            self.violations += 1;
        }
    }

    pub fn merge(&mut self, other: &AuditSummary) {
        self.checks += other.checks;
        self.violations += other.violations;
        self.worst_decrease = self.worst_decrease.max(other.worst_decrease);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Shape updates that landed on (and were clamped to) a bound.
    pub bound_hits: usize,
    pub skipped_location_steps: usize,
    /// Location steps undone by the optional Q guard.
    pub rejected_location_steps: usize,
    pub skipped_shape_steps: usize,
    pub audit: Option<AuditSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub model: MgndModel,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the fit was abandoned (collapse or non-finite likelihood).
    pub failure: Option<String>,
    pub start_index: usize,
    pub initial_model: MgndModel,
    pub diagnostics: Diagnostics,
    pub trajectory: Vec<IterationRecord>,
    #[serde(skip)]
    pub responsibilities: Responsibilities,
}

impl FitResult {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit results serialize")
    }
}
