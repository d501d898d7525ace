//! Single-start and multi-start drivers.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gnd::GndParams;
use crate::mixture::{check_data, Component, MgndModel};
use crate::rng::substream;

use super::steps::{alpha, q_component, shape_derivatives, shape_newton_step, update_location, update_scale, update_weights};
use super::{
    kmeans_init, AuditSummary, Diagnostics, FitConfig, FitResult, IterationRecord, UpdateStatus, COLLAPSE_MASS,
    SCALE_FLOOR, SCALE_FLOOR_PATIENCE,
};

/// Fits a K-component model from the k-means start of `start_index`.
///
/// The start's random draws come from the substream `(config.seed, start_index)`,
/// so ECM and ECMs configured with the same seed begin from the same model.
pub fn fit(data: &[f64], k: usize, config: &FitConfig) -> Result<FitResult> {
    fit_start(data, k, config, 0)
}

fn fit_start(data: &[f64], k: usize, config: &FitConfig, start_index: usize) -> Result<FitResult> {
    config.validate()?;
    check_data(data)?;
    let mut rng = substream(config.seed, &[start_index as u64]);
    let (init, _) = kmeans_init(data, k, config, &mut rng)?;
    let mut result = fit_with_init(data, init, config)?;
    result.start_index = start_index;
    Ok(result)
}

/// Runs the ECM/ECMs iterations from a given starting model.
pub fn fit_with_init(data: &[f64], init: MgndModel, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    check_data(data)?;
    let k = init.k();
    if data.len() < k {
        return Err(Error::InvalidArgument(format!("{} observations cannot support {k} components", data.len())));
    }
    let init = match config.fixed_shape {
        Some(nu) => MgndModel::from_components_unchecked(
            init.components()
                .iter()
                .map(|c| Component { pi: c.pi, params: GndParams::new(c.params.mu(), c.params.sigma(), nu).expect("valid") })
                .collect(),
        ),
        None => init,
    };

    let n = data.len();
    let step_mode = config.shape_step();
    let gating = config.gating();
    let mut diagnostics = Diagnostics { audit: config.audit.then(AuditSummary::default), ..Default::default() };
    let mut model = init.clone();
    let (mut z, mut loglik) = model.evaluate(data);
    let mut trajectory: Vec<IterationRecord> = Vec::new();
    let mut floor_streak = vec![0usize; k];
    let mut converged = false;
    let mut failure = None;
    if !loglik.is_finite() {
        failure = Some(format!("initial log-likelihood is not finite ({loglik})"));
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(n); k];
    while failure.is_none() && trajectory.len() < config.max_iter {
        let iteration = trajectory.len() + 1;
        for (j, col) in columns.iter_mut().enumerate() {
            col.clear();
            col.extend(z.rows().map(|r| r[j]));
        }
        let masses: Vec<f64> = columns.iter().map(|c| c.iter().sum()).collect();
        if let Some(j) = masses.iter().position(|&m| !(m >= COLLAPSE_MASS)) {
            failure = Some(format!("component {} collapsed: responsibility mass {:e}", j + 1, masses[j]));
            break;
        }

        let mut params = Vec::with_capacity(k);
        let mut gradient = vec![0.0; k];
        let mut gate_closed = vec![false; k];
        for (j, comp) in model.components().iter().enumerate() {
            let z_k = &columns[j];
            let (mu0, sigma0, nu0) = (comp.params.mu(), comp.params.sigma(), comp.params.nu());

            let loc = update_location(data, z_k, mu0, nu0);
            if loc.status == UpdateStatus::Skipped {
                diagnostics.skipped_location_steps += 1;
            }
            let mut mu = loc.value;
            if config.location_guard && mu != mu0 {
                let before = q_component(data, z_k, 1.0, &GndParams::new(mu0, sigma0, nu0).expect("valid"));
                let after = q_component(data, z_k, 1.0, &GndParams::new(mu, sigma0, nu0).expect("valid"));
                if !(after >= before) {
                    mu = mu0;
                    diagnostics.rejected_location_steps += 1;
                }
            }

            let sigma = update_scale(data, z_k, mu, nu0);
            if let Some(audit) = diagnostics.audit.as_mut() {
                let before = q_component(data, z_k, 1.0, &GndParams::new(mu, sigma0, nu0).expect("valid"));
                let after = q_component(data, z_k, 1.0, &GndParams::new(mu, sigma, nu0).expect("valid"));
                audit.record(before, after);
            }
            if sigma <= SCALE_FLOOR {
                floor_streak[j] += 1;
            } else {
                floor_streak[j] = 0;
            }

            let (g, h) = shape_derivatives(data, z_k, mu, sigma, nu0);
            gradient[j] = g;
            let nu = match config.fixed_shape {
                Some(fixed) => {
                    gate_closed[j] = gating;
                    fixed
                }
                None => {
                    let open = !gating || config.gate.is_open(g, config.eta);
                    gate_closed[j] = gating && !open;
                    if open {
                        let step = shape_newton_step(nu0, g, h, alpha(step_mode, nu0), config.nu_bounds);
                        match step.status {
                            UpdateStatus::Skipped => diagnostics.skipped_shape_steps += 1,
                            UpdateStatus::Clamped => diagnostics.bound_hits += 1,
                            UpdateStatus::Applied => {}
                        }
                        step.value
                    } else {
                        nu0
                    }
                }
            };
            params.push(GndParams::new(mu, sigma, nu).expect("updates keep parameters valid"));
        }
        if let Some(j) = floor_streak.iter().position(|&s| s >= SCALE_FLOOR_PATIENCE) {
            failure = Some(format!("component {} collapsed: scale at floor for {SCALE_FLOOR_PATIENCE} iterations", j + 1));
            break;
        }

        let weights = match update_weights(&z) {
            Ok(w) => w,
            Err(c) => {
                failure = Some(format!("component {} collapsed: weight mass {:e}", c.component + 1, c.mass));
                break;
            }
        };
        if let Some(audit) = diagnostics.audit.as_mut() {
            let before: f64 = model.components().iter().zip(&masses).map(|(c, m)| m * c.pi.ln()).sum();
            let after: f64 = weights.iter().zip(&masses).map(|(w, m)| m * w.ln()).sum();
            audit.record(before, after);
        }
        if let Some(j) = weights.iter().position(|&w| !(w >= COLLAPSE_MASS)) {
            failure = Some(format!("component {} collapsed: weight {:e}", j + 1, weights[j]));
            break;
        }

        let next = MgndModel::from_components_unchecked(
            weights.iter().zip(params).map(|(&pi, params)| Component { pi, params }).collect(),
        );
        let (next_z, next_loglik) = next.evaluate(data);
        if !next_loglik.is_finite() {
            failure = Some(format!("log-likelihood became non-finite at iteration {iteration}"));
            break;
        }
        trajectory.push(IterationRecord {
            iteration,
            loglik: next_loglik,
            pi: weights,
            mu: next.components().iter().map(|c| c.params.mu()).collect(),
            sigma: next.components().iter().map(|c| c.params.sigma()).collect(),
            nu: next.components().iter().map(|c| c.params.nu()).collect(),
            gradient,
            gate_closed: gate_closed.clone(),
        });
        let stop_allowed = !gating || gate_closed.iter().all(|&d| d);
        let change = (next_loglik - loglik).abs();
        model = next;
        z = next_z;
        loglik = next_loglik;
        if stop_allowed && change <= config.epsilon {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        model,
        loglik,
        iterations: trajectory.len(),
        converged,
        failure,
        start_index: 0,
        initial_model: init,
        diagnostics,
        trajectory,
        responsibilities: z,
    })
}

/// Per-start summary kept alongside the selected fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartSummary {
    pub start_index: usize,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiStartFit {
    /// Highest-likelihood non-failed start (lowest index on ties).
    pub best: FitResult,
    /// Every start, in start-index order.
    pub all: Vec<FitResult>,
}

impl MultiStartFit {
    pub fn summaries(&self) -> Vec<StartSummary> {
        self.all
            .iter()
            .map(|r| StartSummary {
                start_index: r.start_index,
                loglik: r.loglik,
                iterations: r.iterations,
                converged: r.converged,
                failure: r.failure.clone(),
            })
            .collect()
    }

    /// Q-audit totals over every start.
    pub fn audit(&self) -> Option<AuditSummary> {
        let mut total: Option<AuditSummary> = None;
        for r in &self.all {
            if let Some(a) = &r.diagnostics.audit {
                total.get_or_insert_with(AuditSummary::default).merge(a);
            }
        }
        total
    }
}

/// Runs `config.n_starts` fits and keeps the best.
///
/// Starts run in parallel; the selection depends only on the per-start
/// results, so it does not depend on scheduling.
pub fn fit_multistart(data: &[f64], k: usize, config: &FitConfig) -> Result<MultiStartFit> {
    config.validate()?;
    check_data(data)?;
    let all: Vec<FitResult> = (0..config.n_starts)
        .into_par_iter()
        .map(|s| fit_start(data, k, config, s))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<&FitResult> = None;
    for r in all.iter().filter(|r| !r.failed()) {
        if best.is_none_or(|b| r.loglik > b.loglik) {
            best = Some(r);
        }
    }
    match best {
        Some(b) => Ok(MultiStartFit { best: b.clone(), all }),
        None => Err(Error::AllStartsFailed(
            all.iter()
                .map(|r| format!("start {}: {}", r.start_index, r.failure.as_deref().unwrap_or("unknown")))
                .collect(),
        )),
    }
}
