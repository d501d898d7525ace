//! Monte Carlo comparison of ECM and ECMs.
//!
//! Each replicate draws one data set from the true mixture by the
//! composition method, fits it with both algorithms from the same starting
//! models, relabels the estimates against the truth and accumulates AVG and
//! RMSE per parameter.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::{fit_multistart, Algorithm, AuditSummary, FitConfig};
use crate::error::{Error, Result};
use crate::gnd::GndSampler;
use crate::mixture::{Component, MgndModel};
use crate::rng::{derive_seed, substream};

const MAX_MATCH_K: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub truth: MgndModel,
    pub sample_sizes: Vec<usize>,
    pub replicates: usize,
    #[serde(default = "default_ecm")]
    pub fit_config_ecm: FitConfig,
    #[serde(default = "default_ecms")]
    pub fit_config_ecms: FitConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_name() -> String {
    "custom".into()
}

fn default_ecm() -> FitConfig {
    FitConfig::ecm()
}

fn default_ecms() -> FitConfig {
    FitConfig::ecms()
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("a scenario needs at least one replicate".into()));
        }
        if self.sample_sizes.is_empty() {
            return Err(Error::InvalidArgument("a scenario needs at least one sample size".into()));
        }
        let min = 2 * self.truth.k();
        if let Some(n) = self.sample_sizes.iter().find(|&&n| n < min) {
            return Err(Error::InvalidArgument(format!("sample size {n} is below 2K = {min}")));
        }
        self.fit_config_ecm.validate()?;
        self.fit_config_ecms.validate()
    }

    pub fn config(&self, algorithm: Algorithm) -> &FitConfig {
        match algorithm {
            Algorithm::Ecm => &self.fit_config_ecm,
            Algorithm::Ecms => &self.fit_config_ecms,
        }
    }

    pub fn with_replicates(mut self, replicates: usize) -> Self {
        self.replicates = replicates;
        self
    }

    pub fn with_sizes(mut self, sizes: Vec<usize>) -> Self {
        self.sample_sizes = sizes;
        self
    }

    pub fn with_starts(mut self, n_starts: usize) -> Self {
        self.fit_config_ecm.n_starts = n_starts;
        self.fit_config_ecms.n_starts = n_starts;
        self
    }

    pub fn with_audit(mut self, audit: bool) -> Self {
        self.fit_config_ecm.audit = audit;
        self.fit_config_ecms.audit = audit;
        self
    }
}

/// The four two-component scenarios: weights 0.7/0.3, N ∈ {250, 1000},
/// 250 replicates and 10 shared starts.
pub fn builtin_scenarios() -> Vec<ScenarioSpec> {
    let rows: [([f64; 2], [f64; 2], [f64; 2]); 4] = [
        ([1.0, 5.0], [3.0, 1.0], [5.0, 1.5]),
        ([0.0, 0.0], [1.0, 3.0], [5.0, 1.5]),
        ([1.0, 5.0], [1.0, 3.0], [2.0, 0.8]),
        ([0.0, 0.0], [1.0, 3.0], [2.0, 0.8]),
    ];
    rows.iter()
        .enumerate()
        .map(|(i, (mu, sigma, nu))| ScenarioSpec {
            name: format!("scenario{}", i + 1),
            truth: MgndModel::from_parts(&[0.7, 0.3], mu, sigma, nu).expect("valid scenario"),
            sample_sizes: vec![250, 1000],
            replicates: 250,
            fit_config_ecm: FitConfig::ecm(),
            fit_config_ecms: FitConfig::ecms(),
            seed: 1000 + i as u64 + 1,
        })
        .collect()
}

/// Scenario `index` (1-based) of [`builtin_scenarios`].
pub fn builtin_scenario(index: usize) -> Result<ScenarioSpec> {
    builtin_scenarios()
        .into_iter()
        .nth(index.wrapping_sub(1))
        .ok_or_else(|| Error::InvalidArgument(format!("no built-in scenario {index} (expected 1-4)")))
}

/// Composition sampling: one uniform picks the component against the
/// cumulative weights, then the component is sampled.
pub fn sample_mixture<R: Rng + ?Sized>(truth: &MgndModel, n: usize, rng: &mut R) -> Vec<f64> {
    sample_mixture_labeled(truth, n, rng).into_iter().map(|(_, x)| x).collect()
}

/// As [`sample_mixture`], also returning the selected component of each draw.
pub fn sample_mixture_labeled<R: Rng + ?Sized>(truth: &MgndModel, n: usize, rng: &mut R) -> Vec<(usize, f64)> {
    let samplers: Vec<GndSampler> = truth.components().iter().map(|c| GndSampler::new(&c.params)).collect();
    let mut cumulative = Vec::with_capacity(truth.k());
    let mut acc = 0.0;
    for c in truth.components() {
        acc += c.pi;
        cumulative.push(acc);
    }
    let last = truth.k() - 1;
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let k = cumulative.iter().position(|&c| u < c).unwrap_or(last);
            (k, samplers[k].draw(rng))
        })
        .collect()
}

/// Permutation `p` such that estimate component `p[j]` corresponds to truth
/// component `j`, minimizing normalized location/scale/weight distance.
///
/// Shapes are left out of the distance.
pub fn match_components(estimate: &MgndModel, truth: &MgndModel) -> Result<Vec<usize>> {
    let k = truth.k();
    if estimate.k() != k {
        return Err(Error::InvalidArgument(format!("cannot match {} components against {k}", estimate.k())));
    }
    if k > MAX_MATCH_K {
        return Err(Error::Unsupported(format!("component matching supports K <= {MAX_MATCH_K}, got {k}")));
    }
    let spread = |f: fn(&Component) -> f64| {
        let vals: Vec<f64> = truth.components().iter().map(f).collect();
        let range = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max) - vals.iter().copied().fold(f64::INFINITY, f64::min);
        if range > 0.0 { range } else { 1.0 }
    };
    let s_mu = spread(|c| c.params.mu());
    let s_sigma = spread(|c| c.params.sigma());
    let cost = |e: &Component, t: &Component| {
        ((e.params.mu() - t.params.mu()) / s_mu).powi(2)
            + ((e.params.sigma() - t.params.sigma()) / s_sigma).powi(2)
            + (e.pi - t.pi).powi(2)
    };
    let est = estimate.components();
    let tru = truth.components();
    let mut best = (f64::INFINITY, (0..k).collect::<Vec<_>>());
    let mut perm: Vec<usize> = (0..k).collect();
    loop {
        let total: f64 = perm.iter().enumerate().map(|(j, &e)| cost(&est[e], &tru[j])).sum();
        if total < best.0 {
            best = (total, perm.clone());
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(best.1)
}

// Lexicographic successor; false once the last permutation is reached.
fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("successor exists");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Reorders `estimate` to follow the truth's component labels.
pub fn relabel(estimate: &MgndModel, truth: &MgndModel) -> Result<MgndModel> {
    let perm = match_components(estimate, truth)?;
    Ok(MgndModel::from_components_unchecked(perm.iter().map(|&e| estimate.components()[e]).collect()))
}

/// Parameter names in report order: π₁, μ₁, σ₁, ν₁, π₂, ...
pub fn parameter_names(k: usize) -> Vec<String> {
    (1..=k).flat_map(|j| ["pi", "mu", "sigma", "nu"].map(|p| format!("{p}{j}"))).collect()
}

pub fn parameter_vector(model: &MgndModel) -> Vec<f64> {
    model
        .components()
        .iter()
        .flat_map(|c| [c.pi, c.params.mu(), c.params.sigma(), c.params.nu()])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStat {
    pub parameter: String,
    pub truth: f64,
    pub avg: Option<f64>,
    pub rmse: Option<f64>,
}

/// AVG and RMSE per parameter over already-relabeled estimates.
pub fn summarize(truth: &MgndModel, estimates: &[MgndModel]) -> Vec<ParamStat> {
    let theta = parameter_vector(truth);
    let vectors: Vec<Vec<f64>> = estimates.iter().map(parameter_vector).collect();
    let s = vectors.len() as f64;
    parameter_names(truth.k())
        .into_iter()
        .enumerate()
        .map(|(i, parameter)| {
            let (avg, rmse) = if vectors.is_empty() {
                (None, None)
            } else {
                let avg = vectors.iter().map(|v| v[i]).sum::<f64>() / s;
                let mse = vectors.iter().map(|v| (v[i] - theta[i]).powi(2)).sum::<f64>() / s;
                (Some(avg), Some(mse.sqrt()))
            };
            ParamStat { parameter, truth: theta[i], avg, rmse }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub algorithm: Algorithm,
    pub n: usize,
    pub replicate: usize,
    /// Relabeled estimate; absent when every start failed.
    pub estimate: Option<MgndModel>,
    pub loglik: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub at_shape_bound: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub algorithm: Algorithm,
    pub n: usize,
    pub stats: Vec<ParamStat>,
    pub n_used: usize,
    pub n_failed: usize,
    pub n_not_converged: usize,
    /// Replicates whose selected estimate has a shape on a bound.
    pub bound_hits: usize,
}

impl CellReport {
    pub fn stat(&self, parameter: &str) -> Option<&ParamStat> {
        self.stats.iter().find(|s| s.parameter == parameter)
    }

    pub fn rmse(&self, parameter: &str) -> Option<f64> {
        self.stat(parameter).and_then(|s| s.rmse)
    }

    pub fn available(&self) -> bool {
        self.n_used > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub scenario: String,
    pub truth: MgndModel,
    pub replicates: usize,
    pub cells: Vec<CellReport>,
    pub records: Vec<ReplicateRecord>,
    /// Q-monotonicity audit over all fits, when enabled in the configs.
    pub audit: Option<AuditSummary>,
}

impl SimReport {
    pub fn cell(&self, algorithm: Algorithm, n: usize) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.algorithm == algorithm && c.n == n)
    }

    /// One row per algorithm × N × parameter.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("scenario\talgorithm\tn\tparameter\ttruth\tavg\trmse\tn_used\tn_failed\n");
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
        for cell in &self.cells {
            for s in &cell.stats {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    self.scenario,
                    cell.algorithm,
                    cell.n,
                    s.parameter,
                    s.truth,
                    fmt(s.avg),
                    fmt(s.rmse),
                    cell.n_used,
                    cell.n_failed
                );
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

const ALGORITHMS: [Algorithm; 2] = [Algorithm::Ecm, Algorithm::Ecms];

fn run_replicate(spec: &ScenarioSpec, n: usize, replicate: usize) -> Vec<(ReplicateRecord, Option<AuditSummary>)> {
    let path = [n as u64, replicate as u64];
    let data = sample_mixture(&spec.truth, n, &mut substream(spec.seed, &[path[0], path[1], 0]));
    let fit_seed = derive_seed(spec.seed, &[path[0], path[1], 1]);
    ALGORITHMS
        .iter()
        .map(|&algorithm| {
            let cfg = FitConfig { seed: fit_seed, ..spec.config(algorithm).clone() };
            let mut record = ReplicateRecord {
                algorithm,
                n,
                replicate,
                estimate: None,
                loglik: None,
                iterations: 0,
                converged: false,
                at_shape_bound: false,
                failure: None,
            };
            match fit_multistart(&data, spec.truth.k(), &cfg) {
                Ok(fit) => {
                    let audit = fit.audit();
                    let best = fit.best;
                    let (lo, hi) = cfg.nu_bounds;
                    record.at_shape_bound =
                        best.model.components().iter().any(|c| c.params.nu() <= lo || c.params.nu() >= hi);
                    match relabel(&best.model, &spec.truth) {
                        Ok(m) => record.estimate = Some(m),
                        Err(e) => record.failure = Some(e.to_string()),
                    }
                    record.loglik = Some(best.loglik);
                    record.iterations = best.iterations;
                    record.converged = best.converged;
                    (record, audit)
                }
                Err(e) => {
                    record.failure = Some(e.to_string());
                    (record, None)
                }
            }
        })
        .collect()
}

/// Runs every replicate for every sample size with both algorithms.
///
/// Replicates execute in parallel; each draws from its own substream of
/// `(seed, N, replicate)` and results are assembled in a fixed order, so the
/// report does not depend on the number of worker threads.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<SimReport> {
    spec.validate()?;
    let tasks: Vec<(usize, usize)> =
        spec.sample_sizes.iter().flat_map(|&n| (0..spec.replicates).map(move |s| (n, s))).collect();
    let results: Vec<Vec<(ReplicateRecord, Option<AuditSummary>)>> =
        tasks.par_iter().map(|&(n, s)| run_replicate(spec, n, s)).collect();

    let mut audit: Option<AuditSummary> = None;
    let mut records = Vec::with_capacity(tasks.len() * ALGORITHMS.len());
    for (record, a) in results.into_iter().flatten() {
        if let Some(a) = a {
            audit.get_or_insert_with(AuditSummary::default).merge(&a);
        }
        records.push(record);
    }

    let mut cells = Vec::new();
    for &algorithm in &ALGORITHMS {
        for &n in &spec.sample_sizes {
            let cell_records: Vec<&ReplicateRecord> =
                records.iter().filter(|r| r.algorithm == algorithm && r.n == n).collect();
            let estimates: Vec<MgndModel> = cell_records.iter().filter_map(|r| r.estimate.clone()).collect();
            cells.push(CellReport {
                algorithm,
                n,
                stats: summarize(&spec.truth, &estimates),
                n_used: estimates.len(),
                n_failed: cell_records.len() - estimates.len(),
                n_not_converged: cell_records.iter().filter(|r| r.estimate.is_some() && !r.converged).count(),
                bound_hits: cell_records.iter().filter(|r| r.at_shape_bound).count(),
            });
        }
    }
    Ok(SimReport { scenario: spec.name.clone(), truth: spec.truth.clone(), replicates: spec.replicates, cells, records, audit })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two(mu: [f64; 2], sigma: [f64; 2], pi: [f64; 2]) -> MgndModel {
        MgndModel::from_parts(&pi, &mu, &sigma, &[2.0, 2.0]).unwrap()
    }

    #[test]
    fn builtin_scenarios_are_as_tabulated() {
        let s = builtin_scenarios();
        assert_eq!(s.len(), 4);
        let nus: Vec<Vec<f64>> = s.iter().map(|x| x.truth.components().iter().map(|c| c.params.nu()).collect()).collect();
        assert_eq!(nus[0], vec![5.0, 1.5]);
        assert_eq!(nus[2], vec![2.0, 0.8]);
        for i in [1, 3] {
            assert!(s[i].truth.components().iter().all(|c| c.params.mu() == 0.0));
        }
        for sc in &s {
            assert_eq!(sc.sample_sizes, vec![250, 1000]);
            assert_eq!(sc.replicates, 250);
            assert_eq!(sc.fit_config_ecm.n_starts, 10);
            assert_eq!(sc.fit_config_ecms.n_starts, 10);
            assert_eq!(sc.truth.weights(), vec![0.7, 0.3]);
        }
        assert!((s[0].truth.moments().variance - 5.625_160_147_235_849).abs() < 1e-10);
        assert!(builtin_scenario(5).is_err());
        assert!(builtin_scenario(0).is_err());
    }

    #[test]
    fn single_component_truth_draws_from_it() {
        let truth = MgndModel::from_parts(&[1.0], &[3.0], &[0.5], &[2.0]).unwrap();
        let draws = sample_mixture_labeled(&truth, 100, &mut substream(1, &[]));
        assert!(draws.iter().all(|(k, _)| *k == 0));
    }

    #[test]
    fn matching_identity_and_swap() {
        let truth = two([1.0, 5.0], [3.0, 1.0], [0.7, 0.3]);
        assert_eq!(match_components(&truth, &truth).unwrap(), vec![0, 1]);
        let swapped = MgndModel::new(vec![truth.components()[1], truth.components()[0]]).unwrap();
        assert_eq!(match_components(&swapped, &truth).unwrap(), vec![1, 0]);
        assert_eq!(relabel(&swapped, &truth).unwrap(), truth);
    }

    #[test]
    fn matching_with_shared_location_uses_scale_and_weight() {
        let truth = two([0.0, 0.0], [1.0, 3.0], [0.7, 0.3]);
        let est = two([0.05, -0.02], [2.6, 1.1], [0.35, 0.65]);
        assert_eq!(match_components(&est, &truth).unwrap(), vec![1, 0]);
    }

    #[test]
    fn matching_ignores_shape() {
        let truth = MgndModel::from_parts(&[0.5, 0.5], &[0.0, 4.0], &[1.0, 1.0], &[5.0, 1.5]).unwrap();
        let est = MgndModel::from_parts(&[0.5, 0.5], &[0.1, 3.9], &[1.0, 1.0], &[1.5, 30.0]).unwrap();
        assert_eq!(match_components(&est, &truth).unwrap(), vec![0, 1]);
    }

    #[test]
    fn matching_rejects_large_or_mismatched_k() {
        let k9 = MgndModel::from_parts(&[1.0 / 9.0; 9], &[0.0; 9], &[1.0; 9], &[2.0; 9]).unwrap();
        assert!(matches!(match_components(&k9, &k9), Err(Error::Unsupported(_))));
        let t = two([0.0, 1.0], [1.0, 1.0], [0.5, 0.5]);
        let one = MgndModel::from_parts(&[1.0], &[0.0], &[1.0], &[2.0]).unwrap();
        assert!(match_components(&one, &t).is_err());
    }

    #[test]
    fn permutations_cover_all_orders() {
        let mut p = vec![0, 1, 2, 3];
        let mut count = 1;
        while next_permutation(&mut p) {
            count += 1;
        }
        assert_eq!(count, 24);
    }

    #[test]
    fn perfect_estimates_give_zero_rmse() {
        let truth = builtin_scenarios()[1].truth.clone();
        for stat in summarize(&truth, std::slice::from_ref(&truth)) {
            assert_eq!(stat.rmse, Some(0.0));
            assert_eq!(stat.avg, Some(stat.truth));
        }
        for stat in summarize(&truth, &[truth.clone(), truth.clone(), truth.clone()]) {
            assert_eq!(stat.rmse, Some(0.0));
        }
        assert!(summarize(&truth, &[]).iter().all(|s| s.avg.is_none() && s.rmse.is_none()));
    }

    #[test]
    fn scenario_validation() {
        let spec = builtin_scenarios()[0].clone();
        assert!(spec.clone().with_replicates(0).validate().is_err());
        assert!(spec.clone().with_sizes(vec![3]).validate().is_err());
        assert!(spec.with_sizes(vec![4]).validate().is_ok());
    }

    #[test]
    fn scenario_json_defaults() {
        let text = r#"{"truth":{"components":[{"pi":0.5,"mu":0,"sigma":1,"nu":2},{"pi":0.5,"mu":4,"sigma":1,"nu":1}]},
                      "sample_sizes":[100],"replicates":3}"#;
        let spec: ScenarioSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.name, "custom");
        assert_eq!(spec.fit_config_ecm.algorithm, Algorithm::Ecm);
        assert_eq!(spec.fit_config_ecms.algorithm, Algorithm::Ecms);
        assert_eq!(spec.seed, 0);
    }
}
