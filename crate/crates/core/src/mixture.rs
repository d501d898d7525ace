//! K-component mixtures of generalized normal distributions.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnd::GndParams;

const WEIGHT_SUM_TOL: f64 = 1e-12;
const JSON_WEIGHT_SUM_TOL: f64 = 1e-9;
const SHAPE_EQ_TOL: f64 = 1e-6;

/// One weighted mixture component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub pi: f64,
    pub params: GndParams,
}

impl Component {
    pub fn new(pi: f64, mu: f64, sigma: f64, nu: f64) -> Result<Self> {
        Ok(Self { pi, params: GndParams::new(mu, sigma, nu)? })
    }
}

/// A finite mixture `Σ_k π_k f_k(x | μ_k, σ_k, ν_k)`.
///
/// Components keep the order they were given in.
#[derive(Debug, Clone, PartialEq)]
pub struct MgndModel {
    components: Vec<Component>,
}

impl MgndModel {
    /// Builds a model, requiring the weights to sum to one within 1e-12.
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidModel("a mixture needs at least one component".into()));
        }
        for (k, c) in components.iter().enumerate() {
            if !(c.pi.is_finite() && c.pi > 0.0 && c.pi <= 1.0) {
                return Err(Error::InvalidModel(format!("weight of component {} is {} (must lie in (0, 1])", k + 1, c.pi)));
            }
        }
        let total: f64 = components.iter().map(|c| c.pi).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidModel(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { components })
    }

    /// Builds a model after rescaling the weights to sum to one, provided
    /// they already do within `tol`.
    pub fn renormalized(mut components: Vec<Component>, tol: f64) -> Result<Self> {
        let total: f64 = components.iter().map(|c| c.pi).sum();
        if !total.is_finite() || (total - 1.0).abs() > tol {
            return Err(Error::InvalidModel(format!("weights sum to {total}, expected 1 within {tol}")));
        }
        for c in &mut components {
            c.pi /= total;
        }
        Self::new(components)
    }

    /// Single-component model.
    pub fn single(params: GndParams) -> Self {
        Self { components: vec![Component { pi: 1.0, params }] }
    }

    /// Constructs from parallel parameter slices.
    pub fn from_parts(pi: &[f64], mu: &[f64], sigma: &[f64], nu: &[f64]) -> Result<Self> {
        let k = pi.len();
        if mu.len() != k || sigma.len() != k || nu.len() != k {
            return Err(Error::InvalidModel("parameter vectors differ in length".into()));
        }
        let comps = (0..k)
            .map(|i| Component::new(pi[i], mu[i], sigma[i], nu[i]))
            .collect::<Result<Vec<_>>>()?;
        Self::new(comps)
    }

    pub(crate) fn from_components_unchecked(components: Vec<Component>) -> Self {
        Self { components }
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.pi).collect()
    }

    /// Number of free parameters, `4K - 1` (or `3K - 1` with shapes held fixed).
    pub fn n_free_params(&self, fixed_shape: bool) -> usize {
        let per = if fixed_shape { 3 } else { 4 };
        per * self.k() - 1
    }

    fn log_terms(&self) -> Vec<LogTerm> {
        self.components
            .iter()
            .map(|c| LogTerm {
                offset: c.pi.ln() + c.params.log_normalizer(),
                mu: c.params.mu(),
                sigma: c.params.sigma(),
                nu: c.params.nu(),
            })
            .collect()
    }

    /// `log Σ_k π_k f_k(x)`.
    pub fn log_pdf(&self, x: f64) -> f64 {
        let terms = self.log_terms();
        let mut buf = vec![0.0; terms.len()];
        weighted_log_densities(&terms, x, &mut buf);
        log_sum_exp(&buf)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.log_pdf(x).exp()
    }

    /// `π_k f_k(x)` for every component.
    pub fn weighted_component_pdfs(&self, x: f64) -> Vec<f64> {
        self.components.iter().map(|c| c.pi * c.params.pdf(x)).collect()
    }

    /// Observed-data log-likelihood.
    pub fn log_likelihood(&self, data: &[f64]) -> Result<f64> {
        check_data(data)?;
        Ok(self.evaluate(data).1)
    }

    /// Posterior membership probabilities `z_nk`.
    pub fn responsibilities(&self, data: &[f64]) -> Responsibilities {
        self.evaluate(data).0
    }

    /// Responsibilities and log-likelihood in one pass.
    pub(crate) fn evaluate(&self, data: &[f64]) -> (Responsibilities, f64) {
        let terms = self.log_terms();
        let k = terms.len();
        let mut values = vec![0.0; data.len() * k];
        let mut loglik = 0.0;
        for (row, &x) in values.chunks_exact_mut(k).zip(data) {
            weighted_log_densities(&terms, x, row);
            let lse = log_sum_exp(row);
            loglik += lse;
            if lse.is_finite() {
                for v in row.iter_mut() {
                    *v = (*v - lse).exp();
                }
            } else {
                row.fill(1.0 / k as f64);
            }
        }
        (Responsibilities { k, values }, loglik)
    }

    /// m-th central moment via the binomial expansion over components.
    pub fn central_moment(&self, m: u32) -> f64 {
        let mean = self.mean();
        self.components
            .iter()
            .map(|c| {
                let shift = c.params.mu() - mean;
                let inner: f64 = (0..=m)
                    .map(|i| binomial(m, i) * shift.powi((m - i) as i32) * c.params.central_moment(i))
                    .sum();
                c.pi * inner
            })
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.pi * c.params.mu()).sum()
    }

    pub fn moments(&self) -> MixtureMoments {
        let variance = self.central_moment(2);
        MixtureMoments {
            mean: self.mean(),
            variance,
            skewness: self.central_moment(3) / variance.powf(1.5),
            kurtosis: self.central_moment(4) / (variance * variance),
        }
    }

    /// Names the two-component special case this model reduces to.
    pub fn submodel(&self) -> Result<Submodel> {
        if self.k() != 2 {
            return Err(Error::Unsupported(format!("submodel classification needs K = 2, got K = {}", self.k())));
        }
        let is = |nu: f64, target: f64| (nu - target).abs() <= SHAPE_EQ_TOL;
        let (a, b) = (self.components[0].params.nu(), self.components[1].params.nu());
        let normal = (is(a, 2.0), is(b, 2.0));
        let laplace = (is(a, 1.0), is(b, 1.0));
        Ok(match (normal, laplace) {
            ((true, true), _) => Submodel::Normal,
            (_, (true, true)) => Submodel::Laplace,
            ((true, false), (false, true)) | ((false, true), (true, false)) => Submodel::NormalLaplace,
            ((true, _), _) | ((_, true), _) => Submodel::NormalGnd,
            (_, (true, _)) | (_, (_, true)) => Submodel::LaplaceGnd,
            _ => Submodel::General,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct LogTerm {
    offset: f64,
    mu: f64,
    sigma: f64,
    nu: f64,
}

fn weighted_log_densities(terms: &[LogTerm], x: f64, out: &mut [f64]) {
    for (o, t) in out.iter_mut().zip(terms) {
        *o = t.offset - ((x - t.mu) / t.sigma).abs().powf(t.nu);
    }
}

/// Numerically stable `log Σ exp(v_i)`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub(crate) fn check_data(data: &[f64]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("data set is empty".into()));
    }
    if let Some((i, v)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("observation {} is not finite ({v})", i + 1)));
    }
    Ok(())
}

/// Row-major N×K matrix of responsibilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    k: usize,
    values: Vec<f64>,
}

impl Responsibilities {
    /// Wraps a row-major N×K buffer.
    pub fn from_rows(k: usize, values: Vec<f64>) -> Result<Self> {
        if k == 0 || !values.len().is_multiple_of(k) {
            return Err(Error::InvalidArgument(format!("{} values do not form rows of length {k}", values.len())));
        }
        Ok(Self { k, values })
    }

    pub fn n(&self) -> usize {
        self.values.len() / self.k
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, n: usize, k: usize) -> f64 {
        self.values[n * self.k + k]
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.k..(n + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.k)
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows().map(|r| r[k]).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.k];
        for row in self.rows() {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        sums
    }
}

/// Mean, variance, skewness and (non-excess) kurtosis of a mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixtureMoments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

/// Special cases of the two-component mixture, by shape values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Submodel {
    Normal,
    Laplace,
    NormalLaplace,
    NormalGnd,
    LaplaceGnd,
    General,
}

impl fmt::Display for Submodel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Submodel::Normal => "normal mixture",
            Submodel::Laplace => "Laplace mixture",
            Submodel::NormalLaplace => "normal-Laplace mixture",
            Submodel::NormalGnd => "normal-GND mixture",
            Submodel::LaplaceGnd => "Laplace-GND mixture",
            Submodel::General => "general MGND",
        })
    }
}

#[derive(Serialize, Deserialize)]
struct JsonComponent {
    pi: f64,
    mu: f64,
    sigma: f64,
    nu: f64,
}

#[derive(Serialize, Deserialize)]
struct JsonModel {
    components: Vec<JsonComponent>,
}

impl Serialize for MgndModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        JsonModel {
            components: self
                .components
                .iter()
                .map(|c| JsonComponent { pi: c.pi, mu: c.params.mu(), sigma: c.params.sigma(), nu: c.params.nu() })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MgndModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = JsonModel::deserialize(d)?;
        let comps = raw
            .components
            .into_iter()
            .map(|c| Component::new(c.pi, c.mu, c.sigma, c.nu))
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        MgndModel::renormalized(comps, JSON_WEIGHT_SUM_TOL).map_err(serde::de::Error::custom)
    }
}
