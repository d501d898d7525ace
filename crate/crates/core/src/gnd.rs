//! The generalized normal distribution (GND).
//!
//! Density `ν / (2σΓ(1/ν)) · exp(-|(x-μ)/σ|^ν)`. Laplace at ν = 1, Gaussian
//! with variance σ²/2 at ν = 2, tending to uniform as ν grows.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::log_gamma_unchecked;

/// Location, scale and shape of one GND.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GndParams {
    mu: f64,
    sigma: f64,
    nu: f64,
}

impl GndParams {
    pub fn new(mu: f64, sigma: f64, nu: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::InvalidArgument(format!("location must be finite, got {mu}")));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("scale must be finite and > 0, got {sigma}")));
        }
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::InvalidArgument(format!("shape must be finite and > 0, got {nu}")));
        }
        Ok(Self { mu, sigma, nu })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// `ln ν - ln(2σ) - lnΓ(1/ν)`, the log of the normalizing constant.
    pub fn log_normalizer(&self) -> f64 {
        self.nu.ln() - (2.0 * self.sigma).ln() - log_gamma_unchecked(1.0 / self.nu)
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        self.log_normalizer() - ((x - self.mu) / self.sigma).abs().powf(self.nu)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.log_pdf(x).exp()
    }

    /// n-th central moment `σⁿ{1+(-1)ⁿ}Γ((n+1)/ν) / (2Γ(1/ν))`.
    pub fn central_moment(&self, n: u32) -> f64 {
        if n % 2 == 1 {
            return 0.0;
        }
        if n == 0 {
            return 1.0;
        }
        let log_ratio = log_gamma_unchecked((n as f64 + 1.0) / self.nu) - log_gamma_unchecked(1.0 / self.nu);
        self.sigma.powi(n as i32) * log_ratio.exp()
    }

    pub fn mean(&self) -> f64 {
        self.mu
    }

    pub fn variance(&self) -> f64 {
        self.central_moment(2)
    }

    /// Standardized fourth moment `Γ(1/ν)Γ(5/ν)/Γ(3/ν)²` (3 for the Gaussian).
    pub fn kurtosis(&self) -> f64 {
        let t = 1.0 / self.nu;
        (log_gamma_unchecked(t) + log_gamma_unchecked(5.0 * t) - 2.0 * log_gamma_unchecked(3.0 * t)).exp()
    }

    /// Draws `n` variates as `μ + σ·S·E^{1/ν}` with a random sign `S` and
    /// `E ~ Gamma(1/ν, 1)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        let sampler = GndSampler::new(self);
        (0..n).map(|_| sampler.draw(rng)).collect()
    }
}

/// Reusable per-component sampler.
#[derive(Debug, Clone)]
pub(crate) struct GndSampler {
    mu: f64,
    sigma: f64,
    inv_nu: f64,
    gamma: Gamma<f64>,
}

impl GndSampler {
    pub(crate) fn new(p: &GndParams) -> Self {
        let inv_nu = 1.0 / p.nu;
        Self {
            mu: p.mu,
            sigma: p.sigma,
            inv_nu,
            gamma: Gamma::new(inv_nu, 1.0).expect("shape validated positive"),
        }
    }

    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let e: f64 = self.gamma.sample(rng);
        self.mu + self.sigma * sign * e.powf(self.inv_nu)
    }
}

#[derive(Deserialize)]
struct RawGnd {
    mu: f64,
    sigma: f64,
    nu: f64,
}

impl<'de> Deserialize<'de> for GndParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawGnd::deserialize(d)?;
        GndParams::new(raw.mu, raw.sigma, raw.nu).map_err(serde::de::Error::custom)
    }
}
