//! Return series statistics and information-criterion model ranking.

use std::fmt::Write as _;

use serde::Serialize;

use crate::em::{fit_multistart, FitConfig};
use crate::error::{Error, Result};
use crate::mixture::{check_data, MgndModel};
use crate::special::chi_square_sf;

/// Percentage log-returns `100·(ln P_t - ln P_{t-1})`.
pub fn log_returns(prices: &[f64]) -> Result<Vec<f64>> {
    if prices.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 prices, got {}", prices.len())));
    }
    if let Some((i, p)) = prices.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p > 0.0)) {
        return Err(Error::Domain(format!("price {} is not positive ({p})", i + 1)));
    }
    Ok(prices.windows(2).map(|w| (w[1].ln() - w[0].ln()) * 100.0).collect())
}

/// Descriptive statistics with the Jarque-Bera normality test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    pub skewness: f64,
    /// Standardized fourth moment; 3 for a Gaussian.
    pub kurtosis: f64,
    pub min: f64,
    pub max: f64,
    pub jb_stat: f64,
    pub jb_p_value: f64,
}

impl SeriesStats {
    pub fn rejects_normality(&self, level: f64) -> bool {
        self.jb_p_value <= level
    }
}

/// `n/6 · [S² + (K - 3)²/4]`.
pub fn jarque_bera(n: usize, skewness: f64, kurtosis: f64) -> f64 {
    n as f64 / 6.0 * (skewness * skewness + (kurtosis - 3.0).powi(2) / 4.0)
}

/// Asymptotic χ²₂ p-value of a Jarque-Bera statistic.
pub fn jarque_bera_p_value(stat: f64) -> f64 {
    chi_square_sf(stat, 2.0).expect("two degrees of freedom is valid")
}

pub fn describe(data: &[f64]) -> Result<SeriesStats> {
    if data.len() < 4 {
        return Err(Error::InvalidArgument(format!("need at least 4 observations, got {}", data.len())));
    }
    check_data(data)?;
    let n = data.len();
    let nf = n as f64;
    let mean = data.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in data {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if m2 <= 0.0 {
        return Err(Error::InvalidArgument("series has zero variance".into()));
    }
    let skewness = m3 / m2.powf(1.5);
    let kurtosis = m4 / (m2 * m2);
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    let jb_stat = jarque_bera(n, skewness, kurtosis);
    Ok(SeriesStats {
        n,
        mean,
        median,
        std: (m2 * nf / (nf - 1.0)).sqrt(),
        skewness,
        kurtosis,
        min: sorted[0],
        max: sorted[n - 1],
        jb_stat,
        jb_p_value: jarque_bera_p_value(jb_stat),
    })
}

pub fn aic(loglik: f64, p: usize) -> f64 {
    2.0 * p as f64 - 2.0 * loglik
}

pub fn bic(loglik: f64, p: usize, n: usize) -> f64 {
    p as f64 * (n as f64).ln() - 2.0 * loglik
}

/// A model family to fit and score.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub label: String,
    pub k: usize,
    pub config: FitConfig,
}

impl Candidate {
    pub fn new(label: impl Into<String>, k: usize, config: FitConfig) -> Self {
        Self { label: label.into(), k, config }
    }

    /// Free parameters: `4K - 1`, or `3K - 1` when shapes are fixed.
    pub fn n_params(&self) -> usize {
        let per = if self.config.fixed_shape.is_some() { 3 } else { 4 };
        per * self.k - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRow {
    pub label: String,
    pub p: usize,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub aic_winner: bool,
    pub bic_winner: bool,
    pub model: MgndModel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranking {
    pub n: usize,
    /// Sorted by BIC, then AIC, then candidate order.
    pub rows: Vec<RankRow>,
    pub failed: Vec<(String, String)>,
}

impl Ranking {
    /// Scored row from an external fit, e.g. a model family estimated elsewhere.
    pub fn push_external(&mut self, label: impl Into<String>, p: usize, loglik: f64, model: MgndModel) {
        self.rows.push(RankRow {
            label: label.into(),
            p,
            loglik,
            aic: aic(loglik, p),
            bic: bic(loglik, p, self.n),
            aic_winner: false,
            bic_winner: false,
            model,
        });
        self.rank();
    }

    fn rank(&mut self) {
        self.rows.sort_by(|a, b| a.bic.total_cmp(&b.bic).then(a.aic.total_cmp(&b.aic)));
        let best_aic = self.rows.iter().enumerate().fold(None, |best: Option<(usize, f64)>, (i, r)| match best {
            Some((_, v)) if v <= r.aic => best,
            _ => Some((i, r.aic)),
        });
        for (i, row) in self.rows.iter_mut().enumerate() {
            row.bic_winner = i == 0;
            row.aic_winner = best_aic.is_some_and(|(j, _)| j == i);
        }
    }

    pub fn bic_winner(&self) -> Option<&RankRow> {
        self.rows.iter().find(|r| r.bic_winner)
    }

    pub fn aic_winner(&self) -> Option<&RankRow> {
        self.rows.iter().find(|r| r.aic_winner)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("label\tp\tloglik\taic\tbic\taic_winner\tbic_winner\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}",
                r.label, r.p, r.loglik, r.aic, r.bic, r.aic_winner as u8, r.bic_winner as u8
            );
        }
        out
    }
}

/// Fits every candidate by multi-start ECM/ECMs and ranks them by BIC and AIC.
pub fn compare_models(data: &[f64], candidates: &[Candidate]) -> Result<Ranking> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate models given".into()));
    }
    check_data(data)?;
    let n = data.len();
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for c in candidates {
        match fit_multistart(data, c.k, &c.config) {
            Ok(fit) => {
                let p = c.n_params();
                rows.push(RankRow {
                    label: c.label.clone(),
                    p,
                    loglik: fit.best.loglik,
                    aic: aic(fit.best.loglik, p),
                    bic: bic(fit.best.loglik, p, n),
                    aic_winner: false,
                    bic_winner: false,
                    model: fit.best.model,
                });
            }
            Err(e) => failed.push((c.label.clone(), e.to_string())),
        }
    }
    if rows.is_empty() {
        return Err(Error::AllCandidatesFailed(failed.into_iter().map(|(l, e)| format!("{l}: {e}")).collect()));
    }
    let mut ranking = Ranking { n, rows, failed };
    ranking.rank();
    Ok(ranking)
}

/// The two-component MGND (ECMs) against the two-component normal mixture.
pub fn default_candidates(k: usize, n_starts: usize, seed: u64) -> Vec<Candidate> {
    let base = FitConfig::ecms().with_starts(n_starts).with_seed(seed);
    vec![
        Candidate::new("MGND", k, base.clone()),
        Candidate::new("MND", k, FitConfig { fixed_shape: Some(2.0), ..base }),
    ]
}
