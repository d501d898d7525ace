//! k-means starting values.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mixture::{Component, MgndModel, Responsibilities};

use super::FitConfig;

const LLOYD_ITERATIONS: usize = 50;
const INIT_SCALE_FLOOR: f64 = 1e-6;

/// Starting model from a 1-D k-means partition.
///
/// Centroids start at K distinct data quantiles and are refined by 50 Lloyd
/// iterations. Each component takes its cluster's mean and standard
/// deviation; shapes are drawn from `config.shape_init_range` (or set to the
/// fixed shape) and weights from U(0, 1), renormalized.
pub fn kmeans_init<R: Rng + ?Sized>(
    data: &[f64],
    k: usize,
    config: &FitConfig,
    rng: &mut R,
) -> Result<(MgndModel, Responsibilities)> {
    if k == 0 {
        return Err(Error::InvalidArgument("number of components must be at least 1".into()));
    }
    if data.len() < k {
        return Err(Error::InvalidArgument(format!("{} observations cannot support {k} components", data.len())));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut centroids = initial_centroids(&sorted, k)?;
    let mut labels = vec![0usize; data.len()];
    for _ in 0..LLOYD_ITERATIONS {
        let changed = assign(data, &centroids, &mut labels);
        let (means, _) = cluster_stats(data, &labels, k);
        for (c, m) in centroids.iter_mut().zip(means) {
            if let Some(m) = m {
                *c = m;
            }
        }
        if !changed {
            break;
        }
    }
    assign(data, &centroids, &mut labels);
    let (means, sds) = cluster_stats(data, &labels, k);
    let global_sd = sample_sd(data).max(INIT_SCALE_FLOOR);

    let (lo, hi) = config.shape_init_range;
    let mut draws = Vec::with_capacity(k);
    for _ in 0..k {
        let nu = if lo < hi { rng.random_range(lo..hi) } else { lo };
        let mut pi: f64 = rng.random();
        while pi <= 0.0 {
            pi = rng.random();
        }
        draws.push((config.fixed_shape.unwrap_or(nu), pi));
    }
    let total: f64 = draws.iter().map(|d| d.1).sum();
    let components = (0..k)
        .map(|j| {
            let mu = means[j].unwrap_or(centroids[j]);
            let sigma = sds[j].map_or(global_sd, |s| s.max(INIT_SCALE_FLOOR));
            Component::new(draws[j].1 / total, mu, sigma, draws[j].0)
        })
        .collect::<Result<Vec<_>>>()?;
    let model = MgndModel::renormalized(components, 1e-9)?;
    let z = model.responsibilities(data);
    Ok((model, z))
}

fn initial_centroids(sorted: &[f64], k: usize) -> Result<Vec<f64>> {
    let pick = |values: &[f64]| -> Vec<f64> {
        let n = values.len();
        (0..k).map(|i| values[(((2 * i + 1) * n) / (2 * k)).min(n - 1)]).collect()
    };
    let at_quantiles = pick(sorted);
    if at_quantiles.windows(2).all(|w| w[0] < w[1]) {
        return Ok(at_quantiles);
    }
    let mut unique = sorted.to_vec();
    unique.dedup();
    if unique.len() < k {
        return Err(Error::Initialization(format!(
            "need at least {k} distinct values for {k} clusters, found {}",
            unique.len()
        )));
    }
    Ok(pick(&unique))
}

fn assign(data: &[f64], centroids: &[f64], labels: &mut [usize]) -> bool {
    let mut changed = false;
    for (label, &x) in labels.iter_mut().zip(data) {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, c) in centroids.iter().enumerate() {
            let d = (x - c).abs();
            if d < best_d {
                best = j;
                best_d = d;
            }
        }
        if *label != best {
            *label = best;
            changed = true;
        }
    }
    changed
}

fn cluster_stats(data: &[f64], labels: &[usize], k: usize) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    let mut count = vec![0usize; k];
    let mut sum = vec![0.0; k];
    for (&x, &l) in data.iter().zip(labels) {
        count[l] += 1;
        sum[l] += x;
    }
    let means: Vec<Option<f64>> = (0..k).map(|j| (count[j] > 0).then(|| sum[j] / count[j] as f64)).collect();
    let mut ss = vec![0.0; k];
    for (&x, &l) in data.iter().zip(labels) {
        if let Some(m) = means[l] {
            ss[l] += (x - m) * (x - m);
        }
    }
    let sds = (0..k)
        .map(|j| match count[j] {
            0 => None,
            1 => Some(0.0),
            c => Some((ss[j] / (c - 1) as f64).sqrt()),
        })
        .collect();
    (means, sds)
}

fn sample_sd(data: &[f64]) -> f64 {
    let n = data.len() as f64;
    if data.len() < 2 {
        return 0.0;
    }
    let mean = data.iter().sum::<f64>() / n;
    (data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}
