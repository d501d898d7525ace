//! E-step and the four conditional M-steps.

use crate::gnd::GndParams;
use crate::mixture::{MgndModel, Responsibilities};
use crate::special::{digamma_unchecked, trigamma_unchecked};

use super::{COLLAPSE_MASS, DISTANCE_FLOOR, SCALE_FLOOR};

/// Responsibilities under `model` and the Q-function
/// `Σ_k Σ_n z_nk [ln π_k + ln f_k(x_n)]`.
pub fn e_step(model: &MgndModel, data: &[f64]) -> (Responsibilities, f64) {
    let z = model.responsibilities(data);
    let q = model
        .components()
        .iter()
        .enumerate()
        .map(|(k, c)| q_component(data, &z.column(k), c.pi, &c.params))
        .sum();
    (z, q)
}

/// Contribution of one component to Q.
pub fn q_component(data: &[f64], z_k: &[f64], pi: f64, params: &GndParams) -> f64 {
    let log_pi = pi.ln();
    data.iter().zip(z_k).map(|(&x, &z)| z * (log_pi + params.log_pdf(x))).sum()
}

/// A component weight fell below the collapse threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Collapse {
    pub component: usize,
    pub mass: f64,
}

/// `π_k = Σ_n z_nk / Σ_k Σ_n z_nk`.
pub fn update_weights(z: &Responsibilities) -> Result<Vec<f64>, Collapse> {
    let sums = z.column_sums();
    if let Some((k, &mass)) = sums.iter().enumerate().find(|(_, &m)| !(m >= COLLAPSE_MASS)) {
        return Err(Collapse { component: k, mass });
    }
    let total: f64 = sums.iter().sum();
    Ok(sums.into_iter().map(|s| s / total).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateStatus {
    Applied,
    /// The step was non-finite or undefined; the value is unchanged.
    Skipped,
    /// The step was applied and then clamped to a bound.
    Clamped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Update {
    pub value: f64,
    pub status: UpdateStatus,
}

impl Update {
    fn applied(value: f64) -> Self {
        Self { value, status: UpdateStatus::Applied }
    }

    fn skipped(value: f64) -> Self {
        Self { value, status: UpdateStatus::Skipped }
    }
}

/// One Newton step on the location, `μ + A/B` with
/// `A = Σ z sign(x-μ)|x-μ|^{ν-1}` and `B = (ν-1) Σ z |x-μ|^{ν-2}`.
///
/// The scale cancels from the ratio, so it is not an input.
pub fn update_location(data: &[f64], z_k: &[f64], mu: f64, nu: f64) -> Update {
    let mut a = 0.0;
    let mut b = 0.0;
    for (&x, &z) in data.iter().zip(z_k) {
        let d = x - mu;
        let dist = d.abs().max(DISTANCE_FLOOR);
        let pow = dist.powf(nu - 2.0);
        let signed = if d >= 0.0 { dist * pow } else { -dist * pow };
        a += z * signed;
        b += z * pow;
    }
    b *= nu - 1.0;
    let step = a / b;
    if !b.is_finite() || b == 0.0 || !step.is_finite() {
        return Update::skipped(mu);
    }
    Update::applied(mu + step)
}

/// Closed-form scale `[ν Σ z|x-μ|^ν / Σ z]^{1/ν}`, floored at 1e-8.
pub fn update_scale(data: &[f64], z_k: &[f64], mu: f64, nu: f64) -> f64 {
    let mut num = 0.0;
    let mut mass = 0.0;
    for (&x, &z) in data.iter().zip(z_k) {
        num += z * (x - mu).abs().powf(nu);
        mass += z;
    }
    let sigma = (nu * num / mass).powf(1.0 / nu);
    if sigma.is_nan() {
        return SCALE_FLOOR;
    }
    sigma.max(SCALE_FLOOR)
}

/// First and second derivatives of Q with respect to the shape of one
/// component, with location and scale held at `mu`, `sigma`.
pub fn shape_derivatives(data: &[f64], z_k: &[f64], mu: f64, sigma: f64, nu: f64) -> (f64, f64) {
    let t = 1.0 / nu;
    let psi = digamma_unchecked(t);
    let psi1 = trigamma_unchecked(t);
    let const_g = t * (t * psi + 1.0);
    let const_h = -t * t * (1.0 + 2.0 * t * psi + t * t * psi1);
    let mut mass = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for (&x, &z) in data.iter().zip(z_k) {
        let u = ((x - mu) / sigma).abs().max(DISTANCE_FLOOR);
        let lu = u.ln();
        let un = u.powf(nu);
        mass += z;
        s1 += z * un * lu;
        s2 += z * un * lu * lu;
    }
    (mass * const_g - s1, mass * const_h - s2)
}

/// `g(ν) = ∂Q/∂ν`.
pub fn shape_gradient(data: &[f64], z_k: &[f64], mu: f64, sigma: f64, nu: f64) -> f64 {
    shape_derivatives(data, z_k, mu, sigma, nu).0
}

/// `g'(ν) = ∂²Q/∂ν²`.
pub fn shape_curvature(data: &[f64], z_k: &[f64], mu: f64, sigma: f64, nu: f64) -> f64 {
    shape_derivatives(data, z_k, mu, sigma, nu).1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeStep {
    /// Undamped Newton step (`α = 1`).
    Plain,
    /// Newton step damped by `α(ν) = e^{-ν}`.
    Adaptive,
}

/// Step size for the shape Newton update.
pub fn alpha(mode: ShapeStep, nu: f64) -> f64 {
    match mode {
        ShapeStep::Plain => 1.0,
        ShapeStep::Adaptive => (-nu).exp(),
    }
}

/// `ν - α(ν)·g/g'`, clamped to `bounds`; a non-finite step leaves ν unchanged.
pub fn shape_newton_step(nu: f64, gradient: f64, curvature: f64, alpha: f64, bounds: (f64, f64)) -> Update {
    let next = nu - alpha * (gradient / curvature);
    if !next.is_finite() {
        return Update::skipped(nu);
    }
    if next < bounds.0 {
        Update { value: bounds.0, status: UpdateStatus::Clamped }
    } else if next > bounds.1 {
        Update { value: bounds.1, status: UpdateStatus::Clamped }
    } else {
        Update::applied(next)
    }
}

/// Damped (or plain) Newton update of one component's shape.
pub fn update_shape(
    data: &[f64],
    z_k: &[f64],
    mu: f64,
    sigma: f64,
    nu: f64,
    mode: ShapeStep,
    bounds: (f64, f64),
) -> Update {
    let (g, h) = shape_derivatives(data, z_k, mu, sigma, nu);
    shape_newton_step(nu, g, h, alpha(mode, nu), bounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    fn gnd(mu: f64, sigma: f64, nu: f64) -> GndParams {
        GndParams::new(mu, sigma, nu).unwrap()
    }

    // Q restricted to one component, evaluated straight from the density.
    fn q_of(data: &[f64], z: &[f64], mu: f64, sigma: f64, nu: f64) -> f64 {
        q_component(data, z, 1.0, &gnd(mu, sigma, nu))
    }

    #[test]
    fn e_step_single_component_q_is_log_likelihood() {
        let m = MgndModel::single(gnd(0.5, 1.2, 1.3));
        let data = [0.1, -2.0, 3.0, 0.7];
        let (z, q) = e_step(&m, &data);
        assert!(z.rows().all(|r| r == [1.0]));
        assert!((q - m.log_likelihood(&data).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn e_step_identical_components() {
        let m = MgndModel::from_parts(&[0.5, 0.5], &[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0]).unwrap();
        let data = [0.3, -1.0, 2.0];
        let (z, q) = e_step(&m, &data);
        assert!(z.rows().all(|r| (r[0] - 0.5).abs() < 1e-15 && (r[1] - 0.5).abs() < 1e-15));
        let p = gnd(0.0, 1.0, 2.0);
        let expected: f64 = data.iter().map(|&x| 0.5f64.ln() + p.log_pdf(x)).sum();
        assert!((q - expected).abs() < 1e-12);
    }

    #[test]
    fn q_never_exceeds_log_likelihood() {
        let mut rng = substream(11, &[]);
        for _ in 0..20 {
            let m = MgndModel::from_parts(
                &[0.35, 0.65],
                &[rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
                &[rng.random_range(0.5..3.0), rng.random_range(0.5..3.0)],
                &[rng.random_range(0.5..6.0), rng.random_range(0.5..6.0)],
            )
            .unwrap();
            let data: Vec<f64> = (0..50).map(|_| rng.random_range(-5.0..5.0)).collect();
            let (_, q) = e_step(&m, &data);
            assert!(q <= m.log_likelihood(&data).unwrap() + 1e-12);
        }
    }

    #[test]
    fn weight_update_examples() {
        let z = Responsibilities::from_rows(2, vec![0.5; 20]).unwrap();
        assert_eq!(update_weights(&z).unwrap(), vec![0.5, 0.5]);

        let mut rows = Vec::new();
        for n in 0..100 {
            rows.extend_from_slice(if n < 70 { &[1.0, 0.0] } else { &[0.0, 1.0] });
        }
        let w = update_weights(&Responsibilities::from_rows(2, rows).unwrap()).unwrap();
        assert!((w[0] - 0.7).abs() < 1e-15 && (w[1] - 0.3).abs() < 1e-15);

        let all_first = Responsibilities::from_rows(2, [1.0, 0.0].repeat(10)).unwrap();
        assert_eq!(update_weights(&all_first).unwrap_err().component, 1);
    }

    #[test]
    fn gaussian_location_step_is_weighted_mean() {
        let data = [0.3, 1.7, -2.0, 4.1, 0.0];
        let z = [1.0; 5];
        let got = update_location(&data, &z, 10.0, 2.0);
        let mean = data.iter().sum::<f64>() / 5.0;
        assert_eq!(got.status, UpdateStatus::Applied);
        assert!((got.value - mean).abs() < 1e-12);
    }

    #[test]
    fn symmetric_data_leaves_location_unchanged() {
        for nu in [0.8, 1.5, 2.0, 4.0] {
            let got = update_location(&[-1.5, 1.5], &[1.0, 1.0], 0.0, nu);
            assert_eq!(got.value, 0.0);
        }
    }

    #[test]
    fn laplace_location_step_is_a_no_op() {
        let got = update_location(&[0.0, 1.0, 3.0], &[1.0; 3], 0.5, 1.0);
        assert_eq!(got, Update { value: 0.5, status: UpdateStatus::Skipped });
    }

    #[test]
    fn location_direction_matches_finite_difference_of_q() {
        let mut rng = substream(5, &[]);
        for _ in 0..30 {
            let nu = rng.random_range(1.1..6.0);
            let sigma = rng.random_range(0.5..3.0);
            let mu = rng.random_range(-1.0..1.0);
            let data: Vec<f64> = (0..40).map(|_| rng.random_range(-4.0..4.0)).collect();
            let z: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..1.0)).collect();
            let h = 1e-6;
            let fd = (q_of(&data, &z, mu + h, sigma, nu) - q_of(&data, &z, mu - h, sigma, nu)) / (2.0 * h);
            let step = update_location(&data, &z, mu, nu).value - mu;
            if fd.abs() > 1e-6 {
                assert_eq!(step.signum(), fd.signum(), "nu={nu} fd={fd} step={step}");
            }
        }
    }

    #[test]
    fn scale_update_examples() {
        let s = update_scale(&[-1.0, 1.0], &[1.0, 1.0], 0.0, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);

        let data = [0.5, -2.0, 3.0, 1.0];
        let mad = data.iter().map(|x: &f64| x.abs()).sum::<f64>() / 4.0;
        assert!((update_scale(&data, &[1.0; 4], 0.0, 1.0) - mad).abs() < 1e-15);

        let c = 3.5;
        let scaled: Vec<f64> = data.iter().map(|x| c * x).collect();
        let s1 = update_scale(&data, &[1.0; 4], 0.0, 1.7);
        let s2 = update_scale(&scaled, &[1.0; 4], 0.0, 1.7);
        assert!((s2 - c * s1).abs() < 1e-12 * s2);

        assert_eq!(update_scale(&[2.0, 2.0], &[1.0, 1.0], 2.0, 2.0), SCALE_FLOOR);
    }

    #[test]
    fn shape_derivatives_match_finite_differences() {
        let mut rng = substream(17, &[]);
        for _ in 0..25 {
            let nu = rng.random_range(0.5..8.0);
            let mu = rng.random_range(-1.0..1.0);
            let sigma = rng.random_range(0.5..2.5);
            let data: Vec<f64> = (0..60).map(|_| rng.random_range(-5.0..5.0)).collect();
            let z: Vec<f64> = (0..60).map(|_| rng.random_range(0.0..1.0)).collect();
            let (g, h) = shape_derivatives(&data, &z, mu, sigma, nu);
            let step = 1e-6;
            let q = |v: f64| q_of(&data, &z, mu, sigma, v);
            let fd_g = (q(nu + step) - q(nu - step)) / (2.0 * step);
            assert!((g - fd_g).abs() <= 1e-5 * fd_g.abs().max(1.0), "g {g} vs {fd_g}");
            let step2 = 1e-4;
            let fd_h = (q(nu + step2) - 2.0 * q(nu) + q(nu - step2)) / (step2 * step2);
            assert!((h - fd_h).abs() <= 1e-4 * fd_h.abs().max(1.0), "g' {h} vs {fd_h}");
        }
    }

    #[test]
    fn alpha_values() {
        assert_eq!(alpha(ShapeStep::Adaptive, 0.0), 1.0);
        assert!((alpha(ShapeStep::Adaptive, 1.0) - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert!((alpha(ShapeStep::Adaptive, 5.0) - 0.006_737_946_999_085_467).abs() < 1e-17);
        assert_eq!(alpha(ShapeStep::Plain, 7.0), 1.0);
    }

    #[test]
    fn plain_step_equals_unit_alpha_bit_for_bit() {
        let data = [0.3, -1.2, 2.2, 0.9, -0.1];
        let z = [0.9, 0.2, 0.5, 1.0, 0.7];
        let plain = update_shape(&data, &z, 0.1, 1.1, 2.7, ShapeStep::Plain, (0.1, 30.0));
        let (g, h) = shape_derivatives(&data, &z, 0.1, 1.1, 2.7);
        let forced = shape_newton_step(2.7, g, h, 1.0, (0.1, 30.0));
        assert_eq!(plain.value.to_bits(), forced.value.to_bits());
    }

    #[test]
    fn shape_step_at_gradient_root_is_stationary() {
        let got = shape_newton_step(3.3, 0.0, -5.0, alpha(ShapeStep::Adaptive, 3.3), (0.1, 30.0));
        assert_eq!(got.value, 3.3);
        let got = shape_newton_step(3.3, 1.0, 0.0, 1.0, (0.1, 30.0));
        assert_eq!(got, Update { value: 3.3, status: UpdateStatus::Skipped });
        let got = shape_newton_step(29.0, 10.0, -1.0, 1.0, (0.1, 30.0));
        assert_eq!(got, Update { value: 30.0, status: UpdateStatus::Clamped });
    }

    #[test]
    fn gradient_vanishes_on_average_at_true_shape() {
        for (seed, nu0) in [(1u64, 1.0), (2, 1.5), (3, 2.0), (4, 5.0)] {
            let data = gnd(0.0, 1.0, nu0).sample(&mut substream(seed, &[]), 100_000);
            let z = vec![1.0; data.len()];
            let g = shape_gradient(&data, &z, 0.0, 1.0, nu0);
            assert!(g.abs() / data.len() as f64 <= 0.01, "nu0={nu0} g/N={}", g / data.len() as f64);
        }
    }
}
