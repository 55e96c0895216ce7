//! Position-quadrature homodyne detection on the rotated probe.
//!
//! The outcome `q` is Gaussian with mean `sqrt(2)|alpha| cos(tau - theta)`.
//! The density is often written as `exp(-(q - mu)^2 / S) / sqrt(pi S)` with
//! `S = cosh 2r - cos(phi + 2 theta) sinh 2r`, so `S` is *twice* the
//! variance. [`HomodyneParams::sigma2`] always stores the true variance `S / 2`.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::gaussian::ProbeState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomodyneParams {
    pub mu: f64,
    /// True outcome variance (half of `cosh 2r - cos(phi + 2 theta) sinh 2r`).
    pub sigma2: f64,
}

impl HomodyneParams {
    /// `cosh 2r - cos(phi + 2 theta) sinh 2r`, the width parameter of the
    /// density exponent.
    pub fn width(&self) -> f64 {
        2.0 * self.sigma2
    }

    pub fn density(&self, q: f64) -> f64 {
        let s = self.width();
        let d = q - self.mu;
        (-d * d / s).exp() / (PI * s).sqrt()
    }

    pub fn log_density(&self, q: f64) -> f64 {
        let s = self.width();
        let d = q - self.mu;
        -d * d / s - 0.5 * (PI * s).ln()
    }
}

/// Width parameter `cosh 2r - cos(phi + 2 theta) sinh 2r`.
///
/// Written as `e^{-2r} + 2 sin^2((phi + 2 theta)/2) sinh 2r`, which stays
/// accurate when the two terms of the direct form nearly cancel.
pub(crate) fn width(r: f64, phi: f64, theta: f64) -> f64 {
    let h = (0.5 * (phi + 2.0 * theta)).sin();
    (-2.0 * r).exp() + 2.0 * h * h * (2.0 * r).sinh()
}

pub fn outcome_params(probe: &ProbeState, theta: f64) -> HomodyneParams {
    HomodyneParams {
        mu: SQRT_2 * probe.alpha_mag() * (probe.tau() - theta).cos(),
        sigma2: 0.5 * width(probe.r(), probe.phi(), theta),
    }
}

/// Probability density of outcome `q` given the phase `theta`.
pub fn likelihood(probe: &ProbeState, theta: f64, q: f64) -> f64 {
    outcome_params(probe, theta).density(q)
}

/// Draws one homodyne outcome. Only the caller's stream is advanced.
pub fn sample_outcome<R: Rng + ?Sized>(probe: &ProbeState, theta: f64, rng: &mut R) -> f64 {
    let p = outcome_params(probe, theta);
    let z: f64 = rng.sample(StandardNormal);
    p.mu + p.sigma2.sqrt() * z
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / (n - 1) as f64;
        let mut acc = 0.5 * (f(a) + f(b));
        for i in 1..n - 1 {
            acc += f(a + i as f64 * h);
        }
        acc * h
    }

    #[test]
    fn params_examples() {
        let p = outcome_params(&ProbeState::vacuum(), 0.77);
        assert_eq!(p.mu, 0.0);
        assert!((p.sigma2 - 0.5).abs() < 1e-15);

        let p = outcome_params(&ProbeState::new(0.0, 0.0, 1.0, 0.0).unwrap(), 0.0);
        assert!((p.sigma2 - (-2f64).exp() / 2.0).abs() < 1e-15);

        let p = outcome_params(&ProbeState::new(2.0, FRAC_PI_2, 0.0, 0.0).unwrap(), FRAC_PI_2);
        assert!((p.mu - 2.0 * SQRT_2).abs() < 1e-14);
    }

    #[test]
    fn width_matches_direct_form() {
        for &(r, phi, theta) in &[(0.3f64, 0.1f64, 0.2f64), (1.5, 2.0, -0.4), (0.0, 1.0, 1.0), (2.2, 0.0, 3.0)] {
            let direct = (2.0f64 * r).cosh() - (phi + 2.0 * theta).cos() * (2.0f64 * r).sinh();
            assert!((width(r, phi, theta) - direct).abs() < 1e-12 * direct.max(1.0));
        }
    }

    #[test]
    fn likelihood_examples() {
        let inv_sqrt_pi = 1.0 / PI.sqrt();
        assert!((likelihood(&ProbeState::vacuum(), 2.1, 0.0) - inv_sqrt_pi).abs() < 1e-15);
        let coh = ProbeState::new(1.0, 0.0, 0.0, 0.0).unwrap();
        assert!((likelihood(&coh, 0.0, SQRT_2) - inv_sqrt_pi).abs() < 1e-15);

        let probe = ProbeState::new(1.3, 0.4, 0.8, 2.5).unwrap();
        for &theta in &[0.0, 0.9, 2.0] {
            let mass = trapezoid(|q| likelihood(&probe, theta, q), -40.0, 40.0, 20001);
            assert!((mass - 1.0).abs() < 1e-10, "mass {mass}");
            let p = outcome_params(&probe, theta);
            let mean = trapezoid(|q| q * likelihood(&probe, theta, q), -40.0, 40.0, 20001);
            let var = trapezoid(
                |q| (q - p.mu).powi(2) * likelihood(&probe, theta, q),
                -40.0,
                40.0,
                20001,
            );
            assert!((mean - p.mu).abs() < 1e-10);
            assert!((var - p.sigma2).abs() < 1e-10);
        }
    }

    #[test]
    fn sampler_is_deterministic_and_consistent() {
        let probe = ProbeState::vacuum();
        let a = sample_outcome(&probe, 0.3, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_outcome(&probe, 0.3, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a.to_bits(), b.to_bits());

        let n = 100_000;
        for (probe, expected) in [
            (ProbeState::vacuum(), 0.5),
            (ProbeState::new(0.0, 0.0, 1.0, 0.0).unwrap(), (-2f64).exp() / 2.0),
        ] {
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let xs: Vec<f64> = (0..n).map(|_| sample_outcome(&probe, 0.0, &mut rng)).collect();
            let m = xs.iter().sum::<f64>() / n as f64;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            // standard error of a Gaussian sample variance: sigma^2 sqrt(2/(n-1))
            let se = expected * (2.0 / (n - 1) as f64).sqrt();
            assert!((v - expected).abs() < 3.0 * se, "v={v} expected={expected}");
        }
    }

    #[test]
    fn reflection_and_shift_symmetries() {
        let probe = ProbeState::new(0.9, 0.7, 0.6, 1.9).unwrap();
        let mirrored = ProbeState::new(0.9, -0.7, 0.6, -1.9).unwrap();
        let delta = 0.37;
        let shifted = ProbeState::new(0.9, 0.7 + delta, 0.6, 1.9 - 2.0 * delta).unwrap();
        for &theta in &[0.1, 1.0, 2.5] {
            for &q in &[-1.0, 0.0, 0.4, 2.2] {
                let l = likelihood(&probe, theta, q);
                assert!((likelihood(&mirrored, -theta, q) - l).abs() < 1e-13);
                assert!((likelihood(&shifted, theta + delta, q) - l).abs() < 1e-13);
            }
        }
    }
}
