//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::{PI, TAU};

use gaussprobe::gaussian::{rotated_moments, Moments};
use gaussprobe::homodyne::{likelihood, outcome_params};
use gaussprobe::ProbeState;
use rand::Rng;

/// Trapezoid rule on `n` uniform points of `[a, b]`.
pub fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / (n - 1) as f64;
    let mut acc = 0.5 * (f(a) + f(b));
    for i in 1..n - 1 {
        acc += f(a + i as f64 * h);
    }
    acc * h
}

/// `d/dtheta p(q | theta)` by a five-point stencil.
fn dlikelihood(probe: &ProbeState, theta: f64, q: f64, h: f64) -> f64 {
    let p = |t: f64| likelihood(probe, t, q);
    (p(theta - 2.0 * h) - 8.0 * p(theta - h) + 8.0 * p(theta + h) - p(theta + 2.0 * h)) / (12.0 * h)
}

/// Fisher information from its definition, `integral (dp/dtheta)^2 / p dq`,
/// with the derivative taken numerically.
pub fn fisher_oracle(probe: &ProbeState, theta: f64) -> f64 {
    let hp = outcome_params(probe, theta);
    let sd = hp.sigma2.sqrt();
    let (a, b) = (hp.mu - 14.0 * sd, hp.mu + 14.0 * sd);
    trapezoid(
        |q| {
            let p = likelihood(probe, theta, q);
            if p <= 0.0 {
                0.0
            } else {
                let d = dlikelihood(probe, theta, q, 1e-3);
                d * d / p
            }
        },
        a,
        b,
        6001,
    )
}

/// `|<psi_1|psi_2>|^2` of two pure Gaussian states from their moments
/// (vacuum covariance `I/2`).
pub fn pure_fidelity(m1: &Moments, m2: &Moments) -> f64 {
    let s = [
        [m1.cov[0][0] + m2.cov[0][0], m1.cov[0][1] + m2.cov[0][1]],
        [m1.cov[1][0] + m2.cov[1][0], m1.cov[1][1] + m2.cov[1][1]],
    ];
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    let d = [m1.mean[0] - m2.mean[0], m1.mean[1] - m2.mean[1]];
    let quad = (s[1][1] * d[0] * d[0] - 2.0 * s[0][1] * d[0] * d[1] + s[0][0] * d[1] * d[1]) / det;
    (-0.5 * quad).exp() / det.sqrt()
}

/// QFI from the overlap of the probe rotated by `theta -+ h`:
/// `4 (1 - F) / (2h)^2` with `F` the squared overlap.
pub fn qfi_oracle(probe: &ProbeState, theta: f64) -> f64 {
    let h = 2e-4;
    let f = pure_fidelity(&rotated_moments(probe, theta - h), &rotated_moments(probe, theta + h));
    4.0 * (1.0 - f) / (4.0 * h * h)
}

/// Probe of energy `energy` with a uniformly random displacement fraction
/// and random angles.
pub fn random_probe<R: Rng>(rng: &mut R, energy: f64) -> ProbeState {
    let frac: f64 = rng.random();
    let tau = rng.random::<f64>() * TAU;
    let phi = rng.random::<f64>() * TAU;
    ProbeState::with_energy(energy, (frac * energy).sqrt(), tau, phi).unwrap()
}

pub fn random_theta<R: Rng>(rng: &mut R) -> f64 {
    rng.random::<f64>() * PI
}
