//! Frequentist figures of merit: homodyne Fisher information, the quantum
//! Fisher information of pure Gaussian probes, the probes that maximize them,
//! and the classical and quantum Van Trees bounds on the APV.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::bayes::PhaseDistribution;
use crate::error::{Error, Result};
use crate::gaussian::ProbeState;
use crate::homodyne::width;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherReport {
    pub fi: f64,
    pub qfi: f64,
    pub theta: f64,
}

/// Fisher information of the homodyne outcome about `theta`.
pub fn fisher_information(probe: &ProbeState, theta: f64) -> f64 {
    let s = width(probe.r(), probe.phi(), theta);
    let a2 = probe.alpha_mag() * probe.alpha_mag();
    let sd = (theta - probe.tau()).sin();
    let sx = (2.0 * theta + probe.phi()).sin();
    let sh = (2.0 * probe.r()).sinh();
    2.0 * (2.0 * a2 * s * sd * sd + sh * sh * sx * sx) / (s * s)
}

/// Fisher information `4 |alpha|^2 e^{2r}` of a probe with `phi = -2 theta`
/// and `tau = theta - pi/2`.
pub fn fisher_hus(alpha_mag: f64, r: f64) -> f64 {
    4.0 * alpha_mag * alpha_mag * (2.0 * r).exp()
}

/// Quantum Fisher information for the phase rotation of a pure Gaussian probe.
///
/// `2 sinh^2(2r)` from the squeezing plus the displacement term
/// `4 |alpha|^2 (e^{2r} sin^2(tau + phi/2) + e^{-2r} cos^2(tau + phi/2))`,
/// i.e. the displacement's rotation direction weighted by the inverse
/// covariance. Independent of `theta`.
pub fn qfi(probe: &ProbeState) -> f64 {
    let r = probe.r();
    let a2 = probe.alpha_mag() * probe.alpha_mag();
    let (s, c) = (probe.tau() + 0.5 * probe.phi()).sin_cos();
    let sh = (2.0 * r).sinh();
    2.0 * sh * sh + 4.0 * a2 * ((2.0 * r).exp() * s * s + (-2.0 * r).exp() * c * c)
}

pub fn fisher_report(probe: &ProbeState, theta: f64) -> FisherReport {
    FisherReport {
        fi: fisher_information(probe, theta),
        qfi: qfi(probe),
        theta,
    }
}

/// `integral FI(probe, theta) p(theta) dtheta` on the prior grid.
pub fn average_fisher(probe: &ProbeState, prior: &PhaseDistribution) -> Result<f64> {
    prior.check_normalized()?;
    Ok(prior.expect(|t| fisher_information(probe, t)))
}

/// Fisher information of the prior density itself,
/// `integral (d/dtheta log p)^2 p dtheta`.
///
/// Uses central differences of `log p` on the grid and one-sided differences
/// at the ends of the support. Grid points where the density has underflowed
/// to zero outside the support are skipped; a zero inside the support is an
/// error.
pub fn prior_fisher(prior: &PhaseDistribution) -> Result<f64> {
    prior.check_normalized()?;
    let d = prior.density();
    let first = d.iter().position(|p| *p > 0.0);
    let last = d.iter().rposition(|p| *p > 0.0);
    let (first, last) = match (first, last) {
        (Some(a), Some(b)) if b > a => (a, b),
        _ => return Err(Error::DegeneratePrior("support has fewer than two points".into())),
    };
    if let Some(k) = (first..=last).find(|&k| d[k] <= 0.0) {
        return Err(Error::DegeneratePrior(format!(
            "zero density at interior grid point {k}"
        )));
    }
    let h = prior.step();
    let logs: Vec<f64> = d[first..=last].iter().map(|p| p.ln()).collect();
    let m = logs.len();
    let mut acc = 0.0;
    for k in 0..m {
        let deriv = if k == 0 {
            (logs[1] - logs[0]) / h
        } else if k + 1 == m {
            (logs[m - 1] - logs[m - 2]) / h
        } else {
            (logs[k + 1] - logs[k - 1]) / (2.0 * h)
        };
        acc += prior.weight(first + k) * d[first + k] * deriv * deriv;
    }
    Ok(acc)
}

/// Van Trees bound `1 / (I[prior] + avg_fi)`.
pub fn van_trees_bound(prior: &PhaseDistribution, avg_fi: f64) -> Result<f64> {
    if !(avg_fi >= 0.0) || !avg_fi.is_finite() {
        return Err(Error::OutOfRange {
            name: "average Fisher information",
            value: avg_fi,
            range: "[0, inf)",
        });
    }
    let info = prior_fisher(prior)? + avg_fi;
    if !(info > 0.0) {
        return Err(Error::DegeneratePrior("prior carries no Fisher information".into()));
    }
    Ok(1.0 / info)
}

/// Quantum Van Trees bound for a Gaussian prior of variance `sigma2` and a
/// probe of energy `energy`: `1 / (1/sigma2 + 8 E (E + 1))`.
pub fn quantum_van_trees(sigma2_prior: f64, energy: f64) -> Result<f64> {
    if !(sigma2_prior > 0.0) {
        return Err(Error::OutOfRange {
            name: "prior variance",
            value: sigma2_prior,
            range: "(0, inf]",
        });
    }
    if !(energy >= 0.0) || !energy.is_finite() {
        return Err(Error::OutOfRange {
            name: "energy",
            value: energy,
            range: "[0, inf)",
        });
    }
    Ok(1.0 / (1.0 / sigma2_prior + 8.0 * energy * (energy + 1.0)))
}

/// Energy split `(|alpha|^2, r)` maximizing [`fisher_hus`] at fixed energy.
pub fn optimal_local_split(energy: f64) -> (f64, f64) {
    let alpha2 = energy * (energy + 1.0) / (2.0 * energy + 1.0);
    let r = 0.5 * (2.0 * energy + 1.0).ln();
    (alpha2, r)
}

/// Squeezing angle `phi + 2 theta` at which a squeezed vacuum of energy
/// `energy` reaches FI = QFI = 8E(E+1).
pub fn lus_asymptotic_angle(energy: f64) -> f64 {
    (2.0 * energy.max(0.0).sqrt().asinh()).tanh().acos()
}

/// Displaced-squeezed probe with the FI-optimal energy split, displaced
/// perpendicular to `theta0` and squeezed along the outcome quadrature.
pub fn hus_local_probe(energy: f64, theta0: f64) -> Result<ProbeState> {
    let (alpha2, _) = optimal_local_split(energy);
    ProbeState::with_energy(energy, alpha2.sqrt(), theta0 - FRAC_PI_2, -2.0 * theta0)
}

/// Squeezed vacuum with `phi + 2 theta0 = mirror * arccos(tanh 2r)`,
/// `mirror = +1` or `-1`. Both signs give FI = 8E(E+1) at `theta0`; they are
/// reflections of each other through the outcome axis.
pub fn lus_local_probe(energy: f64, theta0: f64, mirror: f64) -> Result<ProbeState> {
    let angle = mirror.signum() * lus_asymptotic_angle(energy);
    ProbeState::with_energy(energy, 0.0, 0.0, angle - 2.0 * theta0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::{gaussian_prior, DEFAULT_GRID_POINTS};
    use std::f64::consts::PI;

    #[test]
    fn fi_examples() {
        assert_eq!(fisher_information(&ProbeState::vacuum(), 0.4), 0.0);
        let theta = 0.9;
        let lus = lus_local_probe(2.0, theta, 1.0).unwrap();
        assert!((fisher_information(&lus, theta) - 48.0).abs() < 1e-9);
        let hus = hus_local_probe(2.0, theta).unwrap();
        assert!((fisher_information(&hus, theta) - 24.0).abs() < 1e-9);
    }

    #[test]
    fn fisher_hus_examples() {
        assert_eq!(fisher_hus(0.0, 1.3), 0.0);
        let (a2, r) = optimal_local_split(2.0);
        assert!((fisher_hus(a2.sqrt(), r) - 24.0).abs() < 1e-12);
        assert!((fisher_hus(1.0, 0.0) - 4.0).abs() < 1e-15);
        for &(a, r, theta) in &[(0.7, 0.3, 0.2), (1.4, 1.1, 2.0)] {
            let p = ProbeState::new(a, theta - FRAC_PI_2, r, -2.0 * theta).unwrap();
            assert!((fisher_information(&p, theta) - fisher_hus(a, r)).abs() < 1e-10);
        }
    }

    #[test]
    fn qfi_examples() {
        let sq = ProbeState::with_energy(2.0, 0.0, 0.0, 0.0).unwrap();
        assert!((qfi(&sq) - 48.0).abs() < 1e-10);
        assert_eq!(qfi(&ProbeState::vacuum()), 0.0);
        let coh = ProbeState::new(2f64.sqrt(), 0.0, 0.0, 0.0).unwrap();
        assert!((qfi(&coh) - 8.0).abs() < 1e-12);
        // a coherent state's QFI does not depend on the (meaningless) squeezing angle
        let coh2 = ProbeState::new(2f64.sqrt(), 0.3, 0.0, 1.9).unwrap();
        assert!((qfi(&coh2) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn average_fisher_examples() {
        let theta0 = FRAC_PI_2;
        let probe = lus_local_probe(2.0, theta0, 1.0).unwrap();
        let narrow = gaussian_prior(theta0, 1e-7, DEFAULT_GRID_POINTS).unwrap();
        let avg = average_fisher(&probe, &narrow).unwrap();
        let point = fisher_information(&probe, theta0);
        assert!((avg - point).abs() < 0.01 * point);

        let wide = gaussian_prior(theta0, 0.1, DEFAULT_GRID_POINTS).unwrap();
        assert_eq!(average_fisher(&ProbeState::vacuum(), &wide).unwrap(), 0.0);
        assert!(average_fisher(&probe, &wide).unwrap() < 48.0);
    }

    #[test]
    fn van_trees_examples() {
        let prior = gaussian_prior(FRAC_PI_2, 0.1, DEFAULT_GRID_POINTS).unwrap();
        // prior FI of a (barely truncated) Gaussian is 1/sigma^2
        let b0 = van_trees_bound(&prior, 0.0).unwrap();
        assert!((b0 - 0.1).abs() < 1e-3 * 0.1, "{b0}");
        let b = van_trees_bound(&prior, 48.0).unwrap();
        assert!((b - 1.0 / 58.0).abs() < 1e-5);
        let flat = crate::bayes::PhaseDistribution::uniform(DEFAULT_GRID_POINTS).unwrap();
        assert!((van_trees_bound(&flat, 20.0).unwrap() - 0.05).abs() < 1e-12);
        assert!(van_trees_bound(&prior, -1.0).is_err());

        let mut holes = vec![1.0; DEFAULT_GRID_POINTS];
        holes[1000] = 0.0;
        let holed = crate::bayes::PhaseDistribution::from_unnormalized(holes).unwrap();
        assert!(matches!(prior_fisher(&holed), Err(Error::DegeneratePrior(_))));
        // tails that underflow to zero are not holes
        let narrow = gaussian_prior(FRAC_PI_2, 1e-3, DEFAULT_GRID_POINTS).unwrap();
        assert!(narrow.density()[0] == 0.0);
        assert!((prior_fisher(&narrow).unwrap() - 1000.0).abs() < 1.0);
    }

    #[test]
    fn quantum_van_trees_examples() {
        assert!((quantum_van_trees(0.1, 0.0).unwrap() - 0.1).abs() < 1e-15);
        assert!((quantum_van_trees(0.1, 2.0).unwrap() - 1.0 / 58.0).abs() < 1e-15);
        assert!((quantum_van_trees(f64::INFINITY, 2.0).unwrap() - 1.0 / 48.0).abs() < 1e-15);
        assert!(quantum_van_trees(0.0, 2.0).is_err());
    }

    #[test]
    fn local_split_examples() {
        let (a2, r) = optimal_local_split(2.0);
        assert!((a2 / 2.0 - 0.6).abs() < 1e-15);
        assert!((a2 + r.sinh().powi(2) - 2.0).abs() < 1e-12);
        assert_eq!(optimal_local_split(0.0), (0.0, 0.0));
        let (a2, r) = optimal_local_split(5.0);
        assert!((a2 - 30.0 / 11.0).abs() < 1e-14);
        assert!((r.sinh().powi(2) - (5.0 - 30.0 / 11.0)).abs() < 1e-12);
    }

    #[test]
    fn lus_angle_examples() {
        assert!((lus_asymptotic_angle(1e-14) - FRAC_PI_2).abs() < 1e-6);
        let r = 2f64.sqrt().asinh();
        assert!((lus_asymptotic_angle(2.0) - (2.0 * r).tanh().acos()).abs() < 1e-15);
        assert!(((2.0 * r).tanh() - 0.979_795_897_113_271_2).abs() < 1e-12);
        assert!(lus_asymptotic_angle(1e6) < 1e-3);
        assert!(lus_asymptotic_angle(1e6) > 0.0);
        assert!(lus_asymptotic_angle(0.5) < PI);
    }
}
