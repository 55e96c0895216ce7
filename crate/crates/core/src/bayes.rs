//! Grid-based Bayesian engine for the phase on `[0, pi]`.
//!
//! Distributions live on a uniform grid `theta_i = i * pi / (n - 1)` and all
//! integrals over `theta` use the trapezoid rule on that grid. The average
//! posterior variance (APV) adds an outer trapezoid rule over the homodyne
//! outcome `q`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::ProbeState;
use crate::homodyne::{self, outcome_params};

pub const DEFAULT_GRID_POINTS: usize = 2001;
pub const MIN_GRID_POINTS: usize = 501;
pub const MAX_PRIOR_VARIANCE: f64 = 0.2;
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Densities below this fraction of the peak are dropped from the APV kernel.
const SUPPORT_CUTOFF: f64 = 1e-25;

/// Probability density over the phase, sampled on a uniform grid over `[0, pi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDistribution {
    step: f64,
    density: Vec<f64>,
}

/// Posterior mean and variance of a distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub variance: f64,
}

/// Posterior summary together with the outcome that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub variance: f64,
    pub outcome: f64,
}

impl PhaseDistribution {
    /// Builds a distribution from raw non-negative weights on the `n`-point
    /// grid, normalizing them.
    pub fn from_unnormalized(density: Vec<f64>) -> Result<Self> {
        let n = density.len();
        if n < MIN_GRID_POINTS {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least {MIN_GRID_POINTS} points, got {n}"
            )));
        }
        if density.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::InvalidParameter(
                "density must be finite and non-negative".into(),
            ));
        }
        let mut dist = Self {
            step: PI / (n - 1) as f64,
            density,
        };
        let mass = dist.mass();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::DegeneratePrior(format!("total mass {mass}")));
        }
        dist.density.iter_mut().for_each(|d| *d /= mass);
        Ok(dist)
    }

    pub fn uniform(n_grid: usize) -> Result<Self> {
        Self::from_unnormalized(vec![1.0; n_grid])
    }

    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn theta(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.theta(i)).collect()
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Trapezoid weight of grid point `i`.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.len() {
            0.5 * self.step
        } else {
            self.step
        }
    }

    pub fn mass(&self) -> f64 {
        self.density
            .iter()
            .enumerate()
            .map(|(i, d)| self.weight(i) * d)
            .sum()
    }

    pub fn check_normalized(&self) -> Result<()> {
        let mass = self.mass();
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized { mass });
        }
        Ok(())
    }

    /// Trapezoid integral of `f(theta) p(theta)`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.density
            .iter()
            .enumerate()
            .map(|(i, d)| self.weight(i) * d * f(self.theta(i)))
            .sum()
    }

    /// Trapezoid-weighted probability masses; they sum to one for a
    /// normalized distribution.
    pub fn point_masses(&self) -> Vec<f64> {
        self.density
            .iter()
            .enumerate()
            .map(|(i, d)| self.weight(i) * d)
            .collect()
    }

    /// Writes `theta,density` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,density\n");
        for (i, d) in self.density.iter().enumerate() {
            let _ = writeln!(out, "{:.17e},{:.17e}", self.theta(i), d);
        }
        out
    }

    /// Parses the format written by [`to_csv`](Self::to_csv). Lines starting
    /// with `#` are ignored. The grid must be uniform over `[0, pi]`.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut thetas = Vec::new();
        let mut density = Vec::new();
        let mut header_seen = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                if line.replace(' ', "") != "theta,density" {
                    return Err(Error::Parse(format!("expected header 'theta,density', got '{line}'")));
                }
                header_seen = true;
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.ok_or_else(|| Error::Parse(format!("line {}: missing column", lineno + 1)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            thetas.push(parse(parts.next())?);
            density.push(parse(parts.next())?);
        }
        let n = thetas.len();
        if n < MIN_GRID_POINTS {
            return Err(Error::Parse(format!("need at least {MIN_GRID_POINTS} rows, got {n}")));
        }
        let step = PI / (n - 1) as f64;
        for (i, t) in thetas.iter().enumerate() {
            if (t - i as f64 * step).abs() > 1e-9 {
                return Err(Error::Parse(format!(
                    "grid is not uniform on [0, pi]: row {i} has theta = {t}"
                )));
            }
        }
        let dist = Self::from_unnormalized(density)?;
        Ok(dist)
    }
}

/// Normal density restricted to the grid and renormalized.
///
/// `sigma2` is limited to `(0, 0.2]`, where less than 0.05% of the untruncated
/// mass lies outside `[0, pi]` for a centred mean; `allow_wide` lifts the
/// upper limit.
pub fn gaussian_prior_with(
    mean: f64,
    sigma2: f64,
    n_grid: usize,
    allow_wide: bool,
) -> Result<PhaseDistribution> {
    if !(0.0..PI).contains(&mean) {
        return Err(Error::OutOfRange {
            name: "prior mean",
            value: mean,
            range: "[0, pi)",
        });
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) || (!allow_wide && sigma2 > MAX_PRIOR_VARIANCE) {
        return Err(Error::OutOfRange {
            name: "prior variance",
            value: sigma2,
            range: "(0, 0.2]",
        });
    }
    if n_grid < MIN_GRID_POINTS {
        return Err(Error::InvalidParameter(format!(
            "grid needs at least {MIN_GRID_POINTS} points, got {n_grid}"
        )));
    }
    let step = PI / (n_grid - 1) as f64;
    let density = (0..n_grid)
        .map(|i| {
            let d = i as f64 * step - mean;
            (-d * d / (2.0 * sigma2)).exp()
        })
        .collect();
    PhaseDistribution::from_unnormalized(density)
}

pub fn gaussian_prior(mean: f64, sigma2: f64, n_grid: usize) -> Result<PhaseDistribution> {
    gaussian_prior_with(mean, sigma2, n_grid, false)
}

/// Fraction of a normal distribution's mass that falls outside `[0, pi]`,
/// estimated by comparing the grid mass of the unnormalized density with
/// `sqrt(2 pi sigma2)`.
pub fn gaussian_truncation_loss(mean: f64, sigma2: f64, n_grid: usize) -> f64 {
    let step = PI / (n_grid - 1) as f64;
    let raw: f64 = (0..n_grid)
        .map(|i| {
            let d = i as f64 * step - mean;
            let w = if i == 0 || i + 1 == n_grid { 0.5 } else { 1.0 };
            w * step * (-d * d / (2.0 * sigma2)).exp()
        })
        .sum();
    1.0 - raw / (2.0 * PI * sigma2).sqrt()
}

/// Mean and variance by trapezoid quadrature.
pub fn summarize(dist: &PhaseDistribution) -> Summary {
    let mean = dist.expect(|t| t);
    let variance = dist.expect(|t| (t - mean) * (t - mean)).max(0.0);
    Summary { mean, variance }
}

/// Precomputed per-grid-point terms of `log p(theta) + log p(q | theta)` for
/// a fixed prior and probe, reused across many outcomes.
#[derive(Debug, Clone)]
pub struct BayesUpdate {
    step: f64,
    n: usize,
    /// `log p(theta_j) - 0.5 log(pi S_j)`; `-inf` where the prior vanishes.
    offset: Vec<f64>,
    mu: Vec<f64>,
    inv_width: Vec<f64>,
}

impl BayesUpdate {
    pub fn new(prior: &PhaseDistribution, probe: &ProbeState) -> Result<Self> {
        prior.check_normalized()?;
        let n = prior.len();
        let mut offset = Vec::with_capacity(n);
        let mut mu = Vec::with_capacity(n);
        let mut inv_width = Vec::with_capacity(n);
        for (i, &p) in prior.density.iter().enumerate() {
            let hp = outcome_params(probe, prior.theta(i));
            let s = hp.width();
            offset.push(if p > 0.0 {
                p.ln() - 0.5 * (PI * s).ln()
            } else {
                f64::NEG_INFINITY
            });
            mu.push(hp.mu);
            inv_width.push(1.0 / s);
        }
        Ok(Self {
            step: prior.step,
            n,
            offset,
            mu,
            inv_width,
        })
    }

    fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n {
            0.5 * self.step
        } else {
            self.step
        }
    }

    /// Posterior after observing `q`. Computed in log space; fails only when
    /// the marginal probability of `q` itself underflows.
    pub fn update(&self, q: f64) -> Result<PhaseDistribution> {
        let mut logs: Vec<f64> = self
            .offset
            .iter()
            .zip(&self.mu)
            .zip(&self.inv_width)
            .map(|((o, m), iw)| {
                let d = q - m;
                o - d * d * iw
            })
            .collect();
        let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(Error::PosteriorUnderflow {
                q,
                log_mass: f64::NEG_INFINITY,
            });
        }
        let mut mass = 0.0;
        for (i, l) in logs.iter_mut().enumerate() {
            *l = (*l - peak).exp();
            mass += self.weight(i) * *l;
        }
        let log_mass = peak + mass.ln();
        if log_mass < f64::MIN_POSITIVE.ln() || !log_mass.is_finite() {
            return Err(Error::PosteriorUnderflow { q, log_mass });
        }
        logs.iter_mut().for_each(|d| *d /= mass);
        Ok(PhaseDistribution {
            step: self.step,
            density: logs,
        })
    }
}

/// Bayes rule on the grid: `p(theta | q) ~ p(q | theta) p(theta)`.
pub fn posterior_update(
    prior: &PhaseDistribution,
    probe: &ProbeState,
    q: f64,
) -> Result<PhaseDistribution> {
    BayesUpdate::new(prior, probe)?.update(q)
}

/// `p(q) = integral p(q | theta) p(theta) dtheta`.
pub fn marginal_density(prior: &PhaseDistribution, probe: &ProbeState, q: f64) -> f64 {
    prior.expect(|t| homodyne::likelihood(probe, t, q))
}

/// Outer quadrature settings for [`apv`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Number of uniformly spaced outcome points.
    pub n_q: usize,
    /// Half-width of the outcome window in units of the largest outcome
    /// standard deviation.
    pub width_sigmas: f64,
    /// Half-width, in prior standard deviations, of the phase interval used
    /// to locate the outcome window.
    pub theta_sigmas: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            n_q: 801,
            width_sigmas: 8.0,
            theta_sigmas: 5.0,
        }
    }
}

/// APV together with the quadrature metadata needed to audit it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApvReport {
    pub apv: f64,
    pub prior_mean: f64,
    pub prior_variance: f64,
    /// Variance of the posterior mean under `p(q)`.
    pub variance_of_means: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub n_q: usize,
    /// `integral p(q) dq` over the window before renormalization.
    pub captured_mass: f64,
    /// Mass at outcomes whose marginal underflowed and were dropped.
    pub excluded_mass: f64,
    pub excluded_points: usize,
}

/// Average posterior variance `integral p(q) V_post(q) dq`.
pub fn apv(
    probe: &ProbeState,
    prior: &PhaseDistribution,
    spec: &QuadratureSpec,
) -> Result<ApvReport> {
    prior.check_normalized()?;
    if spec.n_q < 3 || !(spec.width_sigmas > 0.0) || !(spec.theta_sigmas > 0.0) {
        return Err(Error::InvalidParameter(format!("bad quadrature spec {spec:?}")));
    }
    let s0 = summarize(prior);
    let prior_sd = s0.variance.sqrt();

    let peak = prior.density.iter().copied().fold(0.0, f64::max);
    let cutoff = peak * SUPPORT_CUTOFF;
    let lo_theta = s0.mean - spec.theta_sigmas * prior_sd;
    let hi_theta = s0.mean + spec.theta_sigmas * prior_sd;

    // per-point kernel terms on the prior support
    let mut centred = Vec::new();
    let mut coef = Vec::new();
    let mut mu = Vec::new();
    let mut inv_width = Vec::new();
    let (mut mu_min, mut mu_max, mut s_max) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for (i, &p) in prior.density.iter().enumerate() {
        let theta = prior.theta(i);
        let hp = outcome_params(probe, theta);
        if theta >= lo_theta && theta <= hi_theta {
            mu_min = mu_min.min(hp.mu);
            mu_max = mu_max.max(hp.mu);
            s_max = s_max.max(hp.sigma2.sqrt());
        }
        if p <= cutoff {
            continue;
        }
        let s = hp.width();
        centred.push(theta - s0.mean);
        coef.push(prior.weight(i) * p / (PI * s).sqrt());
        mu.push(hp.mu);
        inv_width.push(1.0 / s);
    }
    if !mu_min.is_finite() {
        // window narrower than the grid spacing: fall back to the whole grid
        for i in 0..prior.len() {
            let hp = outcome_params(probe, prior.theta(i));
            mu_min = mu_min.min(hp.mu);
            mu_max = mu_max.max(hp.mu);
            s_max = s_max.max(hp.sigma2.sqrt());
        }
    }
    let q_min = mu_min - spec.width_sigmas * s_max;
    let q_max = mu_max + spec.width_sigmas * s_max;
    let hq = (q_max - q_min) / (spec.n_q - 1) as f64;

    let sums: Vec<[f64; 3]> = (0..spec.n_q)
        .into_par_iter()
        .map(|k| {
            let q = q_min + k as f64 * hq;
            let mut acc = [0.0f64; 3];
            for j in 0..coef.len() {
                let d = q - mu[j];
                let e = d * d * inv_width[j];
                if e > 745.0 {
                    continue;
                }
                let u = coef[j] * (-e).exp();
                let x = centred[j];
                acc[0] += u;
                acc[1] += u * x;
                acc[2] += u * x * x;
            }
            acc
        })
        .collect();

    let mut mass = 0.0;
    let mut excluded_points = 0;
    let mut weighted_var = 0.0;
    let mut first = 0.0;
    for (k, s) in sums.iter().enumerate() {
        let wq = if k == 0 || k + 1 == spec.n_q { 0.5 * hq } else { hq };
        if !(s[0] > 0.0) || !s[0].is_finite() {
            excluded_points += 1;
            continue;
        }
        let m = s[1] / s[0];
        let v = (s[2] / s[0] - m * m).max(0.0);
        mass += wq * s[0];
        weighted_var += wq * s[0] * v;
        first += wq * s[1];
    }
    if !(mass > 0.0) {
        return Err(Error::Optimization(
            "outcome window captured no probability mass".into(),
        ));
    }
    let mean_of_means = first / mass;
    let mut var_means = 0.0;
    for (k, s) in sums.iter().enumerate() {
        if !(s[0] > 0.0) || !s[0].is_finite() {
            continue;
        }
        let wq = if k == 0 || k + 1 == spec.n_q { 0.5 * hq } else { hq };
        let m = s[1] / s[0];
        var_means += wq * s[0] * (m - mean_of_means).powi(2);
    }

    Ok(ApvReport {
        apv: weighted_var / mass,
        prior_mean: s0.mean,
        prior_variance: s0.variance,
        variance_of_means: var_means / mass,
        q_min,
        q_max,
        n_q: spec.n_q,
        captured_mass: mass,
        excluded_mass: (1.0 - mass).max(0.0),
        excluded_points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n_samples: usize,
    /// Samples whose posterior update underflowed; excluded from the mean.
    pub failures: usize,
}

/// Draws a grid index from the trapezoid point masses of `dist`.
pub(crate) fn sample_index<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let total = *cdf.last().expect("non-empty cdf");
    let u: f64 = rng.random::<f64>() * total;
    cdf.partition_point(|c| *c <= u).min(cdf.len() - 1)
}

pub(crate) fn cumulative(dist: &PhaseDistribution) -> Vec<f64> {
    let mut acc = 0.0;
    dist.point_masses()
        .into_iter()
        .map(|m| {
            acc += m;
            acc
        })
        .collect()
}

/// Monte Carlo APV: `theta ~ prior`, `q ~ p(q | theta)`, then the exact grid
/// posterior for each draw.
///
/// Phases are drawn from the trapezoid point masses of the prior, i.e. from
/// the same discrete measure the quadrature integrates against.
pub fn apv_monte_carlo<R: Rng + ?Sized>(
    probe: &ProbeState,
    prior: &PhaseDistribution,
    n_samples: usize,
    rng: &mut R,
) -> Result<MonteCarloEstimate> {
    if n_samples < 1000 {
        return Err(Error::InvalidParameter(format!(
            "Monte Carlo APV needs at least 1000 samples, got {n_samples}"
        )));
    }
    let updater = BayesUpdate::new(prior, probe)?;
    let cdf = cumulative(prior);
    let (mut count, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
    let mut failures = 0;
    for _ in 0..n_samples {
        let theta = prior.theta(sample_index(&cdf, rng));
        let q = homodyne::sample_outcome(probe, theta, rng);
        match updater.update(q) {
            Ok(post) => {
                let v = summarize(&post).variance;
                count += 1;
                let delta = v - mean;
                mean += delta / count as f64;
                m2 += delta * (v - mean);
            }
            Err(Error::PosteriorUnderflow { .. }) => failures += 1,
            Err(e) => return Err(e),
        }
    }
    if count < 2 {
        return Err(Error::Optimization("all Monte Carlo samples underflowed".into()));
    }
    let sd = (m2 / (count - 1) as f64).sqrt();
    Ok(MonteCarloEstimate {
        estimate: mean,
        std_error: sd / (count as f64).sqrt(),
        n_samples,
        failures,
    })
}
