//! APV minimization over probe states with a fixed energy budget.
//!
//! Two one-parameter families are searched directly:
//!
//! - HUS (high uncertainty strategy): `tau = theta0 - pi/2`, `phi = -2 theta0`,
//!   free displacement fraction `|alpha|^2 / E`;
//! - LUS (low uncertainty strategy): squeezed vacuum, free squeezing angle.
//!
//! The full space `(|alpha|, tau, phi)` is searched by multi-start
//! Nelder-Mead; the squeezing strength always follows from the energy budget.
//! `theta0` is the prior mean.

pub mod simplex;

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{self, apv, gaussian_prior, summarize, PhaseDistribution, QuadratureSpec};
use crate::error::{Error, Result};
use crate::fisher::{lus_asymptotic_angle, optimal_local_split};
use crate::gaussian::{angular_distance, wrap_pi, ProbeState};

use simplex::{nelder_mead, scan_and_refine, SimplexOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Hus,
    Lus,
    Full,
}

impl std::fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FamilyKind::Hus => "hus",
            FamilyKind::Lus => "lus",
            FamilyKind::Full => "full",
        })
    }
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hus" => Ok(FamilyKind::Hus),
            "lus" => Ok(FamilyKind::Lus),
            "full" => Ok(FamilyKind::Full),
            other => Err(Error::InvalidParameter(format!("unknown family '{other}'"))),
        }
    }
}

/// A probe family together with its energy budget and the prior mean its
/// angles are bound to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    pub energy: f64,
    pub theta0: f64,
}

impl FamilySpec {
    pub fn new(kind: FamilyKind, energy: f64, theta0: f64) -> Result<Self> {
        if !(energy > 0.0) || !energy.is_finite() {
            return Err(Error::OutOfRange {
                name: "energy",
                value: energy,
                range: "(0, inf)",
            });
        }
        Ok(Self {
            kind,
            energy,
            theta0,
        })
    }

    /// HUS member with `|alpha|^2 = fraction * E`.
    pub fn hus_probe(&self, fraction: f64) -> Result<ProbeState> {
        let alpha = (fraction.clamp(0.0, 1.0) * self.energy).sqrt();
        ProbeState::with_energy(
            self.energy,
            alpha,
            self.theta0 - FRAC_PI_2,
            -2.0 * self.theta0,
        )
    }

    /// LUS member with squeezing angle `phi = relative_angle - 2 theta0`.
    pub fn lus_probe(&self, relative_angle: f64) -> Result<ProbeState> {
        ProbeState::with_energy(self.energy, 0.0, 0.0, relative_angle - 2.0 * self.theta0)
    }

    pub fn full_probe(&self, alpha_mag: f64, tau: f64, phi: f64) -> Result<ProbeState> {
        let alpha = alpha_mag.clamp(0.0, self.energy.sqrt());
        ProbeState::with_energy(self.energy, alpha, tau, phi)
    }

    /// Whether `probe` obeys this family's bindings to within `tol`.
    pub fn contains(&self, probe: &ProbeState, tol: f64) -> bool {
        if (probe.energy() - self.energy).abs() > tol.max(1e-9) {
            return false;
        }
        match self.kind {
            FamilyKind::Hus => {
                angular_distance(probe.tau(), self.theta0 - FRAC_PI_2, PI) <= tol
                    && angular_distance(probe.phi(), -2.0 * self.theta0, TAU) <= tol
            }
            FamilyKind::Lus => probe.alpha_mag() <= tol,
            FamilyKind::Full => probe.alpha_mag() <= self.energy.sqrt() + tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartPoint {
    pub alpha_mag: f64,
    pub tau: f64,
    pub phi: f64,
}

/// Where a local minimum came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartProvenance {
    pub index: usize,
    pub start: StartPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub probe: ProbeState,
    pub apv: f64,
    pub family: FamilySpec,
    pub start: Option<StartProvenance>,
    pub evaluations: usize,
    pub converged: bool,
    /// Set for priors narrower than [`OptimizerSettings::low_confidence_below`].
    pub low_confidence: bool,
}

impl Optimum {
    pub fn alpha2_over_energy(&self) -> f64 {
        self.probe.alpha_mag().powi(2) / self.family.energy
    }

    /// `(|alpha|, tau - theta0, phi + 2 theta0)` reduced by the symmetries of
    /// the APV: `tau -> tau + pi` (outcome sign flip) and the mirror
    /// `(tau - theta0, phi + 2 theta0) -> -(tau - theta0, phi + 2 theta0)`
    /// of a prior symmetric about its mean. The displacement angle is
    /// reported in `[-pi, 0)` and set to zero when the displacement vanishes.
    pub fn canonical(&self) -> [f64; 3] {
        canonical_params(&self.probe, self.family.theta0)
    }
}

pub fn canonical_params(probe: &ProbeState, theta0: f64) -> [f64; 3] {
    let reduce_tau = |a: f64| {
        let y = (a + PI).rem_euclid(PI) - PI;
        if y >= 0.0 {
            y - PI
        } else {
            y
        }
    };
    let mut a = reduce_tau(probe.tau() - theta0);
    let mut b = wrap_pi(probe.phi() + 2.0 * theta0);
    if b < -1e-9 {
        a = reduce_tau(-a);
        b = -b;
    }
    if probe.alpha_mag() < 1e-3 {
        a = 0.0;
    }
    [probe.alpha_mag(), a, b]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub quadrature: QuadratureSpec,
    pub n_grid: usize,
    /// Prior mean used when the optimizer builds its own priors.
    pub theta0: f64,
    pub hus_scan: usize,
    pub lus_scan: usize,
    pub line_tol: f64,
    pub simplex: SimplexOptions,
    pub low_confidence_below: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            quadrature: QuadratureSpec::default(),
            n_grid: bayes::DEFAULT_GRID_POINTS,
            theta0: FRAC_PI_2,
            hus_scan: 21,
            lus_scan: 36,
            line_tol: 1e-7,
            simplex: SimplexOptions::default(),
            low_confidence_below: 0.002,
        }
    }
}

impl OptimizerSettings {
    pub fn prior(&self, sigma2: f64) -> Result<PhaseDistribution> {
        gaussian_prior(self.theta0, sigma2, self.n_grid)
    }
}

fn prior_stats(prior: &PhaseDistribution) -> (f64, f64) {
    let s = summarize(prior);
    (s.mean, s.variance)
}

fn apv_of(probe: &ProbeState, prior: &PhaseDistribution, settings: &OptimizerSettings) -> Result<f64> {
    Ok(apv(probe, prior, &settings.quadrature)?.apv)
}

pub fn optimize_hus(energy: f64, prior: &PhaseDistribution) -> Result<Optimum> {
    optimize_hus_with(energy, prior, &OptimizerSettings::default())
}

/// Minimizes the APV over the displacement fraction of the HUS family.
pub fn optimize_hus_with(
    energy: f64,
    prior: &PhaseDistribution,
    settings: &OptimizerSettings,
) -> Result<Optimum> {
    let (theta0, variance) = prior_stats(prior);
    let family = FamilySpec::new(FamilyKind::Hus, energy, theta0)?;
    let line = scan_and_refine(
        |x| apv_of(&family.hus_probe(x)?, prior, settings),
        0.0,
        1.0,
        settings.hus_scan,
        false,
        settings.line_tol,
    )?;
    Ok(Optimum {
        probe: family.hus_probe(line.x)?,
        apv: line.f,
        family,
        start: None,
        evaluations: line.evals,
        converged: true,
        low_confidence: variance < settings.low_confidence_below,
    })
}

pub fn optimize_lus(energy: f64, prior: &PhaseDistribution) -> Result<Optimum> {
    optimize_lus_with(energy, prior, &OptimizerSettings::default())
}

/// Minimizes the APV over the squeezing angle of a squeezed vacuum.
///
/// The APV of a prior symmetric about its mean is invariant under
/// `phi + 2 theta0 -> -(phi + 2 theta0)`; of two mirror minima with equal APV
/// the one with `phi + 2 theta0` in `[0, pi]` is returned.
pub fn optimize_lus_with(
    energy: f64,
    prior: &PhaseDistribution,
    settings: &OptimizerSettings,
) -> Result<Optimum> {
    let (theta0, variance) = prior_stats(prior);
    let family = FamilySpec::new(FamilyKind::Lus, energy, theta0)?;
    let line = scan_and_refine(
        |x| apv_of(&family.lus_probe(x)?, prior, settings),
        0.0,
        TAU,
        settings.lus_scan,
        true,
        settings.line_tol,
    )?;
    let mut angle = wrap_pi(line.x);
    let mut best = line.f;
    let mut evaluations = line.evals;
    if angle < 0.0 {
        let mirrored = apv_of(&family.lus_probe(-angle)?, prior, settings)?;
        evaluations += 1;
        if mirrored <= best + 1e-12 * best.abs() {
            angle = -angle;
            best = best.min(mirrored);
        }
    }
    Ok(Optimum {
        probe: family.lus_probe(angle)?,
        apv: best,
        family,
        start: None,
        evaluations,
        converged: true,
        low_confidence: variance < settings.low_confidence_below,
    })
}

/// Relative squeezing angle `phi + 2 theta0` of an LUS optimum, in `(-pi, pi]`.
pub fn lus_relative_angle(opt: &Optimum) -> f64 {
    wrap_pi(opt.probe.phi() + 2.0 * opt.family.theta0)
}

/// Eight deterministic starts: four around the HUS line and four squeezed
/// vacua at stratified angles, each with a small fixed offset.
pub fn default_starts(energy: f64, theta0: f64) -> Vec<StartPoint> {
    let sqrt_e = energy.sqrt();
    let mut starts = Vec::with_capacity(8);
    for (k, frac) in [0.35, 0.55, 0.75, 0.95].into_iter().enumerate() {
        let jitter = 0.04 * (k as f64 - 1.5);
        starts.push(StartPoint {
            alpha_mag: (frac * energy).sqrt(),
            tau: theta0 - FRAC_PI_2 + jitter,
            phi: -2.0 * theta0 - jitter,
        });
    }
    for k in 0..4 {
        let rel = lus_asymptotic_angle(energy) + FRAC_PI_2 * k as f64;
        starts.push(StartPoint {
            alpha_mag: 0.02 * sqrt_e,
            tau: theta0 + 0.3 * k as f64,
            phi: rel - 2.0 * theta0,
        });
    }
    starts
}

/// Outcome of one start of the full search.
#[derive(Debug, Clone, Serialize)]
pub struct StartOutcome {
    pub provenance: StartProvenance,
    pub result: std::result::Result<Optimum, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FullSearch {
    /// Distinct local minima, best first.
    pub minima: Vec<Optimum>,
    pub runs: Vec<StartOutcome>,
}

const DEDUP_APV_TOL: f64 = 1e-7;
const DEDUP_PARAM_TOL: f64 = 1e-3;

fn same_minimum(a: &Optimum, b: &Optimum) -> bool {
    if (a.apv - b.apv).abs() > DEDUP_APV_TOL {
        return false;
    }
    let (ca, cb) = (a.canonical(), b.canonical());
    (ca[0] - cb[0]).abs() <= DEDUP_PARAM_TOL
        && angular_distance(ca[1], cb[1], PI) <= DEDUP_PARAM_TOL
        && angular_distance(ca[2], cb[2], TAU) <= DEDUP_PARAM_TOL
}

pub fn optimize_full(
    energy: f64,
    prior: &PhaseDistribution,
    starts: &[StartPoint],
) -> Result<FullSearch> {
    optimize_full_with(energy, prior, starts, &OptimizerSettings::default())
}

/// Local minimization from every start over `(|alpha|, tau, phi)`.
///
/// The displacement is searched as `|alpha| = sqrt(E) |sin u|`, which keeps
/// it inside `[0, sqrt(E)]` while leaving both bounds reachable. Each run is
/// restarted once from its own result. Runs that fail are reported in
/// [`FullSearch::runs`] and do not stop the others.
pub fn optimize_full_with(
    energy: f64,
    prior: &PhaseDistribution,
    starts: &[StartPoint],
    settings: &OptimizerSettings,
) -> Result<FullSearch> {
    if starts.len() < 2 {
        return Err(Error::InvalidParameter(
            "the full search needs at least two starts".into(),
        ));
    }
    let (theta0, variance) = prior_stats(prior);
    let family = FamilySpec::new(FamilyKind::Full, energy, theta0)?;
    let sqrt_e = energy.sqrt();
    let to_probe = |x: &[f64]| family.full_probe(sqrt_e * x[0].sin().abs(), x[1], x[2]);

    let runs: Vec<StartOutcome> = starts
        .par_iter()
        .enumerate()
        .map(|(index, start)| {
            let provenance = StartProvenance {
                index,
                start: *start,
            };
            let run = || -> Result<Optimum> {
                let u0 = (start.alpha_mag / sqrt_e).clamp(0.0, 1.0).asin();
                let objective = |x: &[f64]| apv_of(&to_probe(x)?, prior, settings);
                let first = nelder_mead(
                    objective,
                    &[u0, start.tau, start.phi],
                    &[0.15, 0.3, 0.3],
                    &settings.simplex,
                )?;
                let second = nelder_mead(objective, &first.x, &[0.02, 0.05, 0.05], &settings.simplex)?;
                let (best, evals) = (second.clone(), first.evals + second.evals);
                if !best.converged {
                    return Err(Error::Optimization(format!(
                        "no convergence after {evals} evaluations (apv {})",
                        best.f
                    )));
                }
                Ok(Optimum {
                    probe: to_probe(&best.x)?,
                    apv: best.f,
                    family,
                    start: Some(provenance),
                    evaluations: evals,
                    converged: true,
                    low_confidence: variance < settings.low_confidence_below,
                })
            };
            StartOutcome {
                provenance,
                result: run().map_err(|e| e.to_string()),
            }
        })
        .collect();

    let mut found: Vec<Optimum> = runs.iter().filter_map(|r| r.result.as_ref().ok().copied()).collect();
    found.sort_by(|a, b| a.apv.total_cmp(&b.apv));
    let mut minima: Vec<Optimum> = Vec::new();
    for opt in found {
        if !minima.iter().any(|m| same_minimum(m, &opt)) {
            minima.push(opt);
        }
    }
    Ok(FullSearch { minima, runs })
}

/// One line of a variance sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub energy: f64,
    pub sigma2: f64,
    pub family: FamilyKind,
    pub optimum: std::result::Result<Optimum, String>,
}

impl SweepRow {
    /// Frequentist reference for the row's family: `(E+1)/(2E+1)` for the HUS
    /// split, the asymptotic squeezing angle for the LUS.
    pub fn reference(&self) -> f64 {
        match self.family {
            FamilyKind::Hus => optimal_local_split(self.energy).0 / self.energy,
            FamilyKind::Lus => lus_asymptotic_angle(self.energy),
            FamilyKind::Full => f64::NAN,
        }
    }
}

/// Best optimum of a family for one prior. The full family uses
/// [`default_starts`] and returns the lowest minimum.
pub fn optimize_family(
    kind: FamilyKind,
    energy: f64,
    prior: &PhaseDistribution,
    settings: &OptimizerSettings,
) -> Result<Optimum> {
    match kind {
        FamilyKind::Hus => optimize_hus_with(energy, prior, settings),
        FamilyKind::Lus => optimize_lus_with(energy, prior, settings),
        FamilyKind::Full => {
            let theta0 = summarize(prior).mean;
            let search = optimize_full_with(energy, prior, &default_starts(energy, theta0), settings)?;
            search
                .minima
                .into_iter()
                .next()
                .ok_or_else(|| Error::Optimization("no start converged".into()))
        }
    }
}

/// Runs the family optimization for every prior variance. Failed points are
/// kept as rows carrying the failure reason.
pub fn sweep(
    energy: f64,
    sigma2_values: &[f64],
    family: FamilyKind,
    settings: &OptimizerSettings,
) -> Result<Vec<SweepRow>> {
    if let Some(bad) = sigma2_values
        .iter()
        .find(|s| !(**s > 0.0 && **s <= bayes::MAX_PRIOR_VARIANCE))
    {
        return Err(Error::OutOfRange {
            name: "sweep variance",
            value: *bad,
            range: "(0, 0.2]",
        });
    }
    FamilySpec::new(family, energy, settings.theta0)?;
    Ok(sigma2_values
        .par_iter()
        .map(|&sigma2| {
            let optimum = settings
                .prior(sigma2)
                .and_then(|prior| optimize_family(family, energy, &prior, settings))
                .map_err(|e| e.to_string());
            SweepRow {
                energy,
                sigma2,
                family,
                optimum,
            }
        })
        .collect())
}

pub const SWEEP_HEADER: &str =
    "E,sigma2,alpha2_over_E,tau,phi,apv,apv_over_sigma2,relative_tau,relative_phi,reference,low_confidence,status";

/// CSV lines for sweep rows (without header). Angles relative to the prior
/// mean are reported next to the raw ones; `reference` is
/// [`SweepRow::reference`].
pub fn sweep_rows_csv(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    for row in rows {
        match &row.optimum {
            Ok(opt) => {
                let c = opt.canonical();
                let _ = writeln!(
                    out,
                    "{},{},{:.10},{:.10},{:.10},{:.12e},{:.10},{:.10},{:.10},{:.10},{},ok",
                    row.energy,
                    row.sigma2,
                    opt.alpha2_over_energy(),
                    opt.probe.tau(),
                    opt.probe.phi(),
                    opt.apv,
                    opt.apv / row.sigma2,
                    c[1],
                    c[2],
                    row.reference(),
                    opt.low_confidence
                );
            }
            Err(reason) => {
                let _ = writeln!(
                    out,
                    "{},{},,,,,,,,{:.10},,failed: {}",
                    row.energy,
                    row.sigma2,
                    row.reference(),
                    reason.replace(',', ";")
                );
            }
        }
    }
    out
}

/// Location where the optimized HUS and LUS APVs cross.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Crossover {
    pub energy: f64,
    pub sigma2: f64,
    pub bracket: (f64, f64),
    /// Every `(sigma2, apv_hus, apv_lus)` evaluated on the way.
    pub evaluations: Vec<(f64, f64, f64)>,
}

fn family_gap(energy: f64, sigma2: f64, settings: &OptimizerSettings) -> Result<(f64, f64)> {
    let prior = settings.prior(sigma2)?;
    let (h, l) = rayon::join(
        || optimize_hus_with(energy, &prior, settings),
        || optimize_lus_with(energy, &prior, settings),
    );
    Ok((h?.apv, l?.apv))
}

/// Bisects `sign(APV_HUS - APV_LUS)` in the prior variance to `resolution`.
///
/// Expects the LUS to win at `lo` and the HUS at `hi`; anything else is an
/// optimization failure (no bracket).
pub fn find_crossover(
    energy: f64,
    lo: f64,
    hi: f64,
    resolution: f64,
    settings: &OptimizerSettings,
) -> Result<Crossover> {
    if !(lo > 0.0 && hi > lo && hi <= bayes::MAX_PRIOR_VARIANCE) {
        return Err(Error::InvalidParameter(format!("bad crossover bracket [{lo}, {hi}]")));
    }
    let mut evaluations = Vec::new();
    let mut gap = |s: f64| -> Result<f64> {
        let (h, l) = family_gap(energy, s, settings)?;
        evaluations.push((s, h, l));
        Ok(h - l)
    };
    let (mut a, mut b) = (lo, hi);
    let ga = gap(a)?;
    let gb = gap(b)?;
    if !(ga > 0.0 && gb < 0.0) {
        return Err(Error::Optimization(format!(
            "no crossover bracketed in [{lo}, {hi}] for E = {energy} (gaps {ga:.3e}, {gb:.3e})"
        )));
    }
    while b - a > resolution {
        let m = 0.5 * (a + b);
        if gap(m)? > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(Crossover {
        energy,
        sigma2: 0.5 * (a + b),
        bracket: (a, b),
        evaluations,
    })
}

/// Lower of the optimized HUS and LUS APVs.
pub fn best_family_apv(energy: f64, prior: &PhaseDistribution, settings: &OptimizerSettings) -> Result<Optimum> {
    let h = optimize_hus_with(energy, prior, settings)?;
    let l = optimize_lus_with(energy, prior, settings)?;
    Ok(if h.apv <= l.apv { h } else { l })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::DEFAULT_GRID_POINTS;

    fn prior(s2: f64) -> PhaseDistribution {
        gaussian_prior(FRAC_PI_2, s2, DEFAULT_GRID_POINTS).unwrap()
    }

    #[test]
    fn canonical_params_respect_symmetries() {
        let t0 = FRAC_PI_2;
        let p = ProbeState::new(1.0, t0 - 1.2, 0.4, 0.3 - 2.0 * t0).unwrap();
        let shifted = ProbeState::new(1.0, t0 - 1.2 + PI, 0.4, 0.3 - 2.0 * t0).unwrap();
        let mirrored = ProbeState::new(1.0, t0 + 1.2, 0.4, -0.3 - 2.0 * t0).unwrap();
        let c = canonical_params(&p, t0);
        for other in [shifted, mirrored] {
            let d = canonical_params(&other, t0);
            for k in 0..3 {
                assert!((c[k] - d[k]).abs() < 1e-12, "{c:?} {d:?}");
            }
        }
        assert!(c[1] >= -PI && c[1] < 0.0 && c[2] >= 0.0);
    }

    #[test]
    fn hus_examples() {
        let settings = OptimizerSettings::default();
        let wide = optimize_hus_with(2.0, &prior(0.2), &settings).unwrap();
        assert!(wide.alpha2_over_energy() > 0.6);
        assert!(wide.family.contains(&wide.probe, 1e-6));
        assert!((wide.probe.energy() - 2.0).abs() < 1e-9);
        for s2 in [0.01, 0.2] {
            let p = prior(s2);
            let opt = optimize_hus_with(2.0, &p, &settings).unwrap();
            for frac in [0.6, 1.0] {
                let probe = opt.family.hus_probe(frac).unwrap();
                assert!(opt.apv <= apv_of(&probe, &p, &settings).unwrap() + 1e-12);
            }
            // local minimality under small perturbations of the free parameter
            let x = opt.alpha2_over_energy();
            for dx in [-1e-3, 1e-3] {
                if (0.0..=1.0).contains(&(x + dx)) {
                    let probe = opt.family.hus_probe(x + dx).unwrap();
                    assert!(apv_of(&probe, &p, &settings).unwrap() >= opt.apv - 1e-9);
                }
            }
        }
        assert!(optimize_hus(2.0, &prior(0.001)).unwrap().low_confidence);
    }

    #[test]
    fn lus_examples() {
        let settings = OptimizerSettings::default();
        let mut last = 0.0;
        for s2 in [0.002, 0.01, 0.05, 0.2] {
            let p = prior(s2);
            let opt = optimize_lus_with(2.0, &p, &settings).unwrap();
            let angle = lus_relative_angle(&opt);
            assert!(angle > last, "angle {angle} at {s2} not above {last}");
            last = angle;
            assert!(opt.probe.alpha_mag() == 0.0 && opt.family.contains(&opt.probe, 1e-6));
            for rel in [0.0, lus_asymptotic_angle(2.0)] {
                let probe = opt.family.lus_probe(rel).unwrap();
                assert!(opt.apv <= apv_of(&probe, &p, &settings).unwrap() + 1e-12);
            }
        }
    }

    #[test]
    fn optimal_apv_decreases_with_energy() {
        let p = prior(0.1);
        let settings = OptimizerSettings::default();
        let values: Vec<f64> = [0.5, 1.0, 2.0, 5.0]
            .iter()
            .map(|&e| best_family_apv(e, &p, &settings).unwrap().apv)
            .collect();
        assert!(values.windows(2).all(|w| w[1] <= w[0]), "{values:?}");
    }

    #[test]
    fn sweep_rows_and_validation() {
        let settings = OptimizerSettings {
            n_grid: 1001,
            ..OptimizerSettings::default()
        };
        assert!(sweep(2.0, &[0.1, 0.3], FamilyKind::Hus, &settings).is_err());
        assert!(sweep(2.0, &[0.0], FamilyKind::Hus, &settings).is_err());
        let rows = sweep(2.0, &[0.01, 0.1], FamilyKind::Lus, &settings).unwrap();
        for row in &rows {
            let opt = row.optimum.as_ref().unwrap();
            let ratio = opt.apv / row.sigma2;
            assert!(ratio > 0.0 && ratio <= 1.0);
        }
        let csv = sweep_rows_csv(&rows);
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(
            csv.lines().next().unwrap().split(',').count(),
            SWEEP_HEADER.split(',').count()
        );
    }

    #[test]
    fn full_search_needs_two_starts() {
        let p = prior(0.1);
        let one = &default_starts(0.5, FRAC_PI_2)[..1];
        assert!(optimize_full(0.5, &p, one).is_err());
        assert_eq!(default_starts(0.5, FRAC_PI_2).len(), 8);
    }

    #[test]
    fn family_parse_and_bad_energy() {
        assert_eq!("LUS".parse::<FamilyKind>().unwrap(), FamilyKind::Lus);
        assert!("mixed".parse::<FamilyKind>().is_err());
        assert!(FamilySpec::new(FamilyKind::Hus, 0.0, 0.0).is_err());
        assert!(find_crossover(2.0, 0.1, 0.05, 1e-4, &OptimizerSettings::default()).is_err());
    }
}
