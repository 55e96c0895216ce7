//! Repeated measurements with sequential Bayesian updating.
//!
//! Each trajectory draws a true phase from the prior, then measures for a
//! number of rounds, feeding each posterior in as the next prior. The update
//! always uses the exact grid posterior; probe selection sees only its mean
//! and variance (a Gaussian re-approximation).

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{self, cumulative, sample_index, summarize, BayesUpdate, PhaseDistribution, PosteriorSummary};
use crate::error::{Error, Result};
use crate::fisher::optimal_local_split;
use crate::gaussian::ProbeState;
use crate::homodyne::sample_outcome;
use crate::optimizer::{
    lus_relative_angle, optimize_hus_with, optimize_lus_with, FamilyKind, OptimizerSettings,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    /// Locally optimal split, angles fixed at the initial prior mean.
    FixedLocal,
    /// Split optimized for the initial prior, angles fixed.
    FixedBayes,
    /// Locally optimal split, angles follow the running estimate.
    AngleAdaptiveLocal,
    /// Split optimized for the initial prior, angles follow the running estimate.
    AngleAdaptiveBayes,
    /// Split taken from a schedule of expected variances computed in advance.
    Predetermined,
    /// Probe re-optimized for the current posterior variance every round.
    FullyAdaptive,
}

impl Tier {
    pub const ALL: [Tier; 6] = [
        Tier::FixedLocal,
        Tier::FixedBayes,
        Tier::AngleAdaptiveLocal,
        Tier::AngleAdaptiveBayes,
        Tier::Predetermined,
        Tier::FullyAdaptive,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Tier::FixedLocal => "fixed-local",
            Tier::FixedBayes => "fixed-bayes",
            Tier::AngleAdaptiveLocal => "angle-adaptive-local",
            Tier::AngleAdaptiveBayes => "angle-adaptive-bayes",
            Tier::Predetermined => "predetermined",
            Tier::FullyAdaptive => "fully-adaptive",
        }
    }

    fn tracks_angles(&self) -> bool {
        !matches!(self, Tier::FixedLocal | Tier::FixedBayes)
    }
}

impl std::fmt::Display for Tier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Tier::ALL
            .into_iter()
            .find(|t| t.name() == key || format!("{t:?}").to_ascii_lowercase() == key.replace('-', ""))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown strategy tier '{s}'")))
    }
}

/// Gaussian on the grid whose mean and variance match `mean` and `variance`.
#[derive(Debug, Clone, PartialEq)]
pub struct Refit {
    pub dist: PhaseDistribution,
    /// The target variance exceeded the prior limit and was lowered to it.
    pub clamped: bool,
    /// Moment matching did not reach `1e-10` and the plain Gaussian was used.
    pub unmatched: bool,
}

fn raw_gaussian(centre: f64, s2: f64, n_grid: usize) -> Result<PhaseDistribution> {
    let step = PI / (n_grid - 1) as f64;
    PhaseDistribution::from_unnormalized(
        (0..n_grid)
            .map(|i| {
                let d = i as f64 * step - centre;
                (-d * d / (2.0 * s2)).exp()
            })
            .collect(),
    )
}

/// Truncated Gaussian with the given mean and variance on `[0, pi]`.
///
/// The location and scale parameters are iterated until the truncated,
/// discretized moments match the targets.
pub fn matched_gaussian(mean: f64, variance: f64, n_grid: usize) -> Result<Refit> {
    if !(0.0..=PI).contains(&mean) {
        return Err(Error::OutOfRange {
            name: "mean",
            value: mean,
            range: "[0, pi]",
        });
    }
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::OutOfRange {
            name: "variance",
            value: variance,
            range: "(0, 0.2]",
        });
    }
    if n_grid < bayes::MIN_GRID_POINTS {
        return Err(Error::InvalidParameter(format!(
            "grid needs at least {} points, got {n_grid}",
            bayes::MIN_GRID_POINTS
        )));
    }
    let clamped = variance > bayes::MAX_PRIOR_VARIANCE;
    let target_var = variance.min(bayes::MAX_PRIOR_VARIANCE);
    let (mut m, mut s2) = (mean, target_var);
    for _ in 0..200 {
        let dist = raw_gaussian(m, s2, n_grid)?;
        let s = summarize(&dist);
        let (dm, rv) = (mean - s.mean, target_var / s.variance);
        if dm.abs() < 1e-12 && (rv - 1.0).abs() < 1e-10 {
            return Ok(Refit {
                dist,
                clamped,
                unmatched: false,
            });
        }
        if !rv.is_finite() || s.variance <= 0.0 {
            break;
        }
        m += dm;
        s2 *= rv;
    }
    Ok(Refit {
        dist: raw_gaussian(mean, target_var, n_grid)?,
        clamped,
        unmatched: true,
    })
}

/// Gaussian with the mean and variance of `dist`, on the same grid.
pub fn gaussian_refit(dist: &PhaseDistribution) -> Result<Refit> {
    dist.check_normalized()?;
    let s = summarize(dist);
    matched_gaussian(s.mean, s.variance, dist.len())
}

/// One round of a precomputed schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    /// Expected prior variance entering the round.
    pub sigma2: f64,
    /// Optimal HUS displacement fraction `|alpha|^2 / E` for that variance.
    pub alpha2_over_e: f64,
    /// Expected posterior variance after the round.
    pub apv: f64,
}

/// Expected-variance schedule, computed before any measurement:
/// `sigma2_{k+1} = APV(optimal HUS probe, Gaussian prior of variance sigma2_k)`.
pub fn build_schedule(
    energy: f64,
    sigma2_0: f64,
    n_rounds: usize,
    settings: &OptimizerSettings,
) -> Result<Vec<ScheduleEntry>> {
    if n_rounds == 0 {
        return Err(Error::InvalidParameter("schedule needs at least one round".into()));
    }
    let mut entries = Vec::with_capacity(n_rounds);
    let mut sigma2 = sigma2_0;
    for _ in 0..n_rounds {
        let prior = matched_gaussian(settings.theta0, sigma2, settings.n_grid)?.dist;
        let opt = optimize_hus_with(energy, &prior, settings)?;
        entries.push(ScheduleEntry {
            sigma2,
            alpha2_over_e: opt.alpha2_over_energy(),
            apv: opt.apv,
        });
        sigma2 = opt.apv;
    }
    Ok(entries)
}

/// Optimal HUS and LUS parameters at log-spaced prior variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimumTable {
    pub energy: f64,
    pub sigma2: Vec<f64>,
    pub hus_fraction: Vec<f64>,
    pub hus_apv: Vec<f64>,
    /// `phi + 2 theta0` of the LUS optimum.
    pub lus_angle: Vec<f64>,
    pub lus_apv: Vec<f64>,
    /// Let lookups pick the LUS family where it has the lower APV.
    pub both_families: bool,
}

/// Family and free parameter chosen by a table lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableChoice {
    pub family: FamilyKind,
    pub value: f64,
}

impl OptimumTable {
    pub fn build(
        energy: f64,
        sigma2_min: f64,
        sigma2_max: f64,
        n_points: usize,
        settings: &OptimizerSettings,
    ) -> Result<Self> {
        if !(sigma2_min > 0.0 && sigma2_max > sigma2_min && n_points >= 2) {
            return Err(Error::InvalidParameter(format!(
                "bad table range [{sigma2_min}, {sigma2_max}] with {n_points} points"
            )));
        }
        let ratio = (sigma2_max / sigma2_min).ln() / (n_points - 1) as f64;
        let grid: Vec<f64> = (0..n_points)
            .map(|i| sigma2_min * (ratio * i as f64).exp())
            .collect();
        let rows: Vec<Result<(f64, f64, f64, f64)>> = grid
            .par_iter()
            .map(|&s2| {
                let prior = matched_gaussian(settings.theta0, s2, settings.n_grid)?.dist;
                let h = optimize_hus_with(energy, &prior, settings)?;
                let l = optimize_lus_with(energy, &prior, settings)?;
                Ok((h.alpha2_over_energy(), h.apv, lus_relative_angle(&l), l.apv))
            })
            .collect();
        let mut table = Self {
            energy,
            sigma2: grid,
            hus_fraction: Vec::with_capacity(n_points),
            hus_apv: Vec::with_capacity(n_points),
            lus_angle: Vec::with_capacity(n_points),
            lus_apv: Vec::with_capacity(n_points),
            both_families: false,
        };
        for row in rows {
            let (f, ha, a, la) = row?;
            table.hus_fraction.push(f);
            table.hus_apv.push(ha);
            table.lus_angle.push(a);
            table.lus_apv.push(la);
        }
        Ok(table)
    }

    /// Log-linear interpolation in the variance, clamped to the table range.
    pub fn lookup(&self, sigma2: f64) -> TableChoice {
        let n = self.sigma2.len();
        let x = sigma2.clamp(self.sigma2[0], self.sigma2[n - 1]).ln();
        let j = self
            .sigma2
            .partition_point(|s| s.ln() <= x)
            .clamp(1, n - 1);
        let (x0, x1) = (self.sigma2[j - 1].ln(), self.sigma2[j].ln());
        let w = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
        let lerp = |v: &[f64]| v[j - 1] + w * (v[j] - v[j - 1]);
        let (ha, la) = (lerp(&self.hus_apv), lerp(&self.lus_apv));
        if !self.both_families || ha <= la {
            TableChoice {
                family: FamilyKind::Hus,
                value: lerp(&self.hus_fraction),
            }
        } else {
            TableChoice {
                family: FamilyKind::Lus,
                value: lerp(&self.lus_angle),
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Plan {
    Fixed(ProbeState),
    Split(f64),
    Schedule(Vec<ScheduleEntry>),
    Table(Arc<OptimumTable>),
    /// Re-optimize from scratch every round; the flag admits LUS probes.
    Exact(OptimizerSettings, bool),
}

/// A strategy tier with everything it needs precomputed.
#[derive(Debug, Clone)]
pub struct StrategySpec {
    pub tier: Tier,
    pub energy: f64,
    plan: Plan,
}

/// Settings for [`StrategySpec::prepare`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrepareOptions {
    pub optimizer: OptimizerSettings,
    pub table_points: usize,
    pub table_min_sigma2: f64,
    /// Let the fully adaptive tier switch to LUS probes where they are better.
    pub both_families: bool,
    /// Re-optimize per round instead of interpolating a table.
    pub exact: bool,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            optimizer: OptimizerSettings::default(),
            table_points: 48,
            table_min_sigma2: 1e-4,
            both_families: false,
            exact: false,
        }
    }
}

impl StrategySpec {
    /// Builds the probe plan of `tier` for energy `energy` and the given prior.
    pub fn prepare(
        tier: Tier,
        energy: f64,
        prior: &PhaseDistribution,
        n_rounds: usize,
        opts: &PrepareOptions,
    ) -> Result<Self> {
        if !(energy >= 0.0 && energy.is_finite()) {
            return Err(Error::OutOfRange {
                name: "energy",
                value: energy,
                range: "[0, inf)",
            });
        }
        prior.check_normalized()?;
        let s0 = summarize(prior);
        let local = optimal_local_split(energy).0 / energy.max(f64::MIN_POSITIVE);
        let needs_optimizer = energy > 0.0;
        let bayes_split = |_: ()| -> Result<f64> {
            if needs_optimizer {
                Ok(optimize_hus_with(energy, prior, &opts.optimizer)?.alpha2_over_energy())
            } else {
                Ok(0.0)
            }
        };
        let plan = match tier {
            Tier::FixedLocal => Plan::Fixed(hus_probe(energy, local, s0.mean)?),
            Tier::FixedBayes => Plan::Fixed(hus_probe(energy, bayes_split(())?, s0.mean)?),
            Tier::AngleAdaptiveLocal => Plan::Split(local),
            Tier::AngleAdaptiveBayes => Plan::Split(bayes_split(())?),
            Tier::Predetermined if needs_optimizer => {
                Plan::Schedule(build_schedule(energy, s0.variance, n_rounds, &opts.optimizer)?)
            }
            Tier::FullyAdaptive if needs_optimizer && opts.exact => Plan::Exact(opts.optimizer, opts.both_families),
            Tier::FullyAdaptive if needs_optimizer => {
                let max = bayes::MAX_PRIOR_VARIANCE.max(s0.variance);
                let mut table = OptimumTable::build(
                    energy,
                    opts.table_min_sigma2.min(max / 2.0),
                    max,
                    opts.table_points,
                    &opts.optimizer,
                )?;
                table.both_families = opts.both_families;
                Plan::Table(Arc::new(table))
            }
            Tier::Predetermined | Tier::FullyAdaptive => Plan::Split(0.0),
        };
        Ok(Self { tier, energy, plan })
    }

    /// Uses an already built table for the fully adaptive tier.
    pub fn fully_adaptive(energy: f64, table: Arc<OptimumTable>) -> Self {
        Self {
            tier: Tier::FullyAdaptive,
            energy,
            plan: Plan::Table(table),
        }
    }

    pub fn schedule(&self) -> Option<&[ScheduleEntry]> {
        match &self.plan {
            Plan::Schedule(s) => Some(s),
            _ => None,
        }
    }

    pub fn table(&self) -> Option<&OptimumTable> {
        match &self.plan {
            Plan::Table(t) => Some(t),
            _ => None,
        }
    }

    /// Probe for round `round` (0-based) given the current prior's moments.
    pub fn probe(&self, round: usize, current: &PhaseDistribution) -> Result<ProbeState> {
        let s = summarize(current);
        match &self.plan {
            Plan::Fixed(p) => Ok(*p),
            Plan::Split(f) => hus_probe(self.energy, *f, s.mean),
            Plan::Schedule(entries) => {
                let e = entries[round.min(entries.len() - 1)];
                hus_probe(self.energy, e.alpha2_over_e, s.mean)
            }
            Plan::Table(table) => {
                let choice = table.lookup(s.variance);
                match choice.family {
                    FamilyKind::Lus => ProbeState::with_energy(
                        self.energy,
                        0.0,
                        0.0,
                        choice.value - 2.0 * s.mean,
                    ),
                    _ => hus_probe(self.energy, choice.value, s.mean),
                }
            }
            Plan::Exact(settings, both) => {
                let refit = gaussian_refit(current)?.dist;
                let h = optimize_hus_with(self.energy, &refit, settings)?;
                if !both {
                    return Ok(h.probe);
                }
                let l = optimize_lus_with(self.energy, &refit, settings)?;
                Ok(if h.apv <= l.apv { h.probe } else { l.probe })
            }
        }
    }

    fn is_static(&self) -> bool {
        matches!(self.plan, Plan::Fixed(_)) && !self.tier.tracks_angles()
    }
}

fn hus_probe(energy: f64, fraction: f64, theta0: f64) -> Result<ProbeState> {
    ProbeState::with_energy(
        energy,
        (fraction.clamp(0.0, 1.0) * energy).sqrt(),
        theta0 - FRAC_PI_2,
        -2.0 * theta0,
    )
}

/// Runs `n_rounds` measurements at the true phase `true_theta` and returns
/// the posterior summary after every round.
pub fn run_trajectory<R: rand::Rng + ?Sized>(
    strategy: &StrategySpec,
    prior: &PhaseDistribution,
    true_theta: f64,
    n_rounds: usize,
    rng: &mut R,
) -> Result<Vec<PosteriorSummary>> {
    if !(0.0..PI).contains(&true_theta) {
        return Err(Error::OutOfRange {
            name: "true phase",
            value: true_theta,
            range: "[0, pi)",
        });
    }
    if n_rounds == 0 {
        return Err(Error::InvalidParameter("a trajectory needs at least one round".into()));
    }
    prior.check_normalized()?;
    let mut current = prior.clone();
    let mut out = Vec::with_capacity(n_rounds);
    let mut fixed_update = None;
    for round in 0..n_rounds {
        let probe = strategy.probe(round, &current)?;
        let q = sample_outcome(&probe, true_theta, rng);
        current = if strategy.is_static() {
            // the fixed probe's likelihood table is reused; only the prior changes
            let upd = fixed_update.get_or_insert_with(|| FixedLikelihood::new(&current, &probe));
            upd.update(&current, q)?
        } else {
            BayesUpdate::new(&current, &probe)?.update(q)?
        };
        let s = summarize(&current);
        out.push(PosteriorSummary {
            mean: s.mean,
            variance: s.variance,
            outcome: q,
        });
    }
    Ok(out)
}

/// Per-grid-point likelihood parameters of one probe.
struct FixedLikelihood {
    mu: Vec<f64>,
    width: Vec<f64>,
}

impl FixedLikelihood {
    fn new(dist: &PhaseDistribution, probe: &ProbeState) -> Self {
        let (mu, width) = (0..dist.len())
            .map(|i| {
                let p = crate::homodyne::outcome_params(probe, dist.theta(i));
                (p.mu, p.width())
            })
            .unzip();
        Self { mu, width }
    }

    fn update(&self, prior: &PhaseDistribution, q: f64) -> Result<PhaseDistribution> {
        let logs: Vec<f64> = prior
            .density()
            .iter()
            .zip(self.mu.iter().zip(&self.width))
            .map(|(p, (m, s))| {
                if *p > 0.0 {
                    p.ln() - (q - m) * (q - m) / s - 0.5 * (PI * s).ln()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(Error::PosteriorUnderflow {
                q,
                log_mass: f64::NEG_INFINITY,
            });
        }
        let density: Vec<f64> = logs.iter().map(|l| (l - peak).exp()).collect();
        let mass: f64 = density
            .iter()
            .enumerate()
            .map(|(i, d)| d * prior.weight(i))
            .sum();
        let log_mass = peak + mass.ln();
        if !log_mass.is_finite() || log_mass < f64::MIN_POSITIVE.ln() {
            return Err(Error::PosteriorUnderflow { q, log_mass });
        }
        PhaseDistribution::from_unnormalized(density)
    }
}

/// One trajectory's outcome inside an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFinal {
    pub true_theta: f64,
    pub estimate: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub tier: Tier,
    pub energy: f64,
    pub n_rounds: usize,
    pub n_traj: usize,
    pub seed: u64,
    /// Mean posterior variance per round; index 0 is the prior variance.
    pub mean_apv: Vec<f64>,
    pub std_err: Vec<f64>,
    /// Completed trajectories only, in trajectory order.
    pub finals: Vec<TrajectoryFinal>,
    pub aborted: usize,
    /// First few abort diagnostics.
    pub abort_reasons: Vec<String>,
}

impl EnsembleResult {
    pub fn final_apv(&self) -> f64 {
        *self.mean_apv.last().expect("round 0 always present")
    }

    pub fn final_std_err(&self) -> f64 {
        *self.std_err.last().expect("round 0 always present")
    }

    pub const CSV_HEADER: &'static str = "round,mean_apv,std_err,mean_apv_times_Nplus1,aborted";

    /// Per-round rows without header.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for (k, (m, se)) in self.mean_apv.iter().zip(&self.std_err).enumerate() {
            let _ = writeln!(
                out,
                "{k},{m:.12e},{se:.6e},{:.12e},{}",
                m * (k + 1) as f64,
                self.aborted
            );
        }
        out
    }
}

/// Random stream of trajectory `index`: the seed's stream number `index`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `n_traj` independent trajectories in parallel and averages their
/// per-round posterior variances. Fails if more than 1% abort.
pub fn run_ensemble(
    strategy: &StrategySpec,
    prior: &PhaseDistribution,
    n_traj: usize,
    n_rounds: usize,
    seed: u64,
) -> Result<EnsembleResult> {
    if n_traj < 100 {
        return Err(Error::InvalidParameter(format!(
            "an ensemble needs at least 100 trajectories, got {n_traj}"
        )));
    }
    if n_rounds == 0 {
        return Err(Error::InvalidParameter("an ensemble needs at least one round".into()));
    }
    prior.check_normalized()?;
    let cdf = cumulative(prior);
    let runs: Vec<(f64, Result<Vec<PosteriorSummary>>)> = (0..n_traj)
        .into_par_iter()
        .map(|k| {
            let mut rng = trajectory_rng(seed, k as u64);
            let theta = prior.theta(sample_index(&cdf, &mut rng)).min(PI.next_down());
            (theta, run_trajectory(strategy, prior, theta, n_rounds, &mut rng))
        })
        .collect();

    let s0 = summarize(prior);
    let mut sums = vec![0.0; n_rounds + 1];
    let mut sq = vec![0.0; n_rounds + 1];
    let mut finals = Vec::with_capacity(n_traj);
    let mut aborted = 0;
    let mut abort_reasons = Vec::new();
    for (theta, run) in runs {
        match run {
            Ok(rounds) => {
                sums[0] += s0.variance;
                sq[0] += s0.variance * s0.variance;
                for (k, r) in rounds.iter().enumerate() {
                    sums[k + 1] += r.variance;
                    sq[k + 1] += r.variance * r.variance;
                }
                let last = rounds.last().expect("n_rounds >= 1");
                finals.push(TrajectoryFinal {
                    true_theta: theta,
                    estimate: last.mean,
                    variance: last.variance,
                });
            }
            Err(e) => {
                aborted += 1;
                if abort_reasons.len() < 10 {
                    abort_reasons.push(e.to_string());
                }
            }
        }
    }
    if aborted * 100 > n_traj {
        return Err(Error::EnsembleAborted {
            aborted,
            total: n_traj,
        });
    }
    let n = finals.len() as f64;
    let mean_apv: Vec<f64> = sums.iter().map(|s| s / n).collect();
    let std_err = sq
        .iter()
        .zip(&mean_apv)
        .map(|(q, m)| ((q / n - m * m).max(0.0) * n / (n - 1.0) / n).sqrt())
        .collect();
    Ok(EnsembleResult {
        tier: strategy.tier,
        energy: strategy.energy,
        n_rounds,
        n_traj,
        seed,
        mean_apv,
        std_err,
        finals,
        aborted,
        abort_reasons,
    })
}
