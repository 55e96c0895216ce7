use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use super::config::{ApvConfig, BoundsConfig, FiConfig, OptimizeConfig, SimulateConfig, SweepConfig};
use super::{OutputFile, Report};
use crate::bayes::{apv as apv_report, apv_monte_carlo, gaussian_prior, summarize};
use crate::error::Result;
use crate::fisher::{
    average_fisher, fisher_information, hus_local_probe, lus_asymptotic_angle, lus_local_probe, qfi as qfi_of,
    quantum_van_trees, van_trees_bound,
};
use crate::gaussian::ProbeState;
use crate::optimizer::{self, FamilyKind, FamilySpec, Optimum};
use crate::simulator::{run_ensemble, PrepareOptions, StrategySpec};

fn single(name: &str, columns: &str, rows: String) -> OutputFile {
    OutputFile {
        name: name.to_string(),
        columns: columns.to_string(),
        rows,
    }
}

/// FI of the locally optimal HUS probe and of the squeezed vacuum at its
/// optimal angle, both prepared for `theta0`, against `theta0 - theta`.
pub fn fi(c: &FiConfig) -> Result<Report> {
    let hus = hus_local_probe(c.energy, c.theta0)?;
    let lus = lus_local_probe(c.energy, c.theta0, -1.0)?;
    // rows sit on integer multiples of the step so that 0 is hit exactly
    let first = (c.min / c.step - 1e-9).ceil() as i64;
    let last = (c.max / c.step + 1e-9).floor() as i64;
    let mut rows = String::new();
    for i in first..=last {
        let diff = i as f64 * c.step;
        let theta = c.theta0 - diff;
        let _ = writeln!(
            rows,
            "{diff:.10},{:.15e},{:.15e}",
            fisher_information(&hus, theta),
            fisher_information(&lus, theta)
        );
    }
    let e = c.energy;
    Ok(Report {
        files: vec![single("fi.csv", "theta_diff,fi_hus_optimal,fi_lus_optimal", rows)],
        problems: Vec::new(),
        summary: json!({
            "fi_hus_at_zero": 4.0 * e * (e + 1.0),
            "fi_lus_at_zero": 8.0 * e * (e + 1.0),
            "fi_lus_zero_at": -0.5 * lus_asymptotic_angle(e),
            "hus_probe": hus,
            "lus_probe": lus,
        }),
        seed: None,
        grid: format!("theta_diff from {} to {} step {}", c.min, c.max, c.step),
    })
}

pub fn qfi(probe: &ProbeState, theta: f64) -> Result<Report> {
    let rows = format!(
        "{},{},{},{},{:.15e},{},{:.15e},{:.15e}\n",
        probe.alpha_mag(),
        probe.tau(),
        probe.r(),
        probe.phi(),
        probe.energy(),
        theta,
        fisher_information(probe, theta),
        qfi_of(probe)
    );
    Ok(Report {
        files: vec![single("qfi.csv", "alpha_mag,tau,r,phi,energy,theta,fi,qfi", rows)],
        grid: "none".into(),
        ..Report::default()
    })
}

pub fn apv(c: &ApvConfig) -> Result<Report> {
    let res = c.resolution();
    let probe = ProbeState::new(c.alpha_mag, c.tau, c.r, c.phi)?;
    let prior = gaussian_prior(c.mean, c.sigma2, res.grid)?;
    let report = apv_report(&probe, &prior, &res.quadrature())?;
    let mut problems = Vec::new();
    // the grid prior is truncated to [0, pi]; its own variance enters the bound
    let bound = quantum_van_trees(report.prior_variance, probe.energy())?;
    if report.apv > report.prior_variance * (1.0 + 1e-9) {
        problems.push(format!("APV {} exceeds the prior variance {}", report.apv, report.prior_variance));
    }
    if report.apv < bound * (1.0 - 1e-9) {
        problems.push(format!("APV {} is below the quantum Van Trees bound {bound}", report.apv));
    }
    let (mc, seed) = if c.mc_samples > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        (Some(apv_monte_carlo(&probe, &prior, c.mc_samples, &mut rng)?), Some(c.seed))
    } else {
        (None, None)
    };
    let rows = format!(
        "{},{},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.10},{:.10},{},{:.15e},{:.6e},{},{},{}\n",
        c.mean,
        c.sigma2,
        report.prior_variance,
        report.apv,
        report.apv / c.sigma2,
        report.variance_of_means,
        bound,
        report.q_min,
        report.q_max,
        report.n_q,
        report.captured_mass,
        report.excluded_mass,
        mc.map(|m| format!("{:.15e}", m.estimate)).unwrap_or_default(),
        mc.map(|m| format!("{:.6e}", m.std_error)).unwrap_or_default(),
        c.mc_samples
    );
    Ok(Report {
        files: vec![single(
            "apv.csv",
            "mean,sigma2,prior_variance,apv,apv_over_sigma2,variance_of_means,quantum_van_trees,q_min,q_max,n_q,captured_mass,excluded_mass,mc_estimate,mc_std_error,mc_samples",
            rows,
        )],
        problems,
        summary: json!({ "apv": report, "monte_carlo": mc, "probe": probe }),
        seed,
        grid: res.describe(),
    })
}

const OPTIMUM_COLUMNS: &str = "family,E,sigma2,alpha2_over_E,alpha_mag,tau,r,phi,apv,apv_over_sigma2,relative_tau,relative_phi,low_confidence,start_index,evaluations";

fn optimum_row(out: &mut String, sigma2: f64, o: &Optimum) {
    let c = o.canonical();
    let _ = writeln!(
        out,
        "{},{},{},{:.10},{:.12},{:.12},{:.12},{:.12},{:.12e},{:.10},{:.10},{:.10},{},{},{}",
        o.family.kind,
        o.family.energy,
        sigma2,
        o.alpha2_over_energy(),
        o.probe.alpha_mag(),
        o.probe.tau(),
        o.probe.r(),
        o.probe.phi(),
        o.apv,
        o.apv / sigma2,
        c[1],
        c[2],
        o.low_confidence,
        o.start.map(|s| s.index.to_string()).unwrap_or_default(),
        o.evaluations
    );
}

pub fn optimize(c: &OptimizeConfig) -> Result<Report> {
    let res = c.resolution();
    let settings = res.optimizer(c.mean);
    let prior = gaussian_prior(c.mean, c.sigma2, res.grid)?;
    let mut problems = Vec::new();
    let minima = match c.family {
        FamilyKind::Hus => vec![optimizer::optimize_hus_with(c.energy, &prior, &settings)?],
        FamilyKind::Lus => vec![optimizer::optimize_lus_with(c.energy, &prior, &settings)?],
        FamilyKind::Full => {
            let theta0 = summarize(&prior).mean;
            let starts = optimizer::default_starts(c.energy, theta0);
            let search = optimizer::optimize_full_with(c.energy, &prior, &starts, &settings)?;
            for run in &search.runs {
                if let Err(e) = &run.result {
                    problems.push(format!("start {}: {e}", run.provenance.index));
                }
            }
            search.minima
        }
    };
    if minima.is_empty() {
        problems.push("no minimum found".into());
    }
    let mut rows = String::new();
    for o in &minima {
        optimum_row(&mut rows, c.sigma2, o);
        if !FamilySpec::contains(&o.family, &o.probe, 1e-6) {
            problems.push(format!("optimum violates the {} bindings", o.family.kind));
        }
    }
    Ok(Report {
        files: vec![single("optimize.csv", OPTIMUM_COLUMNS, rows)],
        problems,
        summary: json!({ "minima": minima }),
        seed: None,
        grid: res.describe(),
    })
}

pub fn sweep(c: &SweepConfig) -> Result<Report> {
    let res = c.resolution();
    let settings = res.optimizer(std::f64::consts::FRAC_PI_2);
    let sigma2 = c.sigma2_values();
    let mut files = Vec::new();
    let mut problems = Vec::new();
    let mut summary = serde_json::Map::new();

    for &family in &c.family {
        let mut rows = Vec::new();
        for &e in &c.energy {
            rows.extend(optimizer::sweep(e, &sigma2, family, &settings)?);
        }
        for row in &rows {
            match &row.optimum {
                Ok(o) => {
                    let ratio = o.apv / row.sigma2;
                    if !(ratio > 0.0 && ratio <= 1.0 + 1e-9) {
                        problems.push(format!(
                            "{family} E={} sigma2={}: APV/sigma2 = {ratio} outside (0, 1]",
                            row.energy, row.sigma2
                        ));
                    }
                }
                Err(e) => problems.push(format!("{family} E={} sigma2={}: {e}", row.energy, row.sigma2)),
            }
        }
        files.push(single(
            &format!("sweep_{family}.csv"),
            optimizer::SWEEP_HEADER,
            optimizer::sweep_rows_csv(&rows),
        ));
    }

    if !c.fixed_splits.is_empty() {
        let mut jobs: Vec<(f64, f64, f64)> = Vec::new();
        for &e in &c.energy {
            for &f in &c.fixed_splits {
                jobs.extend(sigma2.iter().map(|&s| (e, f, s)));
            }
        }
        let values: Vec<Result<f64>> = jobs
            .par_iter()
            .map(|&(e, f, s)| {
                let prior = settings.prior(s)?;
                let probe = FamilySpec::new(FamilyKind::Hus, e, settings.theta0)?.hus_probe(f)?;
                Ok(apv_report(&probe, &prior, &settings.quadrature)?.apv)
            })
            .collect();
        let mut rows = String::new();
        for ((e, f, s), v) in jobs.iter().zip(values) {
            match v {
                Ok(v) => {
                    let _ = writeln!(rows, "{e},{s},{f},{v:.12e},{:.10}", v / s);
                }
                Err(err) => {
                    problems.push(format!("fixed split {f} E={e} sigma2={s}: {err}"));
                    let _ = writeln!(rows, "{e},{s},{f},,");
                }
            }
        }
        files.push(single("sweep_fixed_splits.csv", "E,sigma2,alpha2_over_E,apv,apv_over_sigma2", rows));
    }

    if c.crossover {
        let mut rows = String::new();
        let mut found = Vec::new();
        for &e in &c.energy {
            match optimizer::find_crossover(e, c.crossover_lo, c.crossover_hi, c.crossover_resolution, &settings) {
                Ok(x) => {
                    let _ = writeln!(
                        rows,
                        "{e},{:.6},{:.6},{:.6},ok",
                        x.sigma2, x.bracket.0, x.bracket.1
                    );
                    found.push(json!({ "energy": e, "sigma2": x.sigma2, "evaluations": x.evaluations }));
                }
                Err(err) => {
                    problems.push(format!("crossover E={e}: {err}"));
                    let _ = writeln!(rows, "{e},,,,failed: {}", err.to_string().replace(',', ";"));
                }
            }
        }
        files.push(single(
            "crossover.csv",
            "E,sigma2_crossover,bracket_lo,bracket_hi,status",
            rows,
        ));
        summary.insert("crossover".into(), json!(found));
    }
    Ok(Report {
        files,
        problems,
        summary: serde_json::Value::Object(summary),
        seed: None,
        grid: res.describe(),
    })
}

pub fn simulate(c: &SimulateConfig) -> Result<Report> {
    let res = c.resolution();
    let prior = gaussian_prior(c.mean, c.sigma2, res.grid)?;
    let opts = PrepareOptions {
        optimizer: res.optimizer(c.mean),
        table_points: c.table_points,
        both_families: c.both_families,
        exact: c.exact,
        ..PrepareOptions::default()
    };
    let mut files = Vec::new();
    let mut problems = Vec::new();
    let mut results = Vec::new();
    let mut summary = Vec::new();
    for &tier in &c.tier {
        let spec = StrategySpec::prepare(tier, c.energy, &prior, c.rounds, &opts)?;
        match run_ensemble(&spec, &prior, c.trajectories, c.rounds, c.seed) {
            Ok(ens) => {
                files.push(single(
                    &format!("simulate_{tier}.csv"),
                    crate::simulator::EnsembleResult::CSV_HEADER,
                    ens.csv_rows(),
                ));
                summary.push(json!({
                    "tier": tier,
                    "final_mean_apv": ens.final_apv(),
                    "final_std_err": ens.final_std_err(),
                    "aborted": ens.aborted,
                    "abort_reasons": ens.abort_reasons,
                    "schedule": spec.schedule(),
                }));
                results.push(ens);
            }
            Err(e) => problems.push(format!("{tier}: {e}")),
        }
    }
    if !results.is_empty() {
        let columns: Vec<String> = std::iter::once("round".to_string())
            .chain(results.iter().flat_map(|r| {
                [format!("{}_mean_apv", r.tier), format!("{}_std_err", r.tier)]
            }))
            .collect();
        let mut rows = String::new();
        for k in 0..=c.rounds {
            let _ = write!(rows, "{k}");
            for r in &results {
                let _ = write!(rows, ",{:.12e},{:.6e}", r.mean_apv[k], r.std_err[k]);
            }
            rows.push('\n');
        }
        files.push(single("simulate_comparison.csv", &columns.join(","), rows));
    }
    Ok(Report {
        files,
        problems,
        summary: json!({ "tiers": summary }),
        seed: Some(c.seed),
        grid: res.describe(),
    })
}

pub fn bounds(c: &BoundsConfig) -> Result<Report> {
    let res = c.resolution();
    let settings = res.optimizer(std::f64::consts::FRAC_PI_2);
    let jobs: Vec<(f64, f64)> = c
        .energy
        .iter()
        .flat_map(|&e| c.sigma2.iter().map(move |&s| (e, s)))
        .collect();
    let rows: Vec<Result<(f64, Option<(f64, f64, f64)>)>> = jobs
        .par_iter()
        .map(|&(e, s)| {
            let qvt = quantum_van_trees(s, e)?;
            if !c.with_apv || e == 0.0 {
                return Ok((qvt, None));
            }
            let prior = settings.prior(s)?;
            let opt = optimizer::optimize_hus_with(e, &prior, &settings)?;
            let vt = van_trees_bound(&prior, average_fisher(&opt.probe, &prior)?)?;
            Ok((qvt, Some((opt.apv, vt, opt.alpha2_over_energy()))))
        })
        .collect();
    let mut out = String::new();
    let mut problems = Vec::new();
    for ((e, s), row) in jobs.iter().zip(rows) {
        let (qvt, extra) = row?;
        match extra {
            Some((apv, vt, split)) => {
                let ok = apv >= qvt && apv >= vt;
                if !ok {
                    problems.push(format!("E={e} sigma2={s}: APV {apv} below a bound ({qvt}, {vt})"));
                }
                let _ = writeln!(out, "{e},{s},{qvt:.15e},{apv:.15e},{vt:.15e},{split:.10},{ok}");
            }
            None => {
                let _ = writeln!(out, "{e},{s},{qvt:.15e},,,,");
            }
        }
    }
    Ok(Report {
        files: vec![single(
            "bounds.csv",
            "E,sigma2,quantum_van_trees,apv_hus,van_trees_hus,alpha2_over_E,bound_ok",
            out,
        )],
        problems,
        seed: None,
        grid: res.describe(),
        ..Report::default()
    })
}
