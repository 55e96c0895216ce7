//! `gaussprobe` command-line front end.
//!
//! Every command resolves its parameters (flags over `--config` file over
//! defaults), validates them, computes everything in memory and only then
//! writes its output. Files start with `#` comment lines carrying the tool
//! version, the resolved config, the seed and the grid resolution; the
//! wall-clock duration goes to a `.meta.json` sidecar and to stderr so that
//! reruns produce byte-identical CSV.

pub mod commands;
pub mod config;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::optimizer::FamilyKind;
use crate::simulator::Tier;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THREADS_ENV: &str = "GAUSSPROBE_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "gaussprobe",
    version,
    about = "Optimal Gaussian probes for homodyne phase estimation with prior knowledge",
    after_help = "Parameters are taken from flags, then from the --config JSON file, then from defaults.\n\
                  Set GAUSSPROBE_THREADS to limit the number of worker threads."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Io {
    /// JSON file with parameters (keys as the long flag names, snake_case).
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output file; a directory for `sweep` and `simulate`. Stdout if omitted
    /// for single-file commands.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// FI of the two locally optimal probes against theta0 - theta.
    Fi {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        args: FiArgs,
    },
    /// QFI and homodyne FI of one probe.
    Qfi {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        args: ProbeArgs,
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<f64>,
    },
    /// APV of one probe for a Gaussian prior.
    Apv {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        args: ApvArgs,
    },
    /// Optimal probe of a family for one prior.
    Optimize {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        args: OptimizeArgs,
    },
    /// Family optima over a range of prior variances.
    Sweep {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        args: SweepArgs,
    },
    /// Repeated-measurement trajectory ensembles.
    Simulate {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        args: SimulateArgs,
    },
    /// Van Trees and quantum Van Trees bounds.
    Bounds {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        args: BoundsArgs,
    },
}

#[derive(Debug, Args, Clone, Serialize)]
pub struct ResolutionArgs {
    /// Phase grid points on [0, pi].
    #[arg(long)]
    pub grid: Option<usize>,
    /// Outcome quadrature points.
    #[arg(long)]
    pub n_q: Option<usize>,
    /// Outcome window half-width in outcome standard deviations.
    #[arg(long)]
    pub width_sigmas: Option<f64>,
}

#[derive(Debug, Args, Clone, Serialize)]
pub struct FiArgs {
    #[arg(long)]
    pub energy: Option<f64>,
    #[arg(long)]
    pub theta0: Option<f64>,
    /// Smallest theta0 - theta.
    #[arg(long, allow_hyphen_values = true)]
    pub min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub max: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Debug, Args, Clone, Serialize)]
pub struct ProbeArgs {
    #[arg(long)]
    pub alpha_mag: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub phi: Option<f64>,
}

#[derive(Debug, Args, Clone, Serialize)]
pub struct ApvArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub probe: ProbeArgs,
    /// Prior mean.
    #[arg(long)]
    pub mean: Option<f64>,
    /// Prior variance.
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Monte Carlo samples for a cross-check (0 = off).
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub resolution: ResolutionArgs,
}

#[derive(Debug, Args, Clone, Serialize)]
pub struct OptimizeArgs {
    /// hus, lus or full.
    #[arg(long)]
    pub family: Option<FamilyKind>,
    #[arg(long)]
    pub energy: Option<f64>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub mean: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub resolution: ResolutionArgs,
}

#[derive(Debug, Args, Clone, Serialize)]
pub struct SweepArgs {
    /// Comma-separated energies.
    #[arg(long, value_delimiter = ',')]
    pub energy: Option<Vec<f64>>,
    /// Comma-separated prior variances (overrides the log-spaced range).
    #[arg(long, value_delimiter = ',')]
    pub sigma2: Option<Vec<f64>>,
    #[arg(long)]
    pub sigma2_min: Option<f64>,
    #[arg(long)]
    pub sigma2_max: Option<f64>,
    #[arg(long)]
    pub sigma2_points: Option<usize>,
    /// Comma-separated families: hus, lus, full.
    #[arg(long, value_delimiter = ',')]
    pub family: Option<Vec<FamilyKind>>,
    /// Comma-separated HUS displacement fractions evaluated as-is.
    #[arg(long, value_delimiter = ',')]
    pub fixed_splits: Option<Vec<f64>>,
    /// Locate the HUS/LUS crossover by bisection for every energy.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub crossover: Option<bool>,
    #[arg(long)]
    pub crossover_lo: Option<f64>,
    #[arg(long)]
    pub crossover_hi: Option<f64>,
    #[arg(long)]
    pub crossover_resolution: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub resolution: ResolutionArgs,
}

#[derive(Debug, Args, Clone, Serialize)]
pub struct SimulateArgs {
    /// Comma-separated tiers: fixed-local, fixed-bayes, angle-adaptive-local,
    /// angle-adaptive-bayes, predetermined, fully-adaptive.
    #[arg(long, value_delimiter = ',')]
    pub tier: Option<Vec<Tier>>,
    #[arg(long)]
    pub energy: Option<f64>,
    /// Initial prior variance.
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub mean: Option<f64>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fully adaptive tier may also choose LUS probes.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub both_families: Option<bool>,
    /// Fully adaptive tier re-optimizes every round (slow).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub exact: Option<bool>,
    #[arg(long)]
    pub table_points: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub resolution: ResolutionArgs,
}

#[derive(Debug, Args, Clone, Serialize)]
pub struct BoundsArgs {
    #[arg(long, value_delimiter = ',')]
    pub energy: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub sigma2: Option<Vec<f64>>,
    /// Also report the optimized HUS APV and its Van Trees bound.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub with_apv: Option<bool>,
    #[command(flatten)]
    #[serde(flatten)]
    pub resolution: ResolutionArgs,
}

/// One file produced by a command.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    /// Column names, written after the comment header.
    pub columns: String,
    pub rows: String,
}

/// Everything a command produced.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub files: Vec<OutputFile>,
    /// Failed computations and invariant violations; any entry makes the
    /// exit status nonzero.
    pub problems: Vec<String>,
    pub summary: Value,
    pub seed: Option<u64>,
    pub grid: String,
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("argument structs serialize")
}

fn header(command: &str, config: &Value, report: &Report) -> String {
    let mut h = format!("# gaussprobe {VERSION}\n# command: {command}\n# config: {config}\n");
    match report.seed {
        Some(seed) => h.push_str(&format!("# seed: {seed}\n")),
        None => h.push_str("# seed: none (deterministic)\n"),
    }
    h.push_str(&format!("# grid: {}\n", report.grid));
    h
}

/// Parses arguments, runs the command and returns the exit status:
/// 0 on success, 1 if a computation failed or an invariant was violated,
/// 2 for invalid input.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Ok(n) = std::env::var(THREADS_ENV) {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got '{n}'");
                return 2;
            }
        }
    }
    match run(cli.command) {
        Ok(status) => status,
        Err((code, e)) => {
            eprintln!("error: {e}");
            code
        }
    }
}

type Failure = (i32, Error);

fn invalid(e: Error) -> Failure {
    (2, e)
}

fn failed(e: Error) -> Failure {
    (1, e)
}

/// Runs one parsed command. Exposed for in-process use and testing.
pub fn run(command: Command) -> std::result::Result<i32, Failure> {
    let started = Instant::now();
    let (name, io, config, job): (&str, Io, Value, Box<dyn FnOnce() -> Result<Report>>) = match command {
        Command::Fi { io, args } => {
            let c: config::FiConfig = config::resolve(to_json(&args), io.config.as_deref()).map_err(invalid)?;
            c.validate().map_err(invalid)?;
            ("fi", io, to_json(&c), Box::new(move || commands::fi(&c)))
        }
        Command::Qfi { io, args, theta } => {
            let mut flags = to_json(&args);
            flags["theta"] = to_json(&theta);
            let c: config::QfiConfig = config::resolve(flags, io.config.as_deref()).map_err(invalid)?;
            let probe = crate::ProbeState::new(c.alpha_mag, c.tau, c.r, c.phi).map_err(invalid)?;
            ("qfi", io, to_json(&c), Box::new(move || commands::qfi(&probe, c.theta)))
        }
        Command::Apv { io, args } => {
            let c: config::ApvConfig = config::resolve(to_json(&args), io.config.as_deref()).map_err(invalid)?;
            c.validate().map_err(invalid)?;
            crate::ProbeState::new(c.alpha_mag, c.tau, c.r, c.phi).map_err(invalid)?;
            ("apv", io, to_json(&c), Box::new(move || commands::apv(&c)))
        }
        Command::Optimize { io, args } => {
            let c: config::OptimizeConfig =
                config::resolve(to_json(&args), io.config.as_deref()).map_err(invalid)?;
            c.validate().map_err(invalid)?;
            ("optimize", io, to_json(&c), Box::new(move || commands::optimize(&c)))
        }
        Command::Sweep { io, args } => {
            let c: config::SweepConfig = config::resolve(to_json(&args), io.config.as_deref()).map_err(invalid)?;
            c.validate().map_err(invalid)?;
            ("sweep", io, to_json(&c), Box::new(move || commands::sweep(&c)))
        }
        Command::Simulate { io, args } => {
            let c: config::SimulateConfig =
                config::resolve(to_json(&args), io.config.as_deref()).map_err(invalid)?;
            c.validate().map_err(invalid)?;
            ("simulate", io, to_json(&c), Box::new(move || commands::simulate(&c)))
        }
        Command::Bounds { io, args } => {
            let c: config::BoundsConfig = config::resolve(to_json(&args), io.config.as_deref()).map_err(invalid)?;
            c.validate().map_err(invalid)?;
            ("bounds", io, to_json(&c), Box::new(move || commands::bounds(&c)))
        }
    };
    let multi = matches!(name, "sweep" | "simulate");
    if multi && io.out.is_none() {
        return Err(invalid(Error::InvalidParameter(format!(
            "`{name}` writes several files; give a directory with --out"
        ))));
    }
    if let Some(out) = &io.out {
        let parent_ok = if multi {
            !out.is_file()
        } else {
            !out.is_dir() && out.parent().is_none_or(|p| p.as_os_str().is_empty() || p.is_dir())
        };
        if !parent_ok {
            return Err(invalid(Error::InvalidParameter(format!(
                "output path {} is not usable",
                out.display()
            ))));
        }
    }

    let report = job().map_err(failed)?;
    let elapsed = started.elapsed().as_secs_f64();
    let written = write_outputs(name, &config, &io, &report).map_err(failed)?;

    let meta = json!({
        "tool": "gaussprobe",
        "version": VERSION,
        "command": name,
        "config": config,
        "seed": report.seed,
        "grid": report.grid,
        "duration_seconds": elapsed,
        "outputs": written.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "problems": report.problems,
        "summary": report.summary,
    });
    if let Some(path) = meta_path(name, &io) {
        std::fs::write(&path, serde_json::to_string_pretty(&meta).map_err(|e| failed(e.into()))? + "\n")
            .map_err(|e| failed(e.into()))?;
    }
    eprintln!("gaussprobe {name}: finished in {elapsed:.2} s");
    for p in &report.problems {
        eprintln!("problem: {p}");
    }
    Ok(if report.problems.is_empty() { 0 } else { 1 })
}

fn meta_path(name: &str, io: &Io) -> Option<PathBuf> {
    let out = io.out.as_ref()?;
    if matches!(name, "sweep" | "simulate") {
        Some(out.join(format!("{name}.meta.json")))
    } else {
        let mut s = out.clone().into_os_string();
        s.push(".meta.json");
        Some(PathBuf::from(s))
    }
}

fn write_outputs(name: &str, config: &Value, io: &Io, report: &Report) -> Result<Vec<PathBuf>> {
    let head = header(name, config, report);
    let render = |f: &OutputFile| format!("{head}{}\n{}", f.columns, f.rows);
    match &io.out {
        None => {
            for f in &report.files {
                print!("{}", render(f));
            }
            Ok(Vec::new())
        }
        Some(out) if matches!(name, "sweep" | "simulate") => {
            std::fs::create_dir_all(out)?;
            report
                .files
                .iter()
                .map(|f| {
                    let path = out.join(&f.name);
                    std::fs::write(&path, render(f))?;
                    Ok(path)
                })
                .collect()
        }
        Some(out) => {
            let text: String = report.files.iter().map(render).collect();
            std::fs::write(out, text)?;
            Ok(vec![out.to_path_buf()])
        }
    }
}

/// Convenience for tests and scripts: parse `args` (without the program
/// name) and run.
pub fn run_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("gaussprobe")).chain(args.into_iter().map(Into::into));
    match Cli::try_parse_from(argv) {
        Ok(cli) => match run(cli.command) {
            Ok(code) => code,
            Err((code, e)) => {
                eprintln!("error: {e}");
                code
            }
        },
        Err(e) => {
            let _ = e.print();
            2
        }
    }
}
