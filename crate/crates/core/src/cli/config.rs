//! Resolved per-command parameters.
//!
//! Values come from three layers: command-line flags, then the JSON file
//! given with `--config`, then built-in defaults. Both upper layers are
//! merged as JSON objects, so a flag and a config key share one name
//! (`--sigma2-min` and `"sigma2_min"`).

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::bayes::{self, QuadratureSpec};
use crate::error::{Error, Result};
use crate::optimizer::{FamilyKind, OptimizerSettings};
use crate::simulator::Tier;

pub const SCHEMA_VERSION: u64 = 1;

/// Reads a config file and merges `flags` over it.
pub fn resolve<T: DeserializeOwned>(flags: Value, file: Option<&Path>) -> Result<T> {
    let mut merged = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            match serde_json::from_str::<Value>(&text)? {
                Value::Object(map) => map,
                _ => return Err(Error::Parse(format!("{}: config must be a JSON object", path.display()))),
            }
        }
        None => Map::new(),
    };
    match merged.remove("version") {
        None => {}
        Some(Value::Number(n)) if n.as_u64() == Some(SCHEMA_VERSION) => {}
        Some(other) => {
            return Err(Error::Parse(format!(
                "unsupported config version {other}; expected {SCHEMA_VERSION}"
            )))
        }
    }
    if let Value::Object(flags) = flags {
        for (k, v) in flags {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| Error::Parse(format!("config: {e}")))
}

fn check(ok: bool, name: &'static str, value: f64, range: &'static str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::OutOfRange { name, value, range })
    }
}

fn check_energy(e: f64) -> Result<()> {
    check(e >= 0.0 && e.is_finite(), "energy", e, "[0, inf)")
}

fn check_positive_energy(e: f64) -> Result<()> {
    check(e > 0.0 && e.is_finite(), "energy", e, "(0, inf)")
}

fn check_sigma2(s: f64) -> Result<()> {
    check(s > 0.0 && s <= bayes::MAX_PRIOR_VARIANCE, "prior variance", s, "(0, 0.2]")
}

fn check_mean(m: f64) -> Result<()> {
    check((0.0..PI).contains(&m), "prior mean", m, "[0, pi)")
}

/// Grid and quadrature resolution shared by the APV-based commands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolution {
    pub grid: usize,
    pub n_q: usize,
    pub width_sigmas: f64,
}

impl Default for Resolution {
    fn default() -> Self {
        let q = QuadratureSpec::default();
        Self {
            grid: bayes::DEFAULT_GRID_POINTS,
            n_q: q.n_q,
            width_sigmas: q.width_sigmas,
        }
    }
}

impl Resolution {
    pub fn validate(&self) -> Result<()> {
        if self.grid < bayes::MIN_GRID_POINTS || self.grid > 1_000_001 {
            return Err(Error::InvalidParameter(format!(
                "grid must have between {} and 1000001 points, got {}",
                bayes::MIN_GRID_POINTS,
                self.grid
            )));
        }
        if self.n_q < 3 || self.n_q > 1_000_001 {
            return Err(Error::InvalidParameter(format!(
                "n_q must be between 3 and 1000001, got {}",
                self.n_q
            )));
        }
        check(
            self.width_sigmas >= 1.0 && self.width_sigmas.is_finite(),
            "width_sigmas",
            self.width_sigmas,
            "[1, inf)",
        )
    }

    pub fn quadrature(&self) -> QuadratureSpec {
        QuadratureSpec {
            n_q: self.n_q,
            width_sigmas: self.width_sigmas,
            ..QuadratureSpec::default()
        }
    }

    pub fn optimizer(&self, theta0: f64) -> OptimizerSettings {
        OptimizerSettings {
            quadrature: self.quadrature(),
            n_grid: self.grid,
            theta0,
            ..OptimizerSettings::default()
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "n_theta={} (closed grid on [0, pi]), n_q={}, q_window={} sd",
            self.grid, self.n_q, self.width_sigmas
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiConfig {
    pub energy: f64,
    pub theta0: f64,
    /// Range of `theta0 - theta`.
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for FiConfig {
    fn default() -> Self {
        Self {
            energy: 2.0,
            theta0: FRAC_PI_2,
            min: -FRAC_PI_2,
            max: FRAC_PI_2,
            step: 1e-3,
        }
    }
}

impl FiConfig {
    pub fn validate(&self) -> Result<()> {
        check_positive_energy(self.energy)?;
        check(self.theta0.is_finite(), "theta0", self.theta0, "finite")?;
        check(self.step > 0.0 && self.step.is_finite(), "step", self.step, "(0, inf)")?;
        check(self.min.is_finite(), "min", self.min, "finite")?;
        check(self.max.is_finite() && self.max >= self.min, "max", self.max, "[min, inf)")?;
        let rows = (self.max - self.min) / self.step;
        check(rows <= 1e7, "number of rows", rows, "at most 1e7")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QfiConfig {
    pub alpha_mag: f64,
    pub tau: f64,
    pub r: f64,
    pub phi: f64,
    /// Phase at which the homodyne FI is reported next to the QFI.
    pub theta: f64,
}

impl Default for QfiConfig {
    fn default() -> Self {
        Self {
            alpha_mag: 1.0,
            tau: 0.0,
            r: 0.5,
            phi: 0.0,
            theta: FRAC_PI_2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApvConfig {
    pub alpha_mag: f64,
    pub tau: f64,
    pub r: f64,
    pub phi: f64,
    pub mean: f64,
    pub sigma2: f64,
    /// Monte Carlo samples for an independent estimate; 0 disables it.
    pub mc_samples: usize,
    pub seed: u64,
    pub grid: usize,
    pub n_q: usize,
    pub width_sigmas: f64,
}

impl Default for ApvConfig {
    fn default() -> Self {
        Self {
            alpha_mag: 1.0,
            tau: 0.0,
            r: 0.5,
            phi: -PI,
            mean: FRAC_PI_2,
            sigma2: 0.1,
            mc_samples: 0,
            seed: 1,
            grid: bayes::DEFAULT_GRID_POINTS,
            n_q: QuadratureSpec::default().n_q,
            width_sigmas: QuadratureSpec::default().width_sigmas,
        }
    }
}

impl ApvConfig {
    pub fn resolution(&self) -> Resolution {
        Resolution {
            grid: self.grid,
            n_q: self.n_q,
            width_sigmas: self.width_sigmas,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_mean(self.mean)?;
        check_sigma2(self.sigma2)?;
        if self.mc_samples != 0 && self.mc_samples < 1000 {
            return Err(Error::InvalidParameter(format!(
                "mc_samples must be 0 or at least 1000, got {}",
                self.mc_samples
            )));
        }
        self.resolution().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub family: FamilyKind,
    pub energy: f64,
    pub sigma2: f64,
    pub mean: f64,
    pub grid: usize,
    pub n_q: usize,
    pub width_sigmas: f64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            family: FamilyKind::Hus,
            energy: 2.0,
            sigma2: 0.1,
            mean: FRAC_PI_2,
            grid: bayes::DEFAULT_GRID_POINTS,
            n_q: QuadratureSpec::default().n_q,
            width_sigmas: QuadratureSpec::default().width_sigmas,
        }
    }
}

impl OptimizeConfig {
    pub fn resolution(&self) -> Resolution {
        Resolution {
            grid: self.grid,
            n_q: self.n_q,
            width_sigmas: self.width_sigmas,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_positive_energy(self.energy)?;
        check_sigma2(self.sigma2)?;
        check_mean(self.mean)?;
        self.resolution().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub energy: Vec<f64>,
    /// Explicit variances; when empty, `sigma2_points` log-spaced values in
    /// `[sigma2_min, sigma2_max]` are used.
    pub sigma2: Vec<f64>,
    pub sigma2_min: f64,
    pub sigma2_max: f64,
    pub sigma2_points: usize,
    pub family: Vec<FamilyKind>,
    /// HUS displacement fractions evaluated without optimization.
    pub fixed_splits: Vec<f64>,
    pub crossover: bool,
    pub crossover_lo: f64,
    pub crossover_hi: f64,
    pub crossover_resolution: f64,
    pub grid: usize,
    pub n_q: usize,
    pub width_sigmas: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            energy: vec![0.5, 1.0, 2.0, 5.0],
            sigma2: Vec::new(),
            sigma2_min: 1e-3,
            sigma2_max: 0.2,
            sigma2_points: 30,
            family: vec![FamilyKind::Hus, FamilyKind::Lus],
            fixed_splits: Vec::new(),
            crossover: false,
            crossover_lo: 0.001,
            crossover_hi: 0.2,
            crossover_resolution: 1e-4,
            grid: bayes::DEFAULT_GRID_POINTS,
            n_q: QuadratureSpec::default().n_q,
            width_sigmas: QuadratureSpec::default().width_sigmas,
        }
    }
}

impl SweepConfig {
    pub fn resolution(&self) -> Resolution {
        Resolution {
            grid: self.grid,
            n_q: self.n_q,
            width_sigmas: self.width_sigmas,
        }
    }

    pub fn sigma2_values(&self) -> Vec<f64> {
        if !self.sigma2.is_empty() {
            return self.sigma2.clone();
        }
        let n = self.sigma2_points;
        if n == 1 {
            return vec![self.sigma2_min];
        }
        let ratio = (self.sigma2_max / self.sigma2_min).ln() / (n - 1) as f64;
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    self.sigma2_max
                } else {
                    self.sigma2_min * (ratio * i as f64).exp()
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.energy.is_empty() {
            return Err(Error::InvalidParameter("no energies given".into()));
        }
        for &e in &self.energy {
            check_positive_energy(e)?;
        }
        if self.sigma2.is_empty() {
            check_sigma2(self.sigma2_min)?;
            check_sigma2(self.sigma2_max)?;
            check(self.sigma2_max >= self.sigma2_min, "sigma2_max", self.sigma2_max, "[sigma2_min, 0.2]")?;
            if self.sigma2_points == 0 || self.sigma2_points > 10_000 {
                return Err(Error::InvalidParameter(format!(
                    "sigma2_points must be in 1..=10000, got {}",
                    self.sigma2_points
                )));
            }
        }
        for s in self.sigma2_values() {
            check_sigma2(s)?;
        }
        if self.family.is_empty() && self.fixed_splits.is_empty() && !self.crossover {
            return Err(Error::InvalidParameter("nothing to compute: no family, fixed split or crossover".into()));
        }
        for &f in &self.fixed_splits {
            check((0.0..=1.0).contains(&f), "fixed split", f, "[0, 1]")?;
        }
        if self.crossover {
            check_sigma2(self.crossover_lo)?;
            check_sigma2(self.crossover_hi)?;
            check(self.crossover_hi > self.crossover_lo, "crossover_hi", self.crossover_hi, "(crossover_lo, 0.2]")?;
            check(
                self.crossover_resolution > 0.0,
                "crossover_resolution",
                self.crossover_resolution,
                "(0, inf)",
            )?;
        }
        self.resolution().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub tier: Vec<Tier>,
    pub energy: f64,
    pub sigma2: f64,
    pub mean: f64,
    pub rounds: usize,
    pub trajectories: usize,
    pub seed: u64,
    /// Let the fully adaptive tier also choose LUS probes.
    pub both_families: bool,
    /// Re-optimize every round instead of using the interpolation table.
    pub exact: bool,
    pub table_points: usize,
    pub grid: usize,
    pub n_q: usize,
    pub width_sigmas: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            tier: Tier::ALL.to_vec(),
            energy: 2.0,
            sigma2: 0.2,
            mean: FRAC_PI_2,
            rounds: 20,
            trajectories: 1000,
            seed: 2024,
            both_families: false,
            exact: false,
            table_points: 48,
            grid: bayes::DEFAULT_GRID_POINTS,
            n_q: QuadratureSpec::default().n_q,
            width_sigmas: QuadratureSpec::default().width_sigmas,
        }
    }
}

impl SimulateConfig {
    pub fn resolution(&self) -> Resolution {
        Resolution {
            grid: self.grid,
            n_q: self.n_q,
            width_sigmas: self.width_sigmas,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tier.is_empty() {
            return Err(Error::InvalidParameter("no strategy tier given".into()));
        }
        check_energy(self.energy)?;
        check_sigma2(self.sigma2)?;
        check_mean(self.mean)?;
        if self.rounds == 0 || self.rounds > 100_000 {
            return Err(Error::InvalidParameter(format!("rounds must be in 1..=100000, got {}", self.rounds)));
        }
        if self.trajectories < 100 {
            return Err(Error::InvalidParameter(format!(
                "at least 100 trajectories are needed, got {}",
                self.trajectories
            )));
        }
        if self.table_points < 2 {
            return Err(Error::InvalidParameter("table_points must be at least 2".into()));
        }
        self.resolution().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub energy: Vec<f64>,
    pub sigma2: Vec<f64>,
    /// Also optimize the HUS probe and report its APV and Van Trees bound.
    pub with_apv: bool,
    pub grid: usize,
    pub n_q: usize,
    pub width_sigmas: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            energy: vec![0.0, 0.5, 1.0, 2.0, 5.0],
            sigma2: vec![0.01, 0.05, 0.1, 0.2],
            with_apv: true,
            grid: bayes::DEFAULT_GRID_POINTS,
            n_q: QuadratureSpec::default().n_q,
            width_sigmas: QuadratureSpec::default().width_sigmas,
        }
    }
}

impl BoundsConfig {
    pub fn resolution(&self) -> Resolution {
        Resolution {
            grid: self.grid,
            n_q: self.n_q,
            width_sigmas: self.width_sigmas,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.energy.is_empty() || self.sigma2.is_empty() {
            return Err(Error::InvalidParameter("energy and sigma2 lists must be non-empty".into()));
        }
        for &e in &self.energy {
            check_energy(e)?;
        }
        for &s in &self.sigma2 {
            check_sigma2(s)?;
        }
        self.resolution().validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = std::env::temp_dir().join(format!("gaussprobe-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.json");
        std::fs::write(&path, r#"{"version": 1, "energy": 5, "step": 0.01}"#).unwrap();
        let c: FiConfig = resolve(json!({"energy": 3.0, "min": null}), Some(&path)).unwrap();
        assert_eq!(c.energy, 3.0);
        assert_eq!(c.step, 0.01);
        assert_eq!(c.min, -FRAC_PI_2);

        std::fs::write(&path, r#"{"version": 2}"#).unwrap();
        assert!(resolve::<FiConfig>(json!({}), Some(&path)).is_err());
        std::fs::write(&path, r#"{"energi": 2}"#).unwrap();
        assert!(resolve::<FiConfig>(json!({}), Some(&path)).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn resolution_fields_and_enums() {
        let c: SimulateConfig = resolve(json!({"grid": 801, "tier": ["predetermined"]}), None).unwrap();
        assert_eq!(c.grid, 801);
        assert_eq!(c.tier, vec![Tier::Predetermined]);
        let s: SweepConfig = resolve(json!({"family": ["lus"]}), None).unwrap();
        assert_eq!(s.family, vec![FamilyKind::Lus]);
    }

    #[test]
    fn validation_rejects_bad_values() {
        assert!(FiConfig { step: 0.0, ..Default::default() }.validate().is_err());
        assert!(FiConfig { max: -2.0, ..Default::default() }.validate().is_err());
        assert!(SweepConfig { sigma2: vec![0.3], ..Default::default() }.validate().is_err());
        assert!(SimulateConfig { trajectories: 10, ..Default::default() }.validate().is_err());
        assert!(BoundsConfig { energy: vec![-1.0], ..Default::default() }.validate().is_err());
        let s = SweepConfig::default().sigma2_values();
        assert_eq!(s.len(), 30);
        assert_eq!(*s.last().unwrap(), 0.2);
    }
}
