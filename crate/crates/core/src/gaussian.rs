//! Pure single-mode Gaussian probe states.
//!
//! A probe is obtained by squeezing the vacuum with strength `r` along the
//! angle set by `phi` and then displacing it by `alpha = |alpha| e^{i tau}`.
//! The unknown phase rotation by `theta` acts on the probe before detection;
//! [`rotated_moments`] returns the first and second moments of the rotated
//! state in the vacuum-variance-1/2 convention.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduce an angle to `[0, 2pi)`.
pub fn reduce_angle(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y >= TAU {
        0.0
    } else {
        y
    }
}

/// Reduce an angle to `(-pi, pi]`.
pub fn wrap_pi(x: f64) -> f64 {
    let y = reduce_angle(x);
    if y > std::f64::consts::PI {
        y - TAU
    } else {
        y
    }
}

/// Shortest distance between two angles on the circle of circumference `period`.
pub fn angular_distance(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

/// Displacement magnitude, displacement angle, squeezing strength and
/// squeezing angle of a pure single-mode Gaussian state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProbe")]
pub struct ProbeState {
    alpha_mag: f64,
    tau: f64,
    r: f64,
    phi: f64,
}

#[derive(Deserialize)]
struct RawProbe {
    alpha_mag: f64,
    tau: f64,
    r: f64,
    phi: f64,
}

impl TryFrom<RawProbe> for ProbeState {
    type Error = Error;

    fn try_from(raw: RawProbe) -> Result<Self> {
        ProbeState::new(raw.alpha_mag, raw.tau, raw.r, raw.phi)
    }
}

impl ProbeState {
    pub fn new(alpha_mag: f64, tau: f64, r: f64, phi: f64) -> Result<Self> {
        for (name, v) in [("alpha_mag", alpha_mag), ("tau", tau), ("r", r), ("phi", phi)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite, got {v}")));
            }
        }
        if alpha_mag < 0.0 {
            return Err(Error::OutOfRange {
                name: "alpha_mag",
                value: alpha_mag,
                range: "[0, inf)",
            });
        }
        if r < 0.0 {
            return Err(Error::OutOfRange {
                name: "r",
                value: r,
                range: "[0, inf)",
            });
        }
        Ok(Self {
            alpha_mag,
            tau: reduce_angle(tau),
            r,
            phi: reduce_angle(phi),
        })
    }

    pub fn vacuum() -> Self {
        Self {
            alpha_mag: 0.0,
            tau: 0.0,
            r: 0.0,
            phi: 0.0,
        }
    }

    /// Builds a probe of total energy `energy`, putting `alpha_mag^2` into the
    /// displacement and the remainder into squeezing.
    pub fn with_energy(energy: f64, alpha_mag: f64, tau: f64, phi: f64) -> Result<Self> {
        let r = squeeze_from_energy(energy, alpha_mag)?;
        Self::new(alpha_mag, tau, r, phi)
    }

    pub fn alpha_mag(&self) -> f64 {
        self.alpha_mag
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn energy(&self) -> f64 {
        energy(self)
    }

    /// Largest componentwise difference to `other`, using angular distance
    /// for `tau` and `phi`.
    pub fn distance(&self, other: &ProbeState) -> f64 {
        [
            (self.alpha_mag - other.alpha_mag).abs(),
            (self.r - other.r).abs(),
            angular_distance(self.tau, other.tau, TAU),
            angular_distance(self.phi, other.phi, TAU),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Mean photon number `|alpha|^2 + sinh^2 r`.
pub fn energy(probe: &ProbeState) -> f64 {
    let s = probe.r.sinh();
    probe.alpha_mag * probe.alpha_mag + s * s
}

/// Squeezing strength that exhausts the budget `energy` once `alpha_mag^2`
/// has gone into the displacement.
pub fn squeeze_from_energy(energy: f64, alpha_mag: f64) -> Result<f64> {
    if !energy.is_finite() || energy < 0.0 {
        return Err(Error::OutOfRange {
            name: "energy",
            value: energy,
            range: "[0, inf)",
        });
    }
    if !alpha_mag.is_finite() || alpha_mag < 0.0 {
        return Err(Error::OutOfRange {
            name: "alpha_mag",
            value: alpha_mag,
            range: "[0, inf)",
        });
    }
    let alpha2 = alpha_mag * alpha_mag;
    let rest = energy - alpha2;
    if rest < 0.0 {
        // tolerate rounding from alpha_mag = sqrt(E)
        if rest > -1e-12 * energy.max(1.0) {
            return Ok(0.0);
        }
        return Err(Error::ConstraintViolation { alpha2, energy });
    }
    Ok(rest.sqrt().asinh())
}

/// First and second moments of a single-mode Gaussian state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

impl Moments {
    pub fn det(&self) -> f64 {
        self.cov[0][0] * self.cov[1][1] - self.cov[0][1] * self.cov[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.cov[0][0] + self.cov[1][1]
    }

    /// Applies the phase-space rotation `R(angle)` to both moments:
    /// `mean -> R mean`, `cov -> R cov R^T`.
    pub fn rotate(&self, angle: f64) -> Moments {
        let (s, c) = angle.sin_cos();
        let rot = [[c, -s], [s, c]];
        let mut mean = [0.0; 2];
        for (i, row) in rot.iter().enumerate() {
            mean[i] = row[0] * self.mean[0] + row[1] * self.mean[1];
        }
        let mut cov = [[0.0; 2]; 2];
        for (i, cov_row) in cov.iter_mut().enumerate() {
            for (j, entry) in cov_row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for k in 0..2 {
                    for l in 0..2 {
                        acc += rot[i][k] * self.cov[k][l] * rot[j][l];
                    }
                }
                *entry = acc;
            }
        }
        Moments { mean, cov }
    }
}

/// Moments of the probe after the unknown rotation by `theta`.
///
/// The displacement turns to `tau - theta` while the squeezing ellipse
/// carries `2 theta + phi`, i.e. both moments transform under the same
/// rotation `R(-theta)`.
pub fn rotated_moments(probe: &ProbeState, theta: f64) -> Moments {
    let amp = std::f64::consts::SQRT_2 * probe.alpha_mag;
    let (sd, cd) = (probe.tau - theta).sin_cos();
    let (sx, cx) = (2.0 * theta + probe.phi).sin_cos();
    let ch = (2.0 * probe.r).cosh();
    let sh = (2.0 * probe.r).sinh();
    Moments {
        mean: [amp * cd, amp * sd],
        cov: [
            [0.5 * (ch - cx * sh), 0.5 * sx * sh],
            [0.5 * sx * sh, 0.5 * (ch + cx * sh)],
        ],
    }
}
