//! Optimal pure single-mode Gaussian probes for phase estimation with
//! homodyne detection, as a function of prior knowledge of the phase.
//!
//! The crate is organised bottom-up:
//!
//! - [`gaussian`]: probe parametrization, energy budget, rotated moments
//! - [`homodyne`]: outcome distribution of position-quadrature detection
//! - [`fisher`]: Fisher information, QFI, local optima and Van Trees bounds
//! - [`bayes`]: grid posteriors and the average posterior variance (APV)
//! - [`optimizer`]: APV minimization over probe families
//! - [`simulator`]: repeated-measurement trajectory ensembles
//! - [`cli`]: the `gaussprobe` batch front end

pub mod bayes;
pub mod cli;
pub mod error;
pub mod fisher;
pub mod gaussian;
pub mod homodyne;
pub mod optimizer;
pub mod simulator;

pub use error::{Error, Result};
pub use gaussian::ProbeState;
