//! Simulation and inference for a two-cavity microwave optomechanical system in
//! which one cavity prepares a squeezed mechanical state by reservoir engineering
//! and the other reads it out with a backaction-evading single-quadrature
//! measurement.
//!
//! The steady-state physics is computed three independent ways:
//!
//! * [`analytic`]: closed-form adiabatic-limit quadrature variances,
//! * [`dynamics`]: the exact linearized two-cavity model (Lyapunov covariance,
//!   output noise spectra, driven reflection response),
//! * [`oracle`]: a truncated Fock-space Lindblad master equation with
//!   adiabatically eliminated cavities.
//!
//! [`synthesis`] turns ideal spectra into averaged-periodogram measurements and
//! [`inference`] runs the analysis chain on them. [`expcli`] ties everything to
//! JSON configs and reproducible scenario runs.
//!
//! Quadratures use X = b + b†, P = −i(b − b†), so the vacuum variance is 1 and a
//! thermal state with occupancy n has variance 2n + 1.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod csvio;
pub mod dynamics;
pub mod error;
pub mod expcli;
pub mod inference;
pub mod oracle;
pub mod synthesis;
pub mod sysmodel;

pub use error::{Error, Result};
pub use sysmodel::{hz, to_hz, CavityIndex, Drive, DriveSet, Sideband, SystemConfig};
