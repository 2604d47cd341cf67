//! Simulation and analysis of the four macroscopic polarization Bell states of
//! two-color bright squeezed vacuum.
//!
//! * [`gaussian`]: exact four-mode Gaussian engine (squeezers, waveplates,
//!   loss, displacement, Wick-factorized moments of quadratic observables).
//! * [`stokes`]: Stokes coefficient matrices, waveplate-rotated observables,
//!   noise reduction factors and uncertainty checks.
//! * [`optics`]: source and preparation chain (two-crystal interferometer,
//!   basis rotation, dichroic plate).
//! * [`fock`]: truncated Fock-space oracle used to validate the Gaussian engine.
//! * [`detection`]: Monte Carlo pulse sampling, electronic noise, shot-noise
//!   calibration and NRF estimation with blocked-bootstrap errors.
//! * [`scenario`] and [`experiment`]: configuration documents and the runners
//!   behind the `polbell` command-line tool.

pub mod detection;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod fock;
pub mod gaussian;
pub mod optics;
pub mod scenario;
pub mod stokes;

pub use error::{Error, Result};
pub use exec::Exec;
pub use gaussian::{Band, GaussianState, Mode};
pub use optics::BellKind;
pub use stokes::{Plate, StokesForm};
