//! Discrete-event Monte Carlo simulation of polarization-entangled photon
//! pairs where one photon is stored in a loop-and-switch optical memory and
//! the other travels through a passive fiber delay.
//!
//! The crate is split by role:
//!
//! - [`polcore`]: exact two-qubit polarization algebra (density matrices,
//!   Jones operators, projective measurement probabilities).
//! - [`components`]: the optical devices (pulsed pair source, Shih–Alley
//!   combiner, fiber delays, the storage loop and its tap beamsplitter,
//!   detectors) as transformers of [`components::PhotonEvent`]s.
//! - [`engine`]: the heralded and periodic operating modes, coincidence
//!   counting and polarizer sweeps, with seeded, block-parallel trials.
//! - [`oracle`]: closed-form expected values for every Monte Carlo observable.
//! - [`analysis`]: fringe fits, visibilities, loss fits and CHSH values.

pub mod analysis;
pub mod components;
pub mod engine;
mod error;
pub mod oracle;
pub mod polcore;

pub use error::{Error, Result};
