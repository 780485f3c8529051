//! Simulation and coincidence analysis of correlated Stokes/anti-Stokes
//! photon pairs produced by a pulsed pump in a Raman-active medium.
//!
//! - [`physics`]: pump bookkeeping, step pairing potential, pair-rate formula
//!   and its inversions.
//! - [`sim`]: seeded, block-parallel Monte Carlo of S/aS detection streams.
//! - [`coincidence`]: delay histograms, g² and correlated-rate extraction.
//! - [`spatial`]: iris-aperture transmission model and profile fits.
//! - [`fitting`]: peak areas, step constants and scaling-law fits.
//! - [`config`], [`report`], [`synth`], [`cli`]: files, reports and the `sas` tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod constants;
pub mod error;
pub mod physics;
pub mod spectrum;
pub mod stream;
pub mod sim;
pub mod coincidence;
pub mod spatial;
pub mod fitting;
pub mod datafile;
pub mod config;
pub mod synth;
pub mod report;
pub mod cli;

pub use error::{Error, Result};
