//! Physical constants shared by every formula in the crate.
//!
//! All energies are in eV. Every rate, energy and probability computed
//! anywhere in the crate goes through these values, so acceptance numbers
//! stay mutually consistent.

/// Reduced Planck constant (eV·s).
pub const HBAR_EV_S: f64 = 6.58212e-16;

/// h·c (eV·cm): converts a wavenumber in cm⁻¹ to eV.
pub const HC_EV_CM: f64 = 1.23984e-4;

/// Boltzmann constant (eV/K).
pub const K_B_EV_PER_K: f64 = 8.61733e-5;

/// Elementary charge (J/eV).
pub const JOULE_PER_EV: f64 = 1.602176634e-19;
