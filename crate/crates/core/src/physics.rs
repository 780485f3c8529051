//! Pump-laser bookkeeping, the step-potential pairing model and the
//! closed-form pair-production rate with its inversions.
//!
//! Shifts are wavenumbers in cm⁻¹, energies in eV, times in s and rates in
//! counts/s throughout. Interaction energies are stored as positive
//! magnitudes; the attractive sign is applied only by [`step_potential`].

use serde::{Deserialize, Serialize};

use crate::constants::{HBAR_EV_S, HC_EV_CM, JOULE_PER_EV, K_B_EV_PER_K};
use crate::error::{Error, Result};

/// Converts a Raman shift (cm⁻¹) to energy (eV). Odd in its argument.
pub fn shift_to_energy(shift_cm1: f64) -> f64 {
    shift_cm1 * HC_EV_CM
}

/// Inverse of [`shift_to_energy`].
pub fn energy_to_shift(energy_ev: f64) -> f64 {
    energy_ev / HC_EV_CM
}

/// Pulsed pump laser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserConfig {
    pub wavelength_nm: f64,
    pub pulse_width_s: f64,
    pub rep_rate_hz: f64,
    pub power_w: f64,
}

impl LaserConfig {
    pub fn new(wavelength_nm: f64, pulse_width_s: f64, rep_rate_hz: f64, power_w: f64) -> Result<Self> {
        let laser = LaserConfig {
            wavelength_nm,
            pulse_width_s,
            rep_rate_hz,
            power_w,
        };
        laser.validate()?;
        Ok(laser)
    }

    /// 633 nm, 200 fs, 76 MHz, 40 mW.
    pub fn reference() -> Self {
        LaserConfig {
            wavelength_nm: 633.0,
            pulse_width_s: 200e-15,
            rep_rate_hz: 76e6,
            power_w: 40e-3,
        }
    }

    pub fn with_power(self, power_w: f64) -> Self {
        LaserConfig { power_w, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !finite_pos(self.wavelength_nm) {
            return Err(Error::invalid(format!("wavelength must be > 0 nm, got {}", self.wavelength_nm)));
        }
        if !finite_pos(self.pulse_width_s) {
            return Err(Error::invalid(format!("pulse width must be > 0 s, got {}", self.pulse_width_s)));
        }
        if !finite_pos(self.rep_rate_hz) {
            return Err(Error::invalid(format!("repetition rate must be > 0 Hz, got {}", self.rep_rate_hz)));
        }
        // zero power is allowed: it is the natural origin of the P² law
        if !(self.power_w.is_finite() && self.power_w >= 0.0) {
            return Err(Error::invalid(format!("power must be >= 0 W, got {}", self.power_w)));
        }
        if self.pulse_width_s * self.rep_rate_hz >= 1.0 {
            return Err(Error::invalid("pulse width × repetition rate must be < 1"));
        }
        Ok(())
    }

    /// Photon energy ħω_L in eV.
    pub fn photon_energy_ev(&self) -> f64 {
        // λ in nm -> cm
        HC_EV_CM / (self.wavelength_nm * 1e-7)
    }

    /// Pump photons per second, P_L / ħω_L.
    pub fn photon_flux(&self) -> f64 {
        self.power_w / JOULE_PER_EV / self.photon_energy_ev()
    }
}

/// Mean pump photon number per pulse |α_L|² = P_L / (ħω_L R_L).
pub fn photons_per_pulse(laser: &LaserConfig) -> f64 {
    laser.photon_flux() / laser.rep_rate_hz
}

/// Shift interval `[shift_lo, shift_hi)` over which the pair potential is −v0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialBand {
    pub shift_lo_cm1: f64,
    pub shift_hi_cm1: f64,
    /// Attractive magnitude V₀ (eV), ≥ 0.
    pub v0_ev: f64,
}

impl PotentialBand {
    pub fn new(shift_lo_cm1: f64, shift_hi_cm1: f64, v0_ev: f64) -> Result<Self> {
        let band = PotentialBand {
            shift_lo_cm1,
            shift_hi_cm1,
            v0_ev,
        };
        band.validate()?;
        Ok(band)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shift_lo_cm1 >= 0.0 && self.shift_lo_cm1 < self.shift_hi_cm1 && self.shift_hi_cm1.is_finite()) {
            return Err(Error::invalid(format!(
                "band needs 0 <= lo < hi, got [{}, {})",
                self.shift_lo_cm1, self.shift_hi_cm1
            )));
        }
        if !(self.v0_ev.is_finite() && self.v0_ev >= 0.0) {
            return Err(Error::invalid(format!("band V0 must be >= 0, got {}", self.v0_ev)));
        }
        Ok(())
    }

    pub fn contains(&self, abs_shift_cm1: f64) -> bool {
        abs_shift_cm1 >= self.shift_lo_cm1 && abs_shift_cm1 < self.shift_hi_cm1
    }

    /// Total shift range of non-zero potential reached by this band,
    /// measured from zero shift.
    pub fn total_range_cm1(&self) -> f64 {
        self.shift_hi_cm1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    pub shift_cm1: f64,
    pub intensity_cps: f64,
}

/// Raman-active medium: measured Stokes spectrum, temperature and the
/// pairing bands with the constants that set their strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    pub name: String,
    pub spectrum: Vec<SpectrumPoint>,
    pub temperature_k: f64,
    pub bands: Vec<PotentialBand>,
    /// Area under the first-order Stokes peak (counts·cm⁻¹/s).
    pub stokes_area_1st: f64,
    /// Area under the second-order Stokes feature (counts·cm⁻¹/s).
    pub stokes_area_2nd: f64,
    /// C¹ˢᵗ (eV·cm·s).
    pub coupling_c1: f64,
    /// C²ⁿᵈ (eV·cm·s).
    pub coupling_c2: f64,
}

/// Peak-area constant for the first-order diamond band: with C¹ˢᵗ it gives
/// V₀ ≈ 7.2 feV, i.e. ≈ 20 pairs/s at 40 mW inside a 26 cm⁻¹ window.
pub const DIAMOND_AREA_1ST: f64 = 1.2530e7;
pub const DIAMOND_AREA_2ND: f64 = 1.0e6;
pub const DIAMOND_C1: f64 = 5.75e-22;
pub const DIAMOND_C2: f64 = 3.35e-21;

impl MaterialModel {
    /// Diamond: first-order phonon at 1332 cm⁻¹, second-order feature at
    /// 2500 cm⁻¹, room temperature. The spectrum is a synthetic APD-style
    /// trace (instrument-limited Lorentzians on a flat background).
    pub fn diamond() -> Self {
        let spectrum = synthetic_spectrum(100.0, 3200.0, 2.0, |x| {
            300.0 + lorentzian(x, 1332.0, 13.0, 35_000.0) + lorentzian(x, 2500.0, 40.0, 1_500.0)
        });
        let v1 = v0_from_raman_area(DIAMOND_AREA_1ST, DIAMOND_C1);
        let v2 = v0_from_raman_area(DIAMOND_AREA_2ND, DIAMOND_C2);
        MaterialModel {
            name: "diamond".into(),
            spectrum,
            temperature_k: 295.0,
            bands: vec![
                PotentialBand {
                    shift_lo_cm1: 0.0,
                    shift_hi_cm1: 1332.0,
                    v0_ev: v1,
                },
                PotentialBand {
                    shift_lo_cm1: 1332.0,
                    shift_hi_cm1: 2500.0,
                    v0_ev: v2,
                },
            ],
            stokes_area_1st: DIAMOND_AREA_1ST,
            stokes_area_2nd: DIAMOND_AREA_2ND,
            coupling_c1: DIAMOND_C1,
            coupling_c2: DIAMOND_C2,
        }
    }

    /// Liquid decane: a single band up to its C-H stretch at ~2900 cm⁻¹.
    pub fn decane() -> Self {
        let spectrum = synthetic_spectrum(100.0, 3400.0, 2.0, |x| {
            200.0 + lorentzian(x, 2900.0, 30.0, 20_000.0) + lorentzian(x, 1440.0, 15.0, 4_000.0)
        });
        let area = 8.0e6;
        MaterialModel {
            name: "decane".into(),
            spectrum,
            temperature_k: 295.0,
            bands: vec![PotentialBand {
                shift_lo_cm1: 0.0,
                shift_hi_cm1: 2900.0,
                v0_ev: v0_from_raman_area(area, DIAMOND_C1),
            }],
            stokes_area_1st: area,
            stokes_area_2nd: 0.0,
            coupling_c1: DIAMOND_C1,
            coupling_c2: 0.0,
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "diamond" => Some(Self::diamond()),
            "decane" => Some(Self::decane()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature_k.is_finite() && self.temperature_k > 0.0) {
            return Err(Error::invalid(format!("temperature must be > 0 K, got {}", self.temperature_k)));
        }
        for (label, v) in [
            ("stokes_area_1st", self.stokes_area_1st),
            ("stokes_area_2nd", self.stokes_area_2nd),
            ("coupling_c1", self.coupling_c1),
            ("coupling_c2", self.coupling_c2),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{label} must be >= 0, got {v}")));
            }
        }
        for w in self.spectrum.windows(2) {
            if w[1].shift_cm1 <= w[0].shift_cm1 {
                return Err(Error::invalid(format!(
                    "spectrum shifts must be strictly increasing ({} then {})",
                    w[0].shift_cm1, w[1].shift_cm1
                )));
            }
        }
        for band in &self.bands {
            band.validate()?;
        }
        for w in self.bands.windows(2) {
            if w[1].shift_lo_cm1 < w[0].shift_hi_cm1 {
                return Err(Error::invalid("bands must be ordered and non-overlapping"));
            }
        }
        Ok(())
    }

    /// Band whose interval contains `|shift|`.
    pub fn band_for(&self, shift_cm1: f64) -> Option<&PotentialBand> {
        let s = shift_cm1.abs();
        self.bands.iter().find(|b| b.contains(s))
    }
}

fn lorentzian(x: f64, center: f64, hwhm: f64, peak: f64) -> f64 {
    let u = (x - center) / hwhm;
    peak / (1.0 + u * u)
}

fn synthetic_spectrum(lo: f64, hi: f64, step: f64, f: impl Fn(f64) -> f64) -> Vec<SpectrumPoint> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n)
        .map(|i| {
            let x = lo + step * i as f64;
            SpectrumPoint {
                shift_cm1: x,
                intensity_cps: f(x),
            }
        })
        .collect()
}

/// Pair potential at a given Raman shift: −V₀ of the band containing
/// `|shift|`, zero outside every band.
pub fn step_potential(shift_cm1: f64, material: &MaterialModel) -> f64 {
    match material.band_for(shift_cm1) {
        Some(b) => -b.v0_ev,
        None => 0.0,
    }
}

/// |V₀| = C · A_S.
pub fn v0_from_raman_area(area: f64, coupling_c: f64) -> f64 {
    area * coupling_c
}

/// Spectral-collection and detection settings of the APD setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectionConfig {
    pub mono_resolution_cm1: f64,
    pub stokes_center_cm1: f64,
    pub detection_efficiency_s: f64,
    pub detection_efficiency_as: f64,
    pub accumulation_time_s: f64,
}

impl Default for CollectionConfig {
    fn default() -> Self {
        CollectionConfig {
            mono_resolution_cm1: 26.0,
            stokes_center_cm1: 900.0,
            detection_efficiency_s: 1.0,
            detection_efficiency_as: 1.0,
            accumulation_time_s: 600.0,
        }
    }
}

impl CollectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mono_resolution_cm1.is_finite() && self.mono_resolution_cm1 > 0.0) {
            return Err(Error::invalid("monochromator resolution must be > 0"));
        }
        for (label, eta) in [
            ("detection_efficiency_s", self.detection_efficiency_s),
            ("detection_efficiency_as", self.detection_efficiency_as),
        ] {
            if !(0.0..=1.0).contains(&eta) {
                return Err(Error::invalid(format!("{label} must lie in [0, 1], got {eta}")));
            }
        }
        if !(self.accumulation_time_s.is_finite() && self.accumulation_time_s > 0.0) {
            return Err(Error::invalid("accumulation time must be > 0"));
        }
        if !self.stokes_center_cm1.is_finite() {
            return Err(Error::invalid("stokes center must be finite"));
        }
        Ok(())
    }

    /// Monochromator passband centred on the Stokes setting.
    pub fn stokes_window(&self) -> (f64, f64) {
        let half = 0.5 * self.mono_resolution_cm1;
        (self.stokes_center_cm1 - half, self.stokes_center_cm1 + half)
    }
}

/// Correlated pair production rate (counts/s):
/// Δk · (|α_L|² V₀ T_L / ħ)² · R_L.
pub fn pair_rate(laser: &LaserConfig, v0_ev: f64, delta_k: f64) -> f64 {
    let delta = v0_ev * photons_per_pulse(laser);
    rate_from_amplitude(delta, delta_k, laser)
}

/// Pair rate for a given transition amplitude Δ = V₀|α_L|² (eV).
pub fn rate_from_amplitude(delta_ev: f64, delta_k: f64, laser: &LaserConfig) -> f64 {
    delta_k * transition_probability(delta_ev, laser.pulse_width_s) * laser.rep_rate_hz
}

/// p = |Δ|² dt² / ħ².
pub fn transition_probability(delta_ev: f64, dt_s: f64) -> f64 {
    let x = delta_ev * dt_s / HBAR_EV_S;
    x * x
}

/// Spectral collection fraction: resolution over the band's total range,
/// capped at 1.
pub fn delta_k(collection: &CollectionConfig, band: &PotentialBand) -> Result<f64> {
    if !(collection.mono_resolution_cm1 > 0.0) {
        return Err(Error::invalid("monochromator resolution must be > 0"));
    }
    let range = band.total_range_cm1();
    if !(range > 0.0) {
        return Err(Error::invalid("band range must be > 0"));
    }
    Ok((collection.mono_resolution_cm1 / range).min(1.0))
}

/// Inverts [`pair_rate`] for the transition amplitude
/// Δ = (ħ/T_L) · sqrt(rate / (Δk R_L)).
pub fn interaction_amplitude_from_rate(rate: f64, delta_k: f64, laser: &LaserConfig) -> Result<f64> {
    if !(rate >= 0.0) {
        return Err(Error::invalid(format!("rate must be >= 0, got {rate}")));
    }
    let denom = delta_k * laser.rep_rate_hz;
    if !(denom > 0.0) {
        return Err(Error::invalid("Δk · R_L must be > 0"));
    }
    Ok(HBAR_EV_S / laser.pulse_width_s * (rate / denom).sqrt())
}

/// Scales an interaction amplitude by a pair-rate enhancement factor.
/// The rate goes as Δ², so Δ scales with the square root.
pub fn project_enhancement(delta_ev: f64, enhancement_factor: f64) -> f64 {
    delta_ev * enhancement_factor.max(0.0).sqrt()
}

/// Bose–Einstein occupation of a phonon mode.
pub fn bose_occupation(phonon_energy_ev: f64, temperature_k: f64) -> f64 {
    let x = phonon_energy_ev / (K_B_EV_PER_K * temperature_k);
    // exp_m1 keeps precision for x → 0 and returns inf for large x
    1.0 / x.exp_m1()
}
