//! Headline numbers derived from a measured correlated-pair rate.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::FitResult;
use crate::physics::{interaction_amplitude_from_rate, photons_per_pulse, project_enhancement, LaserConfig};

/// Pair-rate enhancement used for the twisted-bilayer-graphene projection.
pub const TBG_RATE_ENHANCEMENT: f64 = 390.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub laser: LaserConfig,
    pub photons_per_pulse: f64,
    pub incident_photons_per_s: f64,
    pub corr_rate_cps: f64,
    pub delta_k: f64,
    pub delta_ev: f64,
    /// Δ / |α_L|².
    pub v0_ev: f64,
    pub pairs_per_incident_photon: f64,
    pub tbg_delta_ev: Option<f64>,
    pub power_exponent: Option<(f64, f64)>,
}

pub fn build_report(
    laser: &LaserConfig,
    corr_rate_cps: f64,
    delta_k: f64,
    tbg_projection: bool,
    power_fit: Option<&FitResult>,
) -> Result<Report> {
    laser.validate()?;
    if !(laser.power_w > 0.0) {
        return Err(Error::invalid("report needs a positive laser power"));
    }
    let delta_ev = interaction_amplitude_from_rate(corr_rate_cps, delta_k, laser)?;
    let alpha2 = photons_per_pulse(laser);
    let flux = laser.photon_flux();
    let power_exponent = match power_fit {
        Some(f) => {
            let p = f.get("exponent").ok_or_else(|| Error::invalid("power fit has no `exponent` parameter"))?;
            Some((p.value, p.std_error))
        }
        None => None,
    };
    Ok(Report {
        laser: *laser,
        photons_per_pulse: alpha2,
        incident_photons_per_s: flux,
        corr_rate_cps,
        delta_k,
        delta_ev,
        v0_ev: delta_ev / alpha2,
        pairs_per_incident_photon: corr_rate_cps / flux,
        tbg_delta_ev: tbg_projection.then(|| project_enhancement(delta_ev, TBG_RATE_ENHANCEMENT)),
        power_exponent,
    })
}

impl Report {
    /// (quantity, value, unit) rows, shared by the text and CSV renderings.
    pub fn rows(&self) -> Vec<(&'static str, f64, &'static str)> {
        let l = &self.laser;
        let mut rows = vec![
            ("wavelength", l.wavelength_nm, "nm"),
            ("pulse_width", l.pulse_width_s, "s"),
            ("rep_rate", l.rep_rate_hz, "Hz"),
            ("power", l.power_w, "W"),
            ("photons_per_pulse", self.photons_per_pulse, "1"),
            ("incident_photons_per_s", self.incident_photons_per_s, "1/s"),
            ("corr_rate", self.corr_rate_cps, "1/s"),
            ("delta_k", self.delta_k, "1"),
            ("delta", self.delta_ev, "eV"),
            ("v0", self.v0_ev, "eV"),
            ("pairs_per_incident_photon", self.pairs_per_incident_photon, "1"),
        ];
        if let Some(d) = self.tbg_delta_ev {
            rows.push(("tbg_delta", d, "eV"));
        }
        if let Some((b, se)) = self.power_exponent {
            rows.push(("power_exponent", b, "1"));
            rows.push(("power_exponent_std_error", se, "1"));
        }
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("quantity,value,unit\n");
        for (q, v, u) in self.rows() {
            let _ = writeln!(s, "{q},{v:e},{u}");
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let l = &self.laser;
        let _ = writeln!(
            s,
            "pump: {:.0} nm, {:.0} fs, {:.1} MHz, {:.1} mW",
            l.wavelength_nm,
            l.pulse_width_s * 1e15,
            l.rep_rate_hz * 1e-6,
            l.power_w * 1e3
        );
        let _ = writeln!(s, "photons per pulse         {:.4e}", self.photons_per_pulse);
        let _ = writeln!(s, "incident photons per s    {:.4e}", self.incident_photons_per_s);
        let _ = writeln!(s, "correlated rate           {:.4} /s", self.corr_rate_cps);
        let _ = writeln!(s, "spectral fraction dk      {:.5}", self.delta_k);
        let _ = writeln!(s, "interaction amplitude     {:.4e} eV ({:.2} ueV)", self.delta_ev, self.delta_ev * 1e6);
        let _ = writeln!(s, "pairing potential V0      {:.4e} eV ({:.2} feV)", self.v0_ev, self.v0_ev * 1e15);
        let _ = writeln!(s, "pairs per incident photon {:.4e}", self.pairs_per_incident_photon);
        if let Some(d) = self.tbg_delta_ev {
            let _ = writeln!(
                s,
                "TBG projection (x{TBG_RATE_ENHANCEMENT:.0} rate) {:.4e} eV ({:.3} meV)",
                d,
                d * 1e3
            );
        }
        if let Some((b, se)) = self.power_exponent {
            let _ = writeln!(s, "power-law exponent        {b:.3} +/- {se:.3}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn diamond_scenario() {
        let r = build_report(&LaserConfig::reference(), 20.0, 26.0 / 1332.0, true, None).unwrap();
        assert_relative_eq!(r.photons_per_pulse, 1.677158e9, max_relative = 1e-5);
        assert_relative_eq!(r.delta_ev, 1.2084e-5, max_relative = 1e-4);
        assert_relative_eq!(r.v0_ev, 7.205e-15, max_relative = 1e-3);
        assert_relative_eq!(r.pairs_per_incident_photon, 1.569e-16, max_relative = 1e-3);
        assert_relative_eq!(r.tbg_delta_ev.unwrap(), 2.3864e-4, max_relative = 1e-4);
        assert!(r.to_text().contains("TBG"));
        assert!(r.to_csv().lines().any(|l| l.starts_with("tbg_delta,")));
    }

    #[test]
    fn zero_rate_gives_zero_energies() {
        let r = build_report(&LaserConfig::reference(), 0.0, 0.02, true, None).unwrap();
        assert_eq!((r.delta_ev, r.v0_ev, r.pairs_per_incident_photon), (0.0, 0.0, 0.0));
        assert_eq!(r.tbg_delta_ev, Some(0.0));
        assert!(r.to_csv().contains("tbg_delta,0e0,eV"));
    }
}
