//! Experiment configuration files.
//!
//! TOML with one table per concern and units spelled out in every key.
//! Unknown keys are rejected. Every table is optional; omitted values take
//! the defaults listed below (the 633 nm / 76 MHz / 40 mW diamond setup).
//!
//! ```toml
//! [laser]
//! wavelength_nm = 633.0
//! pulse_width_fs = 200.0
//! rep_rate_mhz = 76.0
//! power_mw = 40.0
//!
//! [material]
//! preset = "diamond"            # built-in: diamond, decane
//! # file = "my_material.toml"   # or a material file, relative to this config
//!
//! [collection]
//! mono_resolution_cm1 = 26.0
//! stokes_center_cm1 = 900.0
//! # window_cm1 = [887.0, 913.0] # default: resolution-wide, centred
//! detection_efficiency_s = 1.0
//! detection_efficiency_as = 1.0
//! accumulation_time_s = 600.0
//!
//! [simulation]
//! n_pulses = 76000000
//! seed = 0
//! max_delay_pulses = 50
//! dark_prob_s = 0.0             # per pulse
//! dark_prob_as = 0.0
//!
//! # [probabilities]             # bypasses derivation from the physics model
//! # p_s = 1e-4
//! # p_as = 1e-4
//! # p_pair = 0.0
//!
//! [output]
//! dir = "sas-out"
//! format = "csv"                # csv | bin
//! ```
//!
//! A material file:
//!
//! ```toml
//! name = "diamond"
//! temperature_k = 295.0
//! spectrum_csv = "diamond_spectrum.csv"   # header shift_cm1,intensity_cps
//! stokes_area_1st = 1.253e7
//! stokes_area_2nd = 1.0e6
//! coupling_c1_ev_cm_s = 5.75e-22
//! coupling_c2_ev_cm_s = 3.35e-21
//!
//! [[bands]]
//! shift_lo_cm1 = 0.0
//! shift_hi_cm1 = 1332.0
//! # v0_ev = 7.2e-15   # default: C·A of the matching order
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::coincidence::DEFAULT_MAX_DELAY;
use crate::datafile;
use crate::error::{Error, Result};
use crate::physics::{v0_from_raman_area, CollectionConfig, LaserConfig, MaterialModel, PotentialBand};
use crate::sim::ChannelProbabilities;
use crate::stream::StreamFormat;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n_pulses: u64,
    pub seed: u64,
    pub max_delay: u64,
    pub dark_prob_s: f64,
    pub dark_prob_as: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: StreamFormat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub laser: LaserConfig,
    pub material: MaterialModel,
    pub collection: CollectionConfig,
    pub stokes_window: (f64, f64),
    pub simulation: SimulationConfig,
    /// Explicit per-pulse probabilities, replacing the physics derivation.
    pub probabilities: Option<ChannelProbabilities>,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        RawConfig::default().resolve(Path::new(".")).expect("defaults are valid")
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    laser: RawLaser,
    material: RawMaterialRef,
    collection: RawCollection,
    simulation: RawSimulation,
    probabilities: Option<RawProbabilities>,
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawLaser {
    wavelength_nm: f64,
    pulse_width_fs: f64,
    rep_rate_mhz: f64,
    power_mw: f64,
}

impl Default for RawLaser {
    fn default() -> Self {
        RawLaser {
            wavelength_nm: 633.0,
            pulse_width_fs: 200.0,
            rep_rate_mhz: 76.0,
            power_mw: 40.0,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawMaterialRef {
    preset: Option<String>,
    file: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawCollection {
    mono_resolution_cm1: f64,
    stokes_center_cm1: f64,
    window_cm1: Option<[f64; 2]>,
    detection_efficiency_s: f64,
    detection_efficiency_as: f64,
    accumulation_time_s: f64,
}

impl Default for RawCollection {
    fn default() -> Self {
        let c = CollectionConfig::default();
        RawCollection {
            mono_resolution_cm1: c.mono_resolution_cm1,
            stokes_center_cm1: c.stokes_center_cm1,
            window_cm1: None,
            detection_efficiency_s: c.detection_efficiency_s,
            detection_efficiency_as: c.detection_efficiency_as,
            accumulation_time_s: c.accumulation_time_s,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSimulation {
    n_pulses: u64,
    seed: u64,
    max_delay_pulses: u64,
    dark_prob_s: f64,
    dark_prob_as: f64,
}

impl Default for RawSimulation {
    fn default() -> Self {
        RawSimulation {
            n_pulses: 76_000_000,
            seed: 0,
            max_delay_pulses: DEFAULT_MAX_DELAY,
            dark_prob_s: 0.0,
            dark_prob_as: 0.0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProbabilities {
    p_s: f64,
    p_as: f64,
    p_pair: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOutput {
    dir: PathBuf,
    format: StreamFormat,
}

impl Default for RawOutput {
    fn default() -> Self {
        RawOutput {
            dir: PathBuf::from("sas-out"),
            format: StreamFormat::Csv,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMaterialFile {
    name: String,
    temperature_k: f64,
    spectrum_csv: Option<PathBuf>,
    #[serde(default)]
    stokes_area_1st: f64,
    #[serde(default)]
    stokes_area_2nd: f64,
    #[serde(default)]
    coupling_c1_ev_cm_s: f64,
    #[serde(default)]
    coupling_c2_ev_cm_s: f64,
    #[serde(default)]
    bands: Vec<RawBand>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBand {
    shift_lo_cm1: f64,
    shift_hi_cm1: f64,
    v0_ev: Option<f64>,
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl RawConfig {
    fn resolve(self, base_dir: &Path) -> Result<ExperimentConfig> {
        let l = self.laser;
        let laser = LaserConfig::new(l.wavelength_nm, l.pulse_width_fs * 1e-15, l.rep_rate_mhz * 1e6, l.power_mw * 1e-3)
            .map_err(|e| config_err(format!("[laser] {e}")))?;

        let material = match (self.material.preset, self.material.file) {
            (Some(_), Some(_)) => return Err(config_err("[material] give either `preset` or `file`, not both")),
            (None, Some(file)) => load_material(&base_dir.join(file))?,
            (preset, None) => {
                let name = preset.unwrap_or_else(|| "diamond".into());
                MaterialModel::builtin(&name).ok_or_else(|| config_err(format!("[material] unknown preset `{name}`")))?
            }
        };

        let c = self.collection;
        let collection = CollectionConfig {
            mono_resolution_cm1: c.mono_resolution_cm1,
            stokes_center_cm1: c.stokes_center_cm1,
            detection_efficiency_s: c.detection_efficiency_s,
            detection_efficiency_as: c.detection_efficiency_as,
            accumulation_time_s: c.accumulation_time_s,
        };
        collection.validate().map_err(|e| config_err(format!("[collection] {e}")))?;
        let stokes_window = match c.window_cm1 {
            Some([lo, hi]) if lo < hi => (lo, hi),
            Some([lo, hi]) => return Err(config_err(format!("[collection] window_cm1 [{lo}, {hi}] is empty"))),
            None => collection.stokes_window(),
        };

        let s = self.simulation;
        if s.n_pulses == 0 {
            return Err(config_err("[simulation] n_pulses must be >= 1"));
        }
        if s.max_delay_pulses == 0 {
            return Err(config_err("[simulation] max_delay_pulses must be >= 1"));
        }
        for (k, v) in [("dark_prob_s", s.dark_prob_s), ("dark_prob_as", s.dark_prob_as)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(config_err(format!("[simulation] {k} must lie in [0, 1]")));
            }
        }

        let probabilities = self
            .probabilities
            .map(|p| ChannelProbabilities::new(p.p_s, p.p_as, p.p_pair))
            .transpose()
            .map_err(|e| config_err(format!("[probabilities] {e}")))?;

        Ok(ExperimentConfig {
            laser,
            material,
            collection,
            stokes_window,
            simulation: SimulationConfig {
                n_pulses: s.n_pulses,
                seed: s.seed,
                max_delay: s.max_delay_pulses,
                dark_prob_s: s.dark_prob_s,
                dark_prob_as: s.dark_prob_as,
            },
            probabilities,
            output: OutputConfig {
                dir: base_dir.join(self.output.dir),
                format: self.output.format,
            },
        })
    }
}

/// Parses a config; relative paths inside it resolve against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(config_err)?;
    raw.resolve(base_dir)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn load_material(path: &Path) -> Result<MaterialModel> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let raw: RawMaterialFile = toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let spectrum = match raw.spectrum_csv {
        Some(p) => datafile::read_spectrum(&base.join(p))?,
        None => Vec::new(),
    };
    let orders = [
        (raw.stokes_area_1st, raw.coupling_c1_ev_cm_s),
        (raw.stokes_area_2nd, raw.coupling_c2_ev_cm_s),
    ];
    let bands = raw
        .bands
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let v0 = match (b.v0_ev, orders.get(i)) {
                (Some(v), _) => v,
                (None, Some(&(area, c))) => v0_from_raman_area(area, c),
                (None, None) => return Err(config_err(format!("band {} needs an explicit v0_ev", i + 1))),
            };
            PotentialBand::new(b.shift_lo_cm1, b.shift_hi_cm1, v0)
        })
        .collect::<Result<Vec<_>>>()?;
    let material = MaterialModel {
        name: raw.name,
        spectrum,
        temperature_k: raw.temperature_k,
        bands,
        stokes_area_1st: raw.stokes_area_1st,
        stokes_area_2nd: raw.stokes_area_2nd,
        coupling_c1: raw.coupling_c1_ev_cm_s,
        coupling_c2: raw.coupling_c2_ev_cm_s,
    };
    material.validate().map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    Ok(material)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_reference_setup() {
        let c = parse_config("", Path::new("/tmp")).unwrap();
        assert_eq!(c.laser, LaserConfig::reference());
        assert_eq!(c.material.name, "diamond");
        assert_eq!(c.stokes_window, (887.0, 913.0));
        assert_eq!(c.simulation.max_delay, 50);
        assert_eq!(c.output.dir, Path::new("/tmp/sas-out"));
        assert!(c.probabilities.is_none());
    }

    #[test]
    fn units_are_converted() {
        let c = parse_config(
            "[laser]\npower_mw = 20\npulse_width_fs = 100\nrep_rate_mhz = 80\n[output]\nformat = \"bin\"\n",
            Path::new("."),
        )
        .unwrap();
        assert_eq!(c.laser.power_w, 0.02);
        assert!((c.laser.pulse_width_s - 1e-13).abs() < 1e-25);
        assert_eq!(c.laser.rep_rate_hz, 80e6);
        assert_eq!(c.output.format, StreamFormat::Bin);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(parse_config("[laser]\npower_w = 1\n", Path::new(".")), Err(Error::Config(_))));
        assert!(matches!(parse_config("[lazer]\n", Path::new(".")), Err(Error::Config(_))));
        assert!(matches!(parse_config("[probabilities]\np_s = 0\np_as = 0\n", Path::new(".")), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_values_are_rejected() {
        for bad in [
            "[laser]\npower_mw = -1\n",
            "[collection]\ndetection_efficiency_s = 1.5\n",
            "[collection]\nwindow_cm1 = [900.0, 880.0]\n",
            "[simulation]\nn_pulses = 0\n",
            "[material]\npreset = \"unobtainium\"\n",
            "[probabilities]\np_s = 0.9\np_as = 0\np_pair = 0.2\n",
        ] {
            assert!(matches!(parse_config(bad, Path::new(".")), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn material_file_with_spectrum() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("raman.csv"), "shift_cm1,intensity_cps\n0,10\n3000,10\n").unwrap();
        std::fs::write(
            dir.path().join("m.toml"),
            "name = \"test\"\ntemperature_k = 300\nspectrum_csv = \"raman.csv\"\nstokes_area_1st = 2e7\ncoupling_c1_ev_cm_s = 5e-22\n\n[[bands]]\nshift_lo_cm1 = 0\nshift_hi_cm1 = 1000\n\n[[bands]]\nshift_lo_cm1 = 1000\nshift_hi_cm1 = 2000\nv0_ev = 1e-15\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("exp.toml"), "[material]\nfile = \"m.toml\"\n").unwrap();
        let c = load_config(&dir.path().join("exp.toml")).unwrap();
        assert_eq!(c.material.name, "test");
        assert_eq!(c.material.spectrum.len(), 2);
        assert!((c.material.bands[0].v0_ev - 1e-14).abs() < 1e-28);
        assert_eq!(c.material.bands[1].v0_ev, 1e-15);

        std::fs::write(dir.path().join("m.toml"), "name = \"x\"\ntemperature_k = 300\ncolour = 1\n").unwrap();
        assert!(load_config(&dir.path().join("exp.toml")).is_err());
    }
}
