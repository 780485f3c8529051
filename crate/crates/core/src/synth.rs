//! Seeded synthetic datasets for exercising the fitters end to end.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{step_band_gains, step_model_rate, RatePoint, ScalingPoint, SpectralRateSeries};
use crate::physics::{pair_rate, CollectionConfig, LaserConfig, MaterialModel};
use crate::spatial::{ApertureChannel, ApertureCurve, SpatialProfile};

/// Quoted relative uncertainty on every in-band synthetic rate point.
pub const QUOTED_REL_UNCERTAINTY: f64 = 0.05;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSynth {
    pub c1: f64,
    pub c2: f64,
    /// Relative Gaussian noise on each in-band rate; 0 for exact data.
    pub noise_rel: f64,
    /// Shift magnitudes; every other point is placed on the anti-Stokes side.
    pub shifts_cm1: Vec<f64>,
    pub seed: u64,
}

impl SpectralSynth {
    /// Diamond constants over 100..3000 cm⁻¹ in 100 cm⁻¹ steps.
    pub fn diamond(noise_rel: f64, seed: u64) -> Self {
        let m = MaterialModel::diamond();
        SpectralSynth {
            c1: m.coupling_c1,
            c2: m.coupling_c2,
            noise_rel,
            shifts_cm1: (1..=30).map(|i| 100.0 * i as f64).collect(),
            seed,
        }
    }
}

/// Correlated rate versus shift from the step model.
///
/// In-band points carry a quoted uncertainty of 5% of the true rate.
/// Points outside every band have true rate 0; their noise and quoted
/// uncertainty are scaled to the smallest in-band rate instead.
pub fn spectral_series(
    params: &SpectralSynth,
    material: &MaterialModel,
    laser: &LaserConfig,
    collection: &CollectionConfig,
) -> Result<SpectralRateSeries> {
    if !(params.noise_rel >= 0.0 && params.noise_rel.is_finite()) {
        return Err(Error::invalid("noise_rel must be finite and >= 0"));
    }
    let gains = step_band_gains(laser, collection, material)?;
    let c = [params.c1, params.c2];
    let truth: Vec<f64> = params
        .shifts_cm1
        .iter()
        .map(|&s| step_model_rate(s, &gains, material, &c[..gains.len()]))
        .collect();
    let floor = truth.iter().copied().filter(|&t| t > 0.0).fold(f64::INFINITY, f64::min);
    if !floor.is_finite() {
        return Err(Error::invalid("no shift falls inside a band with a nonzero rate"));
    }
    let mut rng = rng(params.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let points = params
        .shifts_cm1
        .iter()
        .zip(&truth)
        .enumerate()
        .map(|(i, (&s, &t))| {
            let shift = if i % 2 == 1 { -s } else { s };
            let z: f64 = unit.sample(&mut rng);
            if t > 0.0 {
                RatePoint {
                    shift_cm1: shift,
                    corr_rate: t * (1.0 + params.noise_rel * z),
                    uncertainty: QUOTED_REL_UNCERTAINTY * t,
                }
            } else {
                RatePoint {
                    shift_cm1: shift,
                    corr_rate: params.noise_rel * floor * z,
                    uncertainty: QUOTED_REL_UNCERTAINTY * floor,
                }
            }
        })
        .collect();
    Ok(SpectralRateSeries {
        points,
        laser: *laser,
        collection: *collection,
    })
}

/// Pair rate at each power with Poisson counting noise over
/// `accumulation_s`. The uncertainty is sqrt(max(N, 1)) / T.
pub fn power_series(
    laser: &LaserConfig,
    v0_ev: f64,
    delta_k: f64,
    powers_w: &[f64],
    accumulation_s: f64,
    seed: u64,
) -> Result<Vec<ScalingPoint>> {
    if !(accumulation_s > 0.0) {
        return Err(Error::invalid("accumulation time must be > 0"));
    }
    let mut rng = rng(seed);
    powers_w
        .iter()
        .map(|&p| {
            let l = laser.with_power(p);
            l.validate()?;
            let mean = pair_rate(&l, v0_ev, delta_k) * accumulation_s;
            let n = poisson(&mut rng, mean)?;
            Ok(ScalingPoint::new(p, n / accumulation_s, n.max(1.0).sqrt() / accumulation_s))
        })
        .collect()
}

/// Correlated rate `slope · x` for each squared-area value, with Poisson
/// noise over `accumulation_s`.
pub fn cross_section_series(slope: f64, area_sq: &[f64], accumulation_s: f64, seed: u64) -> Result<Vec<ScalingPoint>> {
    if !(accumulation_s > 0.0) || !(slope >= 0.0) {
        return Err(Error::invalid("slope must be >= 0 and accumulation time > 0"));
    }
    let mut rng = rng(seed);
    area_sq
        .iter()
        .map(|&x| {
            let n = poisson(&mut rng, slope * x * accumulation_s)?;
            Ok(ScalingPoint::new(x, n / accumulation_s, n.max(1.0).sqrt() / accumulation_s))
        })
        .collect()
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> Result<f64> {
    if mean == 0.0 {
        return Ok(0.0);
    }
    let d = Poisson::new(mean).map_err(|e| Error::invalid(format!("Poisson mean {mean}: {e}")))?;
    Ok(d.sample(rng))
}

/// Noise-free aperture curve on `n` equally spaced radii up to `max_radius_mm`.
pub fn aperture_curve(profile: &SpatialProfile, n: usize, max_radius_mm: f64, channel: ApertureChannel) -> Result<ApertureCurve> {
    if n == 0 || !(max_radius_mm > 0.0) {
        return Err(Error::invalid("need n >= 1 radii and a positive maximum radius"));
    }
    let radii: Vec<f64> = (1..=n).map(|i| max_radius_mm * i as f64 / n as f64).collect();
    ApertureCurve::from_profile(profile, &radii, channel)
}
