//! Spectral and scaling-law estimation.
//!
//! All fits are weighted least squares with weights 1/σ². The models used
//! here are linear in a transformed parameter, so every estimate has a
//! closed form and none of these fits can fail to converge.

use serde::{Deserialize, Serialize};

use crate::constants::HBAR_EV_S;
use crate::error::{Error, Result};
use crate::physics::{delta_k, photons_per_pulse, CollectionConfig, LaserConfig, MaterialModel, SpectrumPoint};
use crate::spectrum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParameter {
    pub name: String,
    pub value: f64,
    pub std_error: f64,
    /// False when the data carry no information on this parameter; `value`
    /// and `std_error` are then NaN.
    pub identifiable: bool,
}

impl FitParameter {
    pub fn new(name: &str, value: f64, std_error: f64) -> Self {
        FitParameter {
            name: name.to_string(),
            value,
            std_error,
            identifiable: true,
        }
    }

    pub fn unidentifiable(name: &str) -> Self {
        FitParameter {
            name: name.to_string(),
            value: f64::NAN,
            std_error: f64::NAN,
            identifiable: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub parameters: Vec<FitParameter>,
    /// sqrt of the (weighted) residual sum of squares.
    pub residual_norm: f64,
    pub n_points: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<&FitParameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// Value of a named parameter; NaN when absent.
    pub fn value(&self, name: &str) -> f64 {
        self.get(name).map_or(f64::NAN, |p| p.value)
    }

    /// χ² per degree of freedom, when there are spare degrees of freedom.
    pub fn reduced_chi2(&self) -> Option<f64> {
        let free = self.parameters.iter().filter(|p| p.identifiable).count();
        (self.n_points > free).then(|| self.residual_norm.powi(2) / (self.n_points - free) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Baseline {
    None,
    /// Straight line through the spectrum at the two window edges.
    Linear,
}

/// Area under a Raman peak inside `window` (counts·cm⁻¹/s), trapezoidal,
/// after baseline removal. Baselined values below zero count as zero.
pub fn raman_peak_area(spectrum: &[SpectrumPoint], window: (f64, f64), baseline: Baseline) -> Result<f64> {
    let (lo, hi) = window;
    let pts = spectrum::clip(spectrum, lo, hi)?;
    let (y_lo, y_hi) = (pts[0].intensity_cps, pts[pts.len() - 1].intensity_cps);
    let base = |x: f64| match baseline {
        Baseline::None => 0.0,
        Baseline::Linear => y_lo + (y_hi - y_lo) * (x - lo) / (hi - lo),
    };
    Ok(spectrum::trapezoid(&pts, |x, y| (y - base(x)).max(0.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub shift_cm1: f64,
    pub corr_rate: f64,
    pub uncertainty: f64,
}

/// Correlated-pair rate measured at a set of Raman shifts under one laser
/// and collection setting. Shifts may be of either sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralRateSeries {
    pub points: Vec<RatePoint>,
    pub laser: LaserConfig,
    pub collection: CollectionConfig,
}

impl SpectralRateSeries {
    pub fn validate(&self) -> Result<()> {
        for p in &self.points {
            if !(p.uncertainty > 0.0 && p.uncertainty.is_finite()) {
                return Err(Error::invalid(format!(
                    "uncertainty at shift {} must be > 0, got {}",
                    p.shift_cm1, p.uncertainty
                )));
            }
            if !p.corr_rate.is_finite() || !p.shift_cm1.is_finite() {
                return Err(Error::invalid("non-finite rate point"));
            }
        }
        Ok(())
    }
}

pub const STEP_CONSTANT_NAMES: [&str; 2] = ["C1", "C2"];

/// Rate per unit C² in each band: the pair rate is `gain[b] · C_b²`
/// with V₀ = C_b · A_b.
pub fn step_band_gains(laser: &LaserConfig, collection: &CollectionConfig, material: &MaterialModel) -> Result<Vec<f64>> {
    if material.bands.len() > 2 {
        return Err(Error::invalid("step-constant fit supports at most two bands"));
    }
    let areas = [material.stokes_area_1st, material.stokes_area_2nd];
    let alpha2 = photons_per_pulse(laser);
    material
        .bands
        .iter()
        .zip(areas)
        .map(|(band, area)| {
            let dk = delta_k(collection, band)?;
            let x = alpha2 * area * laser.pulse_width_s / HBAR_EV_S;
            Ok(dk * x * x * laser.rep_rate_hz)
        })
        .collect()
}

/// Model rate at `shift` for constants `c` (one per band).
pub fn step_model_rate(shift_cm1: f64, gains: &[f64], material: &MaterialModel, c: &[f64]) -> f64 {
    let s = shift_cm1.abs();
    material
        .bands
        .iter()
        .position(|b| b.contains(s))
        .map_or(0.0, |i| gains[i] * c[i] * c[i])
}

/// Fits C¹ˢᵗ and C²ⁿᵈ to correlated-rate data.
///
/// The model is constant inside each band, so each band is an independent
/// weighted mean in C²: û = Σ w y g / Σ w g², Ĉ = sqrt(max(û, 0)), with the
/// standard error propagated through the square root. Bands with no data
/// points come back unidentifiable.
pub fn fit_step_constants(series: &SpectralRateSeries, material: &MaterialModel) -> Result<FitResult> {
    series.validate()?;
    material.validate()?;
    if series.points.is_empty() {
        return Err(Error::invalid("no data points"));
    }
    let gains = step_band_gains(&series.laser, &series.collection, material)?;
    let nb = gains.len();
    let mut swyg = vec![0.0; nb];
    let mut swgg = vec![0.0; nb];
    for p in &series.points {
        if let Some(b) = material.bands.iter().position(|b| b.contains(p.shift_cm1.abs())) {
            let w = 1.0 / (p.uncertainty * p.uncertainty);
            swyg[b] += w * p.corr_rate * gains[b];
            swgg[b] += w * gains[b] * gains[b];
        }
    }
    let mut c = vec![0.0; nb];
    let mut parameters = Vec::with_capacity(2);
    for (b, name) in STEP_CONSTANT_NAMES.iter().enumerate() {
        if b >= nb || swgg[b] == 0.0 {
            parameters.push(FitParameter::unidentifiable(name));
            continue;
        }
        let u = swyg[b] / swgg[b];
        let se_u = swgg[b].sqrt().recip();
        c[b] = u.max(0.0).sqrt();
        let se_c = if c[b] > 0.0 { se_u / (2.0 * c[b]) } else { se_u.sqrt() };
        parameters.push(FitParameter::new(name, c[b], se_c));
    }
    let chi2: f64 = series
        .points
        .iter()
        .map(|p| {
            let r = (p.corr_rate - step_model_rate(p.shift_cm1, &gains, material, &c)) / p.uncertainty;
            r * r
        })
        .sum();
    Ok(FitResult {
        parameters,
        residual_norm: chi2.sqrt(),
        n_points: series.points.len(),
        converged: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub x: f64,
    pub y: f64,
    pub uncertainty: f64,
}

impl ScalingPoint {
    pub fn new(x: f64, y: f64, uncertainty: f64) -> Self {
        ScalingPoint { x, y, uncertainty }
    }
}

/// Fits `rate = amplitude · power^exponent` by weighted linear regression
/// of ln(rate) on ln(power). The log-space error is σ/rate. Points with a
/// non-positive power, rate or uncertainty are dropped.
pub fn fit_power_law(points: &[ScalingPoint]) -> Result<FitResult> {
    let usable: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|p| p.x > 0.0 && p.y > 0.0 && p.uncertainty > 0.0)
        .map(|p| {
            let sl = p.uncertainty / p.y;
            (p.x.ln(), p.y.ln(), 1.0 / (sl * sl))
        })
        .collect();
    if usable.len() < 3 {
        return Err(Error::invalid(format!(
            "power-law fit needs >= 3 points with positive power and rate, got {}",
            usable.len()
        )));
    }
    let sw: f64 = usable.iter().map(|u| u.2).sum();
    let xm = usable.iter().map(|u| u.2 * u.0).sum::<f64>() / sw;
    let ym = usable.iter().map(|u| u.2 * u.1).sum::<f64>() / sw;
    let sxx: f64 = usable.iter().map(|u| u.2 * (u.0 - xm).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::invalid("power-law fit needs at least two distinct powers"));
    }
    let sxy: f64 = usable.iter().map(|u| u.2 * (u.0 - xm) * (u.1 - ym)).sum();
    let b = sxy / sxx;
    let ln_a = ym - b * xm;
    let var_b = 1.0 / sxx;
    let var_ln_a = 1.0 / sw + xm * xm * var_b;
    let chi2: f64 = usable.iter().map(|u| u.2 * (u.1 - ln_a - b * u.0).powi(2)).sum();
    let a = ln_a.exp();
    Ok(FitResult {
        parameters: vec![
            FitParameter::new("amplitude", a, a * var_ln_a.sqrt()),
            FitParameter::new("exponent", b, var_b.sqrt()),
        ],
        residual_norm: chi2.sqrt(),
        n_points: usable.len(),
        converged: true,
    })
}

/// Weighted zero-intercept fit `rate = slope · A²`.
pub fn fit_cross_section_scaling(points: &[ScalingPoint]) -> Result<FitResult> {
    if points.is_empty() {
        return Err(Error::invalid("no data points"));
    }
    if let Some(p) = points.iter().find(|p| !(p.uncertainty > 0.0)) {
        return Err(Error::invalid(format!("uncertainty at x = {} must be > 0", p.x)));
    }
    let w = |p: &ScalingPoint| 1.0 / (p.uncertainty * p.uncertainty);
    let sxx: f64 = points.iter().map(|p| w(p) * p.x * p.x).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("all abscissae are zero"));
    }
    let sxy: f64 = points.iter().map(|p| w(p) * p.x * p.y).sum();
    let slope = sxy / sxx;
    let chi2: f64 = points.iter().map(|p| w(p) * (p.y - slope * p.x).powi(2)).sum();
    Ok(FitResult {
        parameters: vec![FitParameter::new("slope", slope, sxx.sqrt().recip())],
        residual_norm: chi2.sqrt(),
        n_points: points.len(),
        converged: true,
    })
}

/// Expresses every point relative to the one with the largest abscissa
/// (largest matrix element → x = 1, its rate → y = 1).
pub fn normalize_to_largest(points: &[ScalingPoint]) -> Result<Vec<ScalingPoint>> {
    let reference = points
        .iter()
        .max_by(|a, b| a.x.total_cmp(&b.x))
        .ok_or_else(|| Error::invalid("no data points"))?;
    if !(reference.x > 0.0 && reference.y > 0.0) {
        return Err(Error::invalid("reference point must have positive abscissa and rate"));
    }
    let (x0, y0) = (reference.x, reference.y);
    Ok(points
        .iter()
        .map(|p| ScalingPoint::new(p.x / x0, p.y / y0, p.uncertainty / y0))
        .collect())
}
