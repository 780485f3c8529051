//! Iris-aperture transmission of Gaussian angular profiles.
//!
//! A population whose re-collimated beam has a Gaussian radial profile of
//! width σ passes a fraction 1 − exp(−r²/2σ²) of its power through an iris of
//! radius r (encircled power). Mixtures of populations add with their weights.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{DMatrix, DVector, Dyn, Owned};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{FitParameter, FitResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub sigma_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialProfile {
    pub components: Vec<GaussianComponent>,
}

impl SpatialProfile {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        let p = SpatialProfile { components };
        p.validate()?;
        Ok(p)
    }

    pub fn single(sigma_mm: f64) -> Result<Self> {
        Self::new(vec![GaussianComponent { weight: 1.0, sigma_mm }])
    }

    /// Two components, `weight` on the first.
    pub fn double(weight: f64, sigma1_mm: f64, sigma2_mm: f64) -> Result<Self> {
        Self::new(vec![
            GaussianComponent { weight, sigma_mm: sigma1_mm },
            GaussianComponent {
                weight: 1.0 - weight,
                sigma_mm: sigma2_mm,
            },
        ])
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::invalid("profile needs at least one component"));
        }
        for c in &self.components {
            if !(c.weight >= 0.0) {
                return Err(Error::invalid(format!("component weight must be >= 0, got {}", c.weight)));
            }
            if !(c.sigma_mm > 0.0 && c.sigma_mm.is_finite()) {
                return Err(Error::invalid(format!("component sigma must be > 0, got {}", c.sigma_mm)));
            }
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("component weights must sum to 1, got {total}")));
        }
        Ok(())
    }
}

fn gaussian_fraction(radius_mm: f64, sigma_mm: f64) -> f64 {
    -(-radius_mm * radius_mm / (2.0 * sigma_mm * sigma_mm)).exp_m1()
}

/// Fraction of the profile's power passing an iris of radius `radius_mm`.
pub fn transmitted_fraction(profile: &SpatialProfile, radius_mm: f64) -> f64 {
    let r = radius_mm.max(0.0);
    profile
        .components
        .iter()
        .map(|c| c.weight * gaussian_fraction(r, c.sigma_mm))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ApertureChannel {
    Laser,
    #[value(name = "S")]
    S,
    #[serde(rename = "aS")]
    #[value(name = "aS")]
    AntiStokes,
    SasCorr,
    SasAccidental,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AperturePoint {
    pub radius_mm: f64,
    pub intensity: f64,
}

/// Normalized transmitted intensity against iris radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApertureCurve {
    pub points: Vec<AperturePoint>,
    pub channel: ApertureChannel,
}

impl ApertureCurve {
    pub fn new(points: Vec<AperturePoint>, channel: ApertureChannel) -> Result<Self> {
        let c = ApertureCurve { points, channel };
        c.validate()?;
        Ok(c)
    }

    /// Samples `profile` at `radii`.
    pub fn from_profile(profile: &SpatialProfile, radii: &[f64], channel: ApertureChannel) -> Result<Self> {
        let points = radii
            .iter()
            .map(|&r| AperturePoint {
                radius_mm: r,
                intensity: transmitted_fraction(profile, r),
            })
            .collect();
        Self::new(points, channel)
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.points {
            if !(p.radius_mm >= 0.0 && p.radius_mm.is_finite()) {
                return Err(Error::invalid(format!("radius must be >= 0, got {}", p.radius_mm)));
            }
            if !(0.0..=1.0).contains(&p.intensity) {
                return Err(Error::invalid(format!(
                    "normalized intensity at r = {} outside [0, 1]: {}",
                    p.radius_mm, p.intensity
                )));
            }
        }
        for w in self.points.windows(2) {
            if w[1].radius_mm <= w[0].radius_mm {
                return Err(Error::invalid("radii must be strictly increasing"));
            }
            if w[1].intensity < w[0].intensity {
                return Err(Error::invalid(format!(
                    "transmitted intensity decreases between r = {} and r = {}",
                    w[0].radius_mm, w[1].radius_mm
                )));
            }
        }
        Ok(())
    }
}

/// Fitted profile with its fit statistics. When `fit.converged` is false
/// the profile is the best point reached and must not be trusted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileFit {
    pub profile: SpatialProfile,
    pub fit: FitResult,
}

#[derive(Debug, thiserror::Error)]
pub enum ProfileFitError {
    #[error(transparent)]
    Invalid(#[from] Error),
    #[error("aperture fit did not converge: {reason}")]
    NotConverged { reason: String, best: Box<ProfileFit> },
}

/// Multi-start count for nonlinear fits.
pub const FIT_STARTS: usize = 5;
/// Relative parameter-change tolerance.
pub const FIT_XTOL: f64 = 1e-10;
/// Iteration (function evaluation) cap.
pub const FIT_MAX_EVALS: usize = 10_000;

/// Least-squares problem in unconstrained coordinates:
/// one component: θ = [ln σ];
/// two components: θ = [logit w, ln σ₁, ln σ₂].
struct ApertureProblem<'a> {
    radii: &'a [f64],
    values: &'a [f64],
    n_components: usize,
    theta: DVector<f64>,
}

impl ApertureProblem<'_> {
    fn natural(&self) -> (f64, f64, f64) {
        natural_params(self.n_components, self.theta.as_slice())
    }
}

fn natural_params(n_components: usize, theta: &[f64]) -> (f64, f64, f64) {
    match n_components {
        1 => (1.0, theta[0].exp(), f64::NAN),
        _ => (1.0 / (1.0 + (-theta[0]).exp()), theta[1].exp(), theta[2].exp()),
    }
}

fn model(n_components: usize, (w, s1, s2): (f64, f64, f64), r: f64) -> f64 {
    if n_components == 1 {
        gaussian_fraction(r, s1)
    } else {
        w * gaussian_fraction(r, s1) + (1.0 - w) * gaussian_fraction(r, s2)
    }
}

/// ∂F/∂(ln σ) for one component of unit weight.
fn dfrac_dlnsigma(r: f64, sigma: f64) -> f64 {
    let x = r * r / (2.0 * sigma * sigma);
    -(-x).exp() * 2.0 * x
}

impl LeastSquaresProblem<f64, Dyn, Dyn> for ApertureProblem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.theta.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.theta.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let nat = self.natural();
        Some(DVector::from_iterator(
            self.radii.len(),
            self.radii.iter().zip(self.values).map(|(&r, &y)| model(self.n_components, nat, r) - y),
        ))
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let (w, s1, s2) = self.natural();
        let m = self.radii.len();
        let mut j = DMatrix::zeros(m, self.n_components * 2 - 1);
        for (i, &r) in self.radii.iter().enumerate() {
            if self.n_components == 1 {
                j[(i, 0)] = dfrac_dlnsigma(r, s1);
            } else {
                j[(i, 0)] = w * (1.0 - w) * (gaussian_fraction(r, s1) - gaussian_fraction(r, s2));
                j[(i, 1)] = w * dfrac_dlnsigma(r, s1);
                j[(i, 2)] = (1.0 - w) * dfrac_dlnsigma(r, s2);
            }
        }
        Some(j)
    }
}

/// Radius where the curve first reaches 1 − e^(−1/2), a single-Gaussian σ guess.
fn sigma_guess(radii: &[f64], values: &[f64]) -> f64 {
    let target = gaussian_fraction(1.0, 1.0);
    for i in 1..radii.len() {
        if values[i] >= target && values[i - 1] < target {
            let t = (target - values[i - 1]) / (values[i] - values[i - 1]);
            return radii[i - 1] + t * (radii[i] - radii[i - 1]);
        }
    }
    let positive: Vec<f64> = radii.iter().copied().filter(|&r| r > 0.0).collect();
    positive.get(positive.len() / 2).copied().unwrap_or(1.0)
}

fn starts(n_components: usize, sigma0: f64) -> Vec<Vec<f64>> {
    let logit = |w: f64| (w / (1.0 - w)).ln();
    match n_components {
        1 => [0.25, 0.5, 1.0, 2.0, 4.0].iter().map(|k| vec![(sigma0 * k).ln()]).collect(),
        _ => [
            (0.5, 0.5, 2.0),
            (0.3, 1.0 / 3.0, 1.5),
            (0.7, 1.0 / 1.5, 3.0),
            (0.5, 0.25, 1.0),
            (0.5, 1.0, 4.0),
        ]
        .iter()
        .map(|&(w, a, b)| vec![logit(w), (sigma0 * a).ln(), (sigma0 * b).ln()])
        .collect(),
    }
}

/// Fits a one- or two-component Gaussian profile to an aperture curve.
///
/// Five deterministic starting points are tried and the lowest residual is
/// kept. Two-component results are ordered narrow first.
pub fn fit_profile(curve: &ApertureCurve, n_components: usize) -> std::result::Result<ProfileFit, ProfileFitError> {
    curve.validate()?;
    let radii: Vec<f64> = curve.points.iter().map(|p| p.radius_mm).collect();
    let values: Vec<f64> = curve.points.iter().map(|p| p.intensity).collect();
    fit_samples(&radii, &values, n_components)
}

/// Fit over raw (radius, intensity) samples sorted by radius; radii may repeat.
fn fit_samples(radii: &[f64], values: &[f64], n_components: usize) -> std::result::Result<ProfileFit, ProfileFitError> {
    if !(1..=2).contains(&n_components) {
        return Err(Error::invalid(format!("n_components must be 1 or 2, got {n_components}")).into());
    }
    let n_params = 2 * n_components - 1;
    if radii.len() < 3 * n_params {
        return Err(Error::invalid(format!(
            "{} points given, need >= {} for {} free parameters",
            radii.len(),
            3 * n_params,
            n_params
        ))
        .into());
    }
    let sigma0 = sigma_guess(radii, values);
    let lm = LevenbergMarquardt::new()
        .with_xtol(FIT_XTOL)
        .with_patience(FIT_MAX_EVALS.div_ceil(n_params + 1));

    let mut best: Option<(f64, bool, String, DVector<f64>)> = None;
    for theta0 in starts(n_components, sigma0) {
        let problem = ApertureProblem {
            radii,
            values,
            n_components,
            theta: DVector::from_vec(theta0),
        };
        let (solved, report) = lm.minimize(problem);
        let objective = report.objective_function;
        if !objective.is_finite() {
            continue;
        }
        let ok = report.termination.was_successful();
        let better = match &best {
            None => true,
            Some((obj, best_ok, _, _)) => (ok && !best_ok) || (ok == *best_ok && objective < *obj),
        };
        if better {
            best = Some((objective, ok, format!("{:?}", report.termination), solved.theta));
        }
    }
    let (objective, ok, termination, theta) = best.ok_or_else(|| Error::NonConvergence("no finite objective".into()))?;

    let (mut w, mut s1, mut s2) = natural_params(n_components, theta.as_slice());
    if n_components == 2 && s2 < s1 {
        std::mem::swap(&mut s1, &mut s2);
        w = 1.0 - w;
    }
    let profile = if n_components == 1 {
        SpatialProfile::single(s1)
    } else {
        SpatialProfile::double(w, s1, s2)
    }
    .map_err(ProfileFitError::Invalid)?;

    let rss = 2.0 * objective;
    let std_errors = natural_std_errors(radii, n_components, (w, s1, s2), rss);
    let names: &[&str] = if n_components == 1 {
        &["sigma_mm"]
    } else {
        &["weight1", "sigma1_mm", "sigma2_mm"]
    };
    let values_nat = if n_components == 1 { vec![s1] } else { vec![w, s1, s2] };

    // No radial information, or a width the data cannot resolve.
    let spread = values.iter().cloned().fold(f64::MIN, f64::max) - values.iter().cloned().fold(f64::MAX, f64::min);
    let r_pos_min = radii.iter().copied().filter(|&r| r > 0.0).fold(f64::MAX, f64::min);
    let r_max = radii[radii.len() - 1];
    let resolvable = [s1, if n_components == 2 { s2 } else { s1 }]
        .iter()
        .all(|&s| s > 1e-3 * r_pos_min && s < 1e3 * r_max);
    let degenerate = spread < 1e-12 || !resolvable || std_errors.iter().any(|e| !e.is_finite());

    let converged = ok && !degenerate;
    let parameters = names
        .iter()
        .zip(values_nat)
        .zip(&std_errors)
        .map(|((n, v), &e)| FitParameter {
            name: n.to_string(),
            value: v,
            std_error: e,
            identifiable: !degenerate,
        })
        .collect();
    let fit = ProfileFit {
        profile,
        fit: FitResult {
            parameters,
            residual_norm: rss.sqrt(),
            n_points: radii.len(),
            converged,
        },
    };
    if converged {
        Ok(fit)
    } else {
        let reason = if degenerate {
            "curve carries no usable radial information".to_string()
        } else {
            format!("termination {termination}")
        };
        Err(ProfileFitError::NotConverged { reason, best: Box::new(fit) })
    }
}

/// Standard errors of the natural parameters from s²(JᵀJ)⁻¹.
fn natural_std_errors(radii: &[f64], n_components: usize, (w, s1, s2): (f64, f64, f64), rss: f64) -> Vec<f64> {
    let p = 2 * n_components - 1;
    let m = radii.len();
    let mut j = DMatrix::zeros(m, p);
    for (i, &r) in radii.iter().enumerate() {
        if n_components == 1 {
            j[(i, 0)] = dfrac_dlnsigma(r, s1) / s1;
        } else {
            j[(i, 0)] = gaussian_fraction(r, s1) - gaussian_fraction(r, s2);
            j[(i, 1)] = w * dfrac_dlnsigma(r, s1) / s1;
            j[(i, 2)] = (1.0 - w) * dfrac_dlnsigma(r, s2) / s2;
        }
    }
    let s2_res = if m > p { rss / (m - p) as f64 } else { 0.0 };
    match (j.transpose() * &j).try_inverse() {
        Some(cov) => (0..p).map(|k| (s2_res * cov[(k, k)]).max(0.0).sqrt()).collect(),
        None => vec![f64::INFINITY; p],
    }
}

/// Fits one Gaussian width shared by the laser curve and a correlated-pair
/// curve, i.e. the pair population is constrained to the laser's angular
/// profile. Compare the residual with separate single-component fits to
/// test that constraint.
pub fn fit_shared_sigma(laser: &ApertureCurve, correlated: &ApertureCurve) -> std::result::Result<ProfileFit, ProfileFitError> {
    laser.validate()?;
    correlated.validate()?;
    let mut pts: Vec<AperturePoint> = laser.points.iter().chain(&correlated.points).copied().collect();
    pts.sort_by(|a, b| a.radius_mm.total_cmp(&b.radius_mm));
    let radii: Vec<f64> = pts.iter().map(|p| p.radius_mm).collect();
    let values: Vec<f64> = pts.iter().map(|p| p.intensity).collect();
    fit_samples(&radii, &values, 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioCurve {
    /// (radius, I_S / I_aS) where I_aS > 0.
    pub points: Vec<(f64, f64)>,
    /// Radii dropped because I_aS = 0 there.
    pub omitted_radii: Vec<f64>,
}

/// Pointwise S/aS intensity ratio on a shared radius grid.
pub fn ratio_curve(s_curve: &ApertureCurve, as_curve: &ApertureCurve) -> Result<RatioCurve> {
    if s_curve.points.len() != as_curve.points.len() {
        return Err(Error::invalid("S and aS curves have different radius grids"));
    }
    let mut out = RatioCurve {
        points: Vec::with_capacity(s_curve.points.len()),
        omitted_radii: Vec::new(),
    };
    for (s, a) in s_curve.points.iter().zip(&as_curve.points) {
        if (s.radius_mm - a.radius_mm).abs() > 1e-9 * s.radius_mm.abs().max(1.0) {
            return Err(Error::invalid(format!(
                "radius grids differ ({} vs {})",
                s.radius_mm, a.radius_mm
            )));
        }
        if a.intensity == 0.0 {
            out.omitted_radii.push(s.radius_mm);
        } else {
            out.points.push((s.radius_mm, s.intensity / a.intensity));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn radii(n: usize, max: f64) -> Vec<f64> {
        (0..n).map(|i| max * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn fraction_closed_forms() {
        let one = SpatialProfile::single(2.0).unwrap();
        assert_eq!(transmitted_fraction(&one, 0.0), 0.0);
        assert_relative_eq!(transmitted_fraction(&one, 2.0), 0.3934693402873666, max_relative = 1e-14);
        let two = SpatialProfile::double(0.5, 1.0, 3.0).unwrap();
        assert_relative_eq!(transmitted_fraction(&two, 1.0), 0.22375493569030058, max_relative = 1e-14);
        assert!(transmitted_fraction(&one, 1e6) > 1.0 - 1e-15);
    }

    #[test]
    fn profile_validation() {
        assert!(SpatialProfile::new(vec![]).is_err());
        assert!(SpatialProfile::double(1.2, 1.0, 2.0).is_err());
        assert!(SpatialProfile::single(0.0).is_err());
        assert!(SpatialProfile::new(vec![GaussianComponent { weight: 0.5, sigma_mm: 1.0 }]).is_err());
    }

    #[test]
    fn curve_validation() {
        let pts = |v: &[(f64, f64)]| v.iter().map(|&(radius_mm, intensity)| AperturePoint { radius_mm, intensity }).collect();
        assert!(ApertureCurve::new(pts(&[(0.0, 0.0), (1.0, 0.5)]), ApertureChannel::S).is_ok());
        assert!(ApertureCurve::new(pts(&[(1.0, 0.0), (1.0, 0.5)]), ApertureChannel::S).is_err());
        assert!(ApertureCurve::new(pts(&[(0.0, 0.6), (1.0, 0.5)]), ApertureChannel::S).is_err());
        assert!(ApertureCurve::new(pts(&[(0.0, 0.0), (1.0, 1.5)]), ApertureChannel::S).is_err());
    }

    #[test]
    fn single_gaussian_recovery() {
        let truth = SpatialProfile::single(2.0).unwrap();
        let curve = ApertureCurve::from_profile(&truth, &radii(20, 8.0), ApertureChannel::Laser).unwrap();
        let fit = fit_profile(&curve, 1).unwrap();
        let s = fit.fit.get("sigma_mm").unwrap();
        assert!((s.value - 2.0).abs() < 1e-3, "{}", s.value);
        assert!(s.std_error < 1e-3);
        assert!(fit.fit.converged);
    }

    #[test]
    fn double_gaussian_recovery() {
        let truth = SpatialProfile::double(0.3, 1.0, 4.0).unwrap();
        let curve = ApertureCurve::from_profile(&truth, &radii(30, 12.0), ApertureChannel::AntiStokes).unwrap();
        let fit = fit_profile(&curve, 2).unwrap();
        assert_relative_eq!(fit.fit.value("weight1"), 0.3, max_relative = 0.02);
        assert_relative_eq!(fit.fit.value("sigma1_mm"), 1.0, max_relative = 0.02);
        assert_relative_eq!(fit.fit.value("sigma2_mm"), 4.0, max_relative = 0.02);
    }

    #[test]
    fn constant_curve_fails() {
        let pts = radii(12, 5.0)
            .into_iter()
            .map(|radius_mm| AperturePoint { radius_mm, intensity: 1.0 })
            .collect();
        let curve = ApertureCurve::new(pts, ApertureChannel::S).unwrap();
        match fit_profile(&curve, 1) {
            Err(ProfileFitError::NotConverged { best, .. }) => assert!(!best.fit.converged),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn too_few_points() {
        let truth = SpatialProfile::single(2.0).unwrap();
        let curve = ApertureCurve::from_profile(&truth, &radii(8, 8.0), ApertureChannel::S).unwrap();
        assert!(matches!(fit_profile(&curve, 2), Err(ProfileFitError::Invalid(_))));
        assert!(matches!(fit_profile(&curve, 3), Err(ProfileFitError::Invalid(_))));
    }

    #[test]
    fn shared_sigma_fit() {
        let laser = ApertureCurve::from_profile(&SpatialProfile::single(1.5).unwrap(), &radii(15, 6.0), ApertureChannel::Laser).unwrap();
        let corr = ApertureCurve::from_profile(&SpatialProfile::single(1.5).unwrap(), &radii(11, 6.0), ApertureChannel::SasCorr).unwrap();
        let fit = fit_shared_sigma(&laser, &corr).unwrap();
        assert_relative_eq!(fit.fit.value("sigma_mm"), 1.5, max_relative = 1e-6);
        assert!(fit.fit.residual_norm < 1e-8);
    }

    #[test]
    fn ratio_examples() {
        let grid = radii(11, 10.0);
        let s = ApertureCurve::from_profile(&SpatialProfile::single(4.0).unwrap(), &grid, ApertureChannel::S).unwrap();
        let r = ratio_curve(&s, &s).unwrap();
        assert_eq!(r.omitted_radii, vec![0.0]);
        assert!(r.points.iter().all(|&(_, v)| v == 1.0));

        let grid = [0.5, 1.0, 2.0, 5.0, 20.0];
        let s = ApertureCurve::from_profile(&SpatialProfile::single(4.0).unwrap(), &grid, ApertureChannel::S).unwrap();
        let a = ApertureCurve::from_profile(&SpatialProfile::double(0.2, 1.0, 4.0).unwrap(), &grid, ApertureChannel::AntiStokes).unwrap();
        let r = ratio_curve(&s, &a).unwrap();
        // closed-form values of F₄/(0.8F₄ + 0.2F₁)
        let expected = [0.26179073372814277, 0.297817979350303, 0.44019297570084953, 0.8555133000191223, 0.9999992546671433];
        for ((_, got), want) in r.points.iter().zip(expected) {
            assert_relative_eq!(*got, want, max_relative = 1e-12);
        }

        let other = ApertureCurve::from_profile(&SpatialProfile::single(4.0).unwrap(), &[0.5, 1.0, 2.0, 5.0, 21.0], ApertureChannel::AntiStokes).unwrap();
        assert!(ratio_curve(&s, &other).is_err());
        let short = ApertureCurve::from_profile(&SpatialProfile::single(4.0).unwrap(), &[0.5, 1.0], ApertureChannel::AntiStokes).unwrap();
        assert!(ratio_curve(&s, &short).is_err());
    }
}
