//! Piecewise-linear view of a sampled spectrum.

use crate::error::{Error, Result};
use crate::physics::SpectrumPoint;

/// Linear interpolation at `x`; `None` outside the sampled domain.
pub fn interpolate(spectrum: &[SpectrumPoint], x: f64) -> Option<f64> {
    let first = spectrum.first()?;
    let last = spectrum.last()?;
    if x < first.shift_cm1 || x > last.shift_cm1 {
        return None;
    }
    let i = spectrum.partition_point(|p| p.shift_cm1 <= x);
    if i == 0 {
        return Some(first.intensity_cps);
    }
    if i == spectrum.len() {
        return Some(last.intensity_cps);
    }
    let (a, b) = (spectrum[i - 1], spectrum[i]);
    let t = (x - a.shift_cm1) / (b.shift_cm1 - a.shift_cm1);
    Some(a.intensity_cps + t * (b.intensity_cps - a.intensity_cps))
}

/// Samples restricted to `[lo, hi]`, with interpolated end points.
pub fn clip(spectrum: &[SpectrumPoint], lo: f64, hi: f64) -> Result<Vec<SpectrumPoint>> {
    if !(lo < hi) {
        return Err(Error::invalid(format!("empty window [{lo}, {hi}]")));
    }
    let (Some(y_lo), Some(y_hi)) = (interpolate(spectrum, lo), interpolate(spectrum, hi)) else {
        let domain = match (spectrum.first(), spectrum.last()) {
            (Some(a), Some(b)) => format!("[{}, {}]", a.shift_cm1, b.shift_cm1),
            _ => "empty".to_string(),
        };
        return Err(Error::invalid(format!("window [{lo}, {hi}] outside spectrum domain {domain}")));
    };
    let mut out = Vec::with_capacity(spectrum.len() + 2);
    out.push(SpectrumPoint {
        shift_cm1: lo,
        intensity_cps: y_lo,
    });
    out.extend(spectrum.iter().copied().filter(|p| p.shift_cm1 > lo && p.shift_cm1 < hi));
    out.push(SpectrumPoint {
        shift_cm1: hi,
        intensity_cps: y_hi,
    });
    Ok(out)
}

/// Trapezoidal integral of `f(x, y)` over the clipped samples.
pub fn trapezoid(points: &[SpectrumPoint], f: impl Fn(f64, f64) -> f64) -> f64 {
    points
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            0.5 * (b.shift_cm1 - a.shift_cm1) * (f(a.shift_cm1, a.intensity_cps) + f(b.shift_cm1, b.intensity_cps))
        })
        .sum()
}

/// Mean intensity over `[lo, hi]`.
pub fn window_mean(spectrum: &[SpectrumPoint], lo: f64, hi: f64) -> Result<f64> {
    let pts = clip(spectrum, lo, hi)?;
    Ok(trapezoid(&pts, |_, y| y) / (hi - lo))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> Vec<SpectrumPoint> {
        (0..=10)
            .map(|i| SpectrumPoint {
                shift_cm1: i as f64 * 10.0,
                intensity_cps: i as f64,
            })
            .collect()
    }

    #[test]
    fn interpolation_and_domain() {
        let s = line();
        assert_eq!(interpolate(&s, 15.0), Some(1.5));
        assert_eq!(interpolate(&s, 100.0), Some(10.0));
        assert_eq!(interpolate(&s, 0.0), Some(0.0));
        assert_eq!(interpolate(&s, 100.1), None);
        assert!(window_mean(&s, -1.0, 5.0).is_err());
        assert!(window_mean(&s, 5.0, 5.0).is_err());
    }

    #[test]
    fn linear_data_integrates_exactly() {
        let s = line();
        // ∫ x/10 dx over [15, 47] = (47² − 15²)/20
        let pts = clip(&s, 15.0, 47.0).unwrap();
        let got = trapezoid(&pts, |_, y| y);
        assert!((got - (47.0f64.powi(2) - 15.0f64.powi(2)) / 20.0).abs() < 1e-12);
        assert!((window_mean(&s, 20.0, 40.0).unwrap() - 3.0).abs() < 1e-12);
    }
}
