//! Column CSV inputs: spectra, rate series, aperture curves, scaling points.
//!
//! Every file starts with a fixed header; errors report the 1-based line.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fitting::{RatePoint, ScalingPoint};
use crate::physics::SpectrumPoint;
use crate::spatial::AperturePoint;

pub const SPECTRUM_HEADER: [&str; 2] = ["shift_cm1", "intensity_cps"];
pub const RATE_SERIES_HEADER: [&str; 3] = ["shift_cm1", "corr_rate_cps", "uncertainty_cps"];
pub const APERTURE_HEADER: [&str; 2] = ["radius_mm", "intensity"];
pub const POWER_HEADER: [&str; 3] = ["power_w", "rate_cps", "uncertainty_cps"];
pub const XSECTION_HEADER: [&str; 3] = ["area_sq", "rate_cps", "uncertainty_cps"];

/// Reads a numeric CSV with exactly the columns in `header`.
pub fn read_columns<const N: usize>(path: &Path, header: [&str; N]) -> Result<Vec<[f64; N]>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| err(0, e.to_string()))?;
    let found = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(err(
            1,
            format!("expected header `{}`, got `{}`", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != N {
            return Err(err(line, format!("expected {N} fields, got {}", rec.len())));
        }
        let mut row = [0.0; N];
        for (k, field) in rec.iter().enumerate() {
            row[k] = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(line, format!("column `{}`: `{field}` is not a finite number", header[k])))?;
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_columns<const N: usize>(path: &Path, header: [&str; N], rows: &[[f64; N]]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_spectrum(path: &Path) -> Result<Vec<SpectrumPoint>> {
    Ok(read_columns(path, SPECTRUM_HEADER)?
        .into_iter()
        .map(|[shift_cm1, intensity_cps]| SpectrumPoint { shift_cm1, intensity_cps })
        .collect())
}

pub fn read_rate_series(path: &Path) -> Result<Vec<RatePoint>> {
    Ok(read_columns(path, RATE_SERIES_HEADER)?
        .into_iter()
        .map(|[shift_cm1, corr_rate, uncertainty]| RatePoint {
            shift_cm1,
            corr_rate,
            uncertainty,
        })
        .collect())
}

pub fn write_rate_series(path: &Path, points: &[RatePoint]) -> Result<()> {
    let rows: Vec<[f64; 3]> = points.iter().map(|p| [p.shift_cm1, p.corr_rate, p.uncertainty]).collect();
    write_columns(path, RATE_SERIES_HEADER, &rows)
}

pub fn read_aperture(path: &Path) -> Result<Vec<AperturePoint>> {
    Ok(read_columns(path, APERTURE_HEADER)?
        .into_iter()
        .map(|[radius_mm, intensity]| AperturePoint { radius_mm, intensity })
        .collect())
}

pub fn write_aperture(path: &Path, points: &[AperturePoint]) -> Result<()> {
    let rows: Vec<[f64; 2]> = points.iter().map(|p| [p.radius_mm, p.intensity]).collect();
    write_columns(path, APERTURE_HEADER, &rows)
}

pub fn read_scaling(path: &Path, header: [&str; 3]) -> Result<Vec<ScalingPoint>> {
    Ok(read_columns(path, header)?
        .into_iter()
        .map(|[x, y, u]| ScalingPoint::new(x, y, u))
        .collect())
}

pub fn write_scaling(path: &Path, header: [&str; 3], points: &[ScalingPoint]) -> Result<()> {
    let rows: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.uncertainty]).collect();
    write_columns(path, header, &rows)
}
