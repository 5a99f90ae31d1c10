//! Linear and log-linear least-squares growth fits.

use std::io;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::corpus::Refinement;
use crate::metrics::XAxis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Linear,
    Exponential,
}

impl Model {
    pub fn as_str(self) -> &'static str {
        match self {
            Model::Linear => "linear",
            Model::Exponential => "exponential",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: Model,
    /// Intercept for linear fits, prefactor for exponential ones.
    pub a: f64,
    /// `beta` (linear) or `gamma` (exponential).
    pub slope: f64,
    /// On the fitted scale.
    pub r_squared: f64,
    pub n_points: usize,
    pub x_min: f64,
    pub x_max: f64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FitError {
    #[error("need at least two points in range, found {0}")]
    TooFewPoints(usize),
    #[error("all X values are equal ({0})")]
    DegenerateX(f64),
    #[error("non-positive Y {y} at X = {x}; cannot take its logarithm")]
    NonPositive { x: f64, y: f64 },
    #[error("non-finite value at X = {0}")]
    NonFinite(f64),
}

struct Ols {
    intercept: f64,
    slope: f64,
    r_squared: f64,
    x_min: f64,
    x_max: f64,
}

fn ols(points: &[(f64, f64)]) -> Result<Ols, FitError> {
    if points.len() < 2 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    if let Some(&(x, _)) = points.iter().find(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(FitError::NonFinite(x));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(FitError::DegenerateX(points[0].0));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points.iter().map(|&(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - sse / syy).clamp(0.0, 1.0) };
    let x_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x_max = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(Ols { intercept, slope, r_squared, x_min, x_max })
}

fn in_range(points: &[(f64, f64)], range: Option<&RangeInclusive<f64>>) -> Vec<(f64, f64)> {
    points.iter().copied().filter(|(x, _)| range.is_none_or(|r| r.contains(x))).collect()
}

/// Ordinary least squares `Y = A + beta X` over points with X in `range`.
pub fn fit_linear(points: &[(f64, f64)], range: Option<&RangeInclusive<f64>>) -> Result<FitResult, FitError> {
    let pts = in_range(points, range);
    let o = ols(&pts)?;
    Ok(FitResult {
        model: Model::Linear,
        a: o.intercept,
        slope: o.slope,
        r_squared: o.r_squared,
        n_points: pts.len(),
        x_min: o.x_min,
        x_max: o.x_max,
    })
}

/// `Y = A exp(gamma X)` via least squares on `ln Y`.
pub fn fit_exponential(points: &[(f64, f64)], range: Option<&RangeInclusive<f64>>) -> Result<FitResult, FitError> {
    let pts = in_range(points, range);
    if let Some(&(x, y)) = pts.iter().find(|(_, y)| *y <= 0.0) {
        return Err(FitError::NonPositive { x, y });
    }
    let logged: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x, y.ln())).collect();
    let o = ols(&logged)?;
    Ok(FitResult {
        model: Model::Exponential,
        a: o.intercept.exp(),
        slope: o.slope,
        r_squared: o.r_squared,
        n_points: pts.len(),
        x_min: o.x_min,
        x_max: o.x_max,
    })
}

impl FitResult {
    pub fn predict(&self, x: f64) -> f64 {
        match self.model {
            Model::Linear => self.a + self.slope * x,
            Model::Exponential => self.a * (self.slope * x).exp(),
        }
    }
}

/// A fit together with what was fitted, for reporting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitRow {
    pub k: u8,
    pub refinement: Refinement,
    pub x_axis: XAxis,
    pub fit: FitResult,
}

pub const FIT_HEADER: [&str; 10] =
    ["model", "k", "refinement", "x_axis", "x_min", "x_max", "A", "slope", "r_squared", "n_points"];

pub fn write_fit_csv<W: io::Write>(rows: &[FitRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FIT_HEADER)?;
    for r in rows {
        w.write_record([
            r.fit.model.as_str().to_string(),
            r.k.to_string(),
            r.refinement.to_string(),
            r.x_axis.as_str().to_string(),
            format!("{:?}", r.fit.x_min),
            format!("{:?}", r.fit.x_max),
            format!("{:?}", r.fit.a),
            format!("{:?}", r.fit.slope),
            format!("{:?}", r.fit.r_squared),
            r.fit.n_points.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Published full-corpus slopes, kept for comparison in reports. Keyed by
/// (k, refinement): linear `beta` against cumulative articles and `100 gamma`
/// of the exponential fit against vocabulary.
pub const REFERENCE_SLOPES: [(u8, Refinement, f64, f64); 6] = [
    (1, Refinement::Major, 0.7, 1.6e-2),
    (1, Refinement::All, 1.4, 1.9e-2),
    (2, Refinement::Major, 4.7, 1.5e-2),
    (2, Refinement::All, 52.0, 2.5e-2),
    (3, Refinement::Major, 8.0, 8.6e-3),
    (3, Refinement::All, 418.0, 2.7e-2),
];
