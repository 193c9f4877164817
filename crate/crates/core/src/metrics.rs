//! Distances between moment operators, plateau extraction and scaling fits.

use serde::{Deserialize, Serialize};

use crate::ensembles::MomentOperator;
use crate::error::{invalid, Error, Result};
use crate::linalg::{hermitian_eigenvalues, hermitian_part, CMatrix, HERMITIAN_TOL};

pub const MIN_WINDOW_POINTS: usize = 5;

/// `Σ|eigenvalues(a - b)|` after symmetrization.
pub fn trace_norm_matrices(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(a.nrows(), b.nrows()));
    }
    let a = hermitian_part(a, HERMITIAN_TOL)?;
    let b = hermitian_part(b, HERMITIAN_TOL)?;
    let mut diff = a - b;
    // fix the overall sign so that swapping the arguments solves the same matrix
    if let Some(z) = diff.iter().find(|z| z.re != 0.0 || z.im != 0.0) {
        if z.re < 0.0 || (z.re == 0.0 && z.im < 0.0) {
            diff.neg_mut();
        }
    }
    Ok(hermitian_eigenvalues(&diff).iter().map(|x| x.abs()).sum())
}

pub fn trace_distance_matrices(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    Ok(0.5 * trace_norm_matrices(a, b)?)
}

/// Half the trace norm of `a - b`. Both operators live on the symmetric
/// subspace, so the compressed forms give the exact spectrum.
pub fn trace_distance(a: &MomentOperator, b: &MomentOperator) -> Result<f64> {
    Ok(0.5 * trace_norm(a, b)?)
}

pub fn trace_norm(a: &MomentOperator, b: &MomentOperator) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    trace_norm_matrices(a.compressed(), b.compressed())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<usize>,
    pub values: Vec<f64>,
    pub realization: Option<usize>,
    pub fingerprint: String,
}

impl TimeSeries {
    pub fn new(times: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch(times.len(), values.len()));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("times must be strictly increasing"));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(invalid("distances must be nonnegative"));
        }
        Ok(Self { times, values, realization: None, fingerprint: String::new() })
    }

    /// The last third of the time points, rounded up.
    pub fn default_window(&self) -> (usize, usize) {
        let n = self.times.len();
        if n == 0 {
            return (0, 0);
        }
        let start = n - n.div_ceil(3);
        (self.times[start], self.times[n - 1])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub mean: f64,
    pub spread: f64,
    pub points: usize,
    pub start: usize,
    pub end: usize,
}

/// Mean and sample standard deviation of the values with `start <= t <= end`.
pub fn plateau_average(series: &TimeSeries, window: Option<(usize, usize)>) -> Result<Plateau> {
    let (start, end) = window.unwrap_or_else(|| series.default_window());
    let vals: Vec<f64> = series
        .times
        .iter()
        .zip(&series.values)
        .filter(|(t, _)| (start..=end).contains(*t))
        .map(|(_, v)| *v)
        .collect();
    if vals.len() < MIN_WINDOW_POINTS {
        return Err(Error::EmptyWindow { start, end, min: MIN_WINDOW_POINTS });
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Plateau { mean, spread: var.sqrt(), points: vals.len(), start, end })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    /// Decay rate `c` in `y = A 2^{-c x}`, or the exponent `a` in `y = A x^a`.
    pub rate: f64,
    pub prefactor: f64,
    /// Root-mean-square residual of the linearized fit.
    pub residual: f64,
}

fn line_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(invalid("a fit needs at least two points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("fit abscissae are all equal"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum::<f64>() / n).sqrt();
    Ok((slope, intercept, rms))
}

/// Least squares on `(x, log2 y)`; the rate is the negated slope.
pub fn exponential_fit(x: &[f64], y: &[f64]) -> Result<Fit> {
    if y.iter().any(|v| !(*v > 0.0)) {
        return Err(invalid("exponential fit needs positive y"));
    }
    let ly: Vec<f64> = y.iter().map(|v| v.log2()).collect();
    let (slope, intercept, residual) = line_fit(x, &ly)?;
    Ok(Fit { rate: -slope, prefactor: intercept.exp2(), residual })
}

/// Least squares on `(log2 x, log2 y)`; the rate is the fitted exponent.
pub fn power_fit(x: &[f64], y: &[f64]) -> Result<Fit> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(invalid("power fit needs positive data"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.log2()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.log2()).collect();
    let (slope, intercept, residual) = line_fit(&lx, &ly)?;
    Ok(Fit { rate: slope, prefactor: intercept.exp2(), residual })
}
