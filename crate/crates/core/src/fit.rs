//! Least-squares line fits used for the scaling exponents.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    pub points: usize,
}

/// Ordinary least squares `y ≈ slope·x + intercept`; `None` with fewer than
/// two distinct abscissae.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(&x, &y)| (x, y))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Some(LinearFit {
        slope,
        intercept,
        residual,
        points: pts.len(),
    })
}

/// Fit of `log y` against `log x`; non-positive entries are dropped.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .unzip();
    linear_fit(&lx, &ly)
}

/// Slope of `y ≈ C·x` through the origin, with its RMS residual.
pub fn proportional_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    if sxx == 0.0 || xs.len() != ys.len() {
        return None;
    }
    let c = xs.iter().zip(ys).map(|(x, y)| x * y).sum::<f64>() / sxx;
    let res = (xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - c * x).powi(2))
        .sum::<f64>()
        / xs.len() as f64)
        .sqrt();
    Some((c, res))
}

/// Successive log2 ratios `log2(e_i / e_{i+1})` for a halving sequence.
pub fn halving_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
