use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RateModel {
    /// `log s` against `log ε`.
    Power,
    /// `log(s ε^{n/2})` against `ε^{−(1−1/m)}`.
    StretchedExponential { m: u32, n: usize },
}

impl RateModel {
    pub fn name(&self) -> &'static str {
        match self {
            RateModel::Power => "power",
            RateModel::StretchedExponential { .. } => "stretched_exponential",
        }
    }
}

/// Least-squares line through transformed sweep data.
#[derive(Clone, Debug, PartialEq)]
pub struct RateFit {
    pub model: RateModel,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub residuals: Vec<f64>,
    pub points: usize,
}

/// Ordinary least squares `y ≈ slope · x + intercept`.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64, Vec<f64>) {
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - (slope * a + intercept)).collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) };
    (slope, intercept, r2, residuals)
}

/// Fits `(ε, s)` pairs under `model`; needs at least four points.
pub fn fit_rate(points: &[(f64, f64)], model: RateModel) -> Result<RateFit> {
    if points.len() < 4 {
        return Err(Error::Data(format!("rate fit needs at least 4 points, got {}", points.len())));
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(eps, s) in points {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Data(format!("non-positive epsilon {eps}")));
        }
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Data(format!("statistic {s} at epsilon {eps} cannot be logged")));
        }
        match model {
            RateModel::Power => {
                xs.push(eps.ln());
                ys.push(s.ln());
            }
            RateModel::StretchedExponential { m, n } => {
                xs.push(eps.powf(-(1.0 - 1.0 / m as f64)));
                ys.push(s.ln() + 0.5 * n as f64 * eps.ln());
            }
        }
    }
    let (slope, intercept, r2, residuals) = least_squares(&xs, &ys);
    Ok(RateFit {
        model,
        slope,
        intercept,
        r2,
        residuals,
        points: points.len(),
    })
}
