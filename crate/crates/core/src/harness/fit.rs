use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares slope of `log(value)` against `log(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub std_err: f64,
    /// `slope -/+ 1.96 std_err`.
    pub interval: (f64, f64),
    pub points: usize,
}

/// Fits the tail `tail_fraction` of `series`, where `series[k]` belongs to
/// round `k + 1`.
pub fn fit_sublinearity(series: &[f64], tail_fraction: f64) -> Result<SlopeFit> {
    if series.len() < 100 {
        return Err(Error::InvalidParameter(format!(
            "need at least 100 rounds, got {}",
            series.len()
        )));
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "tail fraction must lie in (0, 1], got {tail_fraction}"
        )));
    }
    let count = ((series.len() as f64 * tail_fraction).ceil() as usize).clamp(3, series.len());
    let start = series.len() - count;
    let mut xs = Vec::with_capacity(count);
    let mut ys = Vec::with_capacity(count);
    for (k, &v) in series.iter().enumerate().skip(start) {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Numeric(format!(
                "value {v} at round {} has no logarithm; fit the cumulative series, which stays positive",
                k + 1
            )));
        }
        xs.push(((k + 1) as f64).ln());
        ys.push(v.ln());
    }
    let nf = count as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let std_err = (sse / (nf - 2.0) / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        intercept,
        std_err,
        interval: (slope - 1.96 * std_err, slope + 1.96 * std_err),
        points: count,
    })
}
