use super::scans::LocalizationScanRow;
use crate::ensemble::RngStream;
use crate::error::{invalid, PrbmError, Result};
use crate::spectral::median;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;
const ALPHA_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub r_squared: f64,
    pub points_used: usize,
    /// Bandwidths entering the fit, ascending.
    #[serde(rename = "W")]
    pub w: Vec<f64>,
    /// Bandwidths dropped because the median length reached `N/4`.
    pub saturated: Vec<f64>,
}

/// `(slope, intercept, R^2)` of the least squares line through `(x, y)`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Fit of `log median_W(loc_len)` against `log W` for the rows with the given `alpha`.
///
/// Per bandwidth, the statistic is the median over replicas of the per-replica median
/// length. Bandwidths with statistic `>= N/4` are excluded. The interval is the 2.5/97.5
/// percentile range of slopes refitted on replicas resampled with replacement within each
/// bandwidth, widened if needed to contain the point estimate.
pub fn fit_exponent(rows: &[LocalizationScanRow], alpha: f64, seed: u64) -> Result<ExponentFit> {
    let mut groups: Vec<(f64, usize, Vec<f64>)> = Vec::new();
    for r in rows.iter().filter(|r| (r.alpha - alpha).abs() <= ALPHA_TOL) {
        match groups.iter_mut().find(|g| g.0 == r.w) {
            Some(g) => {
                if g.1 != r.n {
                    return invalid(format!("rows for W = {} mix N = {} and {}", r.w, g.1, r.n));
                }
                g.2.push(r.median_loc_len);
            }
            None => groups.push((r.w, r.n, vec![r.median_loc_len])),
        }
    }
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut used = Vec::new();
    let mut saturated = Vec::new();
    for (w, n, mut v) in groups {
        if median(&mut v) >= n as f64 / 4.0 {
            saturated.push(w);
        } else {
            used.push((w, v));
        }
    }
    if used.len() < 3 {
        return Err(PrbmError::InvalidParameter(format!(
            "insufficient data: {} unsaturated bandwidths for alpha = {alpha}, need 3",
            used.len()
        )));
    }
    let log_w: Vec<f64> = used.iter().map(|(w, _)| w.ln()).collect();
    let log_stat = |sample: &mut dyn FnMut(&[f64]) -> f64| -> Result<Vec<f64>> {
        used.iter()
            .map(|(w, v)| {
                let m = sample(v);
                if !(m > 0.0) {
                    return invalid(format!("median length {m} at W = {w} has no logarithm"));
                }
                Ok(m.ln())
            })
            .collect()
    };
    let y = log_stat(&mut |v| median(&mut v.to_vec()))?;
    let (slope, intercept, r_squared) = ols(&log_w, &y);

    let mut rng = RngStream::new(seed, u64::MAX - 1).rng();
    let mut slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let yb = log_stat(&mut |v| {
            let mut s: Vec<f64> = (0..v.len()).map(|_| v[rng.random_range(0..v.len())]).collect();
            median(&mut s)
        })?;
        slopes.push(ols(&log_w, &yb).0);
    }
    slopes.sort_by(f64::total_cmp);
    let ci_low = percentile(&slopes, 0.025).min(slope);
    let ci_high = percentile(&slopes, 0.975).max(slope);
    Ok(ExponentFit {
        slope,
        intercept,
        ci_low,
        ci_high,
        r_squared,
        points_used: used.len(),
        w: used.iter().map(|(w, _)| *w).collect(),
        saturated,
    })
}
