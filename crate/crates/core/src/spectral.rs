//! Dense Hermitian eigendecomposition and eigenvector statistics.

use crate::ensemble::RngStream;
use crate::error::{invalid, PrbmError, Result};
use crate::VarianceProfile;
use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

/// Largest matrix size accepted by the dense solver.
pub const MAX_DENSE_N: usize = 8192;
/// Minimum number of bulk eigenvalues for spacing statistics.
pub const MIN_BULK_EIGENVALUES: usize = 50;
/// Tolerance on `||psi||^2 = 1` for eigenvector statistics.
pub const NORM_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the unit eigenvector of `eigenvalues[k]`.
    pub eigenvectors: Mat<Complex64>,
    pub seed: Option<RngStream>,
}

fn check_square(h: &Mat<Complex64>) -> Result<usize> {
    let n = h.nrows();
    if h.ncols() != n || n == 0 {
        return invalid(format!("matrix must be square and nonempty, got {}x{}", h.nrows(), h.ncols()));
    }
    if n > MAX_DENSE_N {
        return invalid(format!("N = {n} exceeds the dense solver cap {MAX_DENSE_N}"));
    }
    Ok(n)
}

pub fn eigendecompose(h: &Mat<Complex64>) -> Result<SpectralDecomposition> {
    let n = check_square(h)?;
    let evd = h.self_adjoint_eigen(Side::Lower).map_err(|e| PrbmError::Decomposition(format!("{e:?}")))?;
    let s: Vec<f64> = (0..n).map(|k| evd.S()[k].re).collect();
    let u = evd.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].partial_cmp(&s[b]).unwrap_or(std::cmp::Ordering::Equal));
    let eigenvalues = order.iter().map(|&k| s[k]).collect();
    let eigenvectors = Mat::from_fn(n, n, |i, k| u[(i, order[k])]);
    Ok(SpectralDecomposition { eigenvalues, eigenvectors, seed: None })
}

/// Ascending eigenvalues without eigenvectors.
pub fn eigenvalues_only(h: &Mat<Complex64>) -> Result<Vec<f64>> {
    check_square(h)?;
    let mut ev = h.self_adjoint_eigenvalues(Side::Lower).map_err(|e| PrbmError::Decomposition(format!("{e:?}")))?;
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(ev)
}

impl SpectralDecomposition {
    pub fn size(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvector(&self, k: usize) -> Vec<Complex64> {
        (0..self.size()).map(|i| self.eigenvectors[(i, k)]).collect()
    }

    pub fn bulk_indices(&self, kappa: f64) -> Vec<usize> {
        bulk_indices(&self.eigenvalues, kappa)
    }
}

/// Indices with `|lambda| <= 2 - kappa`.
pub fn bulk_indices(eigenvalues: &[f64], kappa: f64) -> Vec<usize> {
    eigenvalues.iter().enumerate().filter(|(_, l)| l.abs() <= 2.0 - kappa).map(|(k, _)| k).collect()
}

pub fn sup_norm_sq(psi: &[Complex64]) -> f64 {
    psi.iter().map(|c| c.norm_sqr()).fold(0.0, f64::max)
}

/// Smallest `l` such that some periodic window `[x0 - l, x0 + l]` carries mass `>= mass`.
///
/// Window masses within `1e-12` of the threshold count as reaching it.
pub fn localization_length(psi: &[Complex64], mass: f64) -> Result<usize> {
    let w: Vec<f64> = psi.iter().map(|c| c.norm_sqr()).collect();
    localization_length_from_weights(&w, mass)
}

pub fn localization_length_from_weights(weights: &[f64], mass: f64) -> Result<usize> {
    let n = weights.len();
    if n == 0 {
        return invalid("empty vector");
    }
    if !(mass > 0.0 && mass <= 1.0) {
        return invalid(format!("mass must lie in (0, 1], got {mass}"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > NORM_TOL {
        return Err(PrbmError::NotNormalized(total));
    }
    let mut prefix = Vec::with_capacity(2 * n + 1);
    prefix.push(0.0);
    for k in 0..2 * n {
        prefix.push(prefix[k] + weights[k % n]);
    }
    let reaches = |l: usize| {
        let len = (2 * l + 1).min(n);
        (0..n).any(|start| prefix[start + len] - prefix[start] >= mass - 1e-12)
    };
    let (mut lo, mut hi) = (0usize, n / 2);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if reaches(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

/// `sum_a S_xa conj(psi_i(a)) psi_j(a) - delta_ij / N`.
pub fn que_observable(profile: &VarianceProfile, x: usize, psi_i: &[Complex64], psi_j: &[Complex64], same_index: bool) -> Complex64 {
    let n = profile.size;
    let s: Complex64 = (0..n).map(|a| profile.entry(x, a) * psi_i[a].conj() * psi_j[a]).sum();
    if same_index {
        s - 1.0 / n as f64
    } else {
        s
    }
}

/// Ratios `min(s_k, s_{k+1}) / max(s_k, s_{k+1})` of consecutive bulk spacings.
pub fn spacing_ratios(eigenvalues: &[f64], kappa: f64) -> Result<Vec<f64>> {
    let mut bulk: Vec<f64> = eigenvalues.iter().copied().filter(|l| l.abs() <= 2.0 - kappa).collect();
    if bulk.len() < MIN_BULK_EIGENVALUES {
        return Err(PrbmError::TooFewEigenvalues { got: bulk.len(), need: MIN_BULK_EIGENVALUES });
    }
    bulk.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let gaps: Vec<f64> = bulk.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(gaps
        .windows(2)
        .map(|g| {
            let (lo, hi) = if g[0] <= g[1] { (g[0], g[1]) } else { (g[1], g[0]) };
            if hi == 0.0 {
                1.0
            } else {
                lo / hi
            }
        })
        .collect())
}

pub fn mean_spacing_ratio(eigenvalues: &[f64], kappa: f64) -> Result<f64> {
    let r = spacing_ratios(eigenvalues, kappa)?;
    Ok(r.iter().sum::<f64>() / r.len() as f64)
}

/// Distribution function of the semicircle law on `[-2, 2]`.
pub fn semicircle_cdf(x: f64) -> f64 {
    if x <= -2.0 {
        0.0
    } else if x >= 2.0 {
        1.0
    } else {
        0.5 + x * (4.0 - x * x).sqrt() / (4.0 * PI) + (x / 2.0).asin() / PI
    }
}

/// Kolmogorov-Smirnov distance between the empirical spectral distribution and the semicircle.
pub fn ks_distance_semicircle(eigenvalues: &[f64]) -> f64 {
    let mut ev = eigenvalues.to_vec();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = ev.len() as f64;
    ev.iter()
        .enumerate()
        .map(|(i, &l)| {
            let f = semicircle_cdf(l);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationRow {
    pub seed: u64,
    pub k: usize,
    pub lambda: f64,
    pub loc_len: usize,
    pub sup_norm_sq: f64,
    pub is_bulk: bool,
}

/// One row per eigenvector.
pub fn localization_report(decomp: &SpectralDecomposition, seed: u64, kappa: f64, mass: f64) -> Result<Vec<LocalizationRow>> {
    (0..decomp.size())
        .map(|k| {
            let psi = decomp.eigenvector(k);
            let lambda = decomp.eigenvalues[k];
            Ok(LocalizationRow {
                seed,
                k,
                lambda,
                loc_len: localization_length(&psi, mass)?,
                sup_norm_sq: sup_norm_sq(&psi),
                is_bulk: lambda.abs() <= 2.0 - kappa,
            })
        })
        .collect()
}

pub fn write_localization_csv<W: Write>(rows: &[LocalizationRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn delta_vector_has_zero_length() {
        let mut psi = vec![c(0.0); 10];
        psi[3] = c(1.0);
        assert_eq!(localization_length(&psi, 0.5).unwrap(), 0);
        assert_eq!(sup_norm_sq(&psi), 1.0);
    }

    #[test]
    fn split_spike_meets_threshold_exactly() {
        let mut psi = vec![c(0.0); 10];
        psi[1] = c(0.5f64.sqrt());
        psi[6] = c(0.5f64.sqrt());
        assert_eq!(localization_length(&psi, 0.5).unwrap(), 0);
    }

    #[test]
    fn unnormalized_rejected() {
        let psi = vec![c(1.0); 4];
        assert!(matches!(localization_length(&psi, 0.5), Err(PrbmError::NotNormalized(_))));
    }

    #[test]
    fn semicircle_cdf_symmetric() {
        assert!((semicircle_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((semicircle_cdf(1.0) + semicircle_cdf(-1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn equal_spacings_give_unit_ratio() {
        let ev: Vec<f64> = (0..101).map(|k| -1.0 + 0.02 * k as f64).collect();
        let r = mean_spacing_ratio(&ev, 0.1).unwrap();
        assert!((r - 1.0).abs() < 1e-9);
    }

    #[test]
    fn too_few_bulk_eigenvalues() {
        let ev: Vec<f64> = (0..20).map(|k| k as f64 * 0.01).collect();
        assert!(matches!(spacing_ratios(&ev, 0.1), Err(PrbmError::TooFewEigenvalues { got: 20, .. })));
    }
}
