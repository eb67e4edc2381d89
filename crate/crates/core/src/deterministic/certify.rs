//! Numerical certification of the propagator input bounds for a given profile.
//!
//! For each bound family the fitted constant is the largest ratio between the computed
//! left-hand side and the shape-parameter bound, optionally divided by `(log N)^c`.

use super::resolvent_row;
use super::ShapeParams;
use crate::error::{PrbmError, Result};
use crate::VarianceProfile;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundId {
    /// `|(S/(1-tS))_xy| <= C B_t(|x-y|)`.
    Propagator,
    /// `|(S/(1-t xi S))_xy| <= C B_0(|x-y|)` on the unit circle away from `xi = 1`.
    ComplexPropagator,
    /// First differences, for times with `ell_t < N`.
    FirstDifference,
    /// Zero mode removed, for times with `ell_t = N`.
    ZeroMode,
}

impl BoundId {
    pub const ALL: [BoundId; 4] = [BoundId::Propagator, BoundId::ComplexPropagator, BoundId::FirstDifference, BoundId::ZeroMode];

    pub fn as_str(self) -> &'static str {
        match self {
            BoundId::Propagator => "propagator",
            BoundId::ComplexPropagator => "complex_propagator",
            BoundId::FirstDifference => "first_difference",
            BoundId::ZeroMode => "zero_mode",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CertifyOptions {
    /// Minimal distance `|xi - 1|` for the complex family.
    pub c0: f64,
    /// Power `c` of the optional `(log N)^c` correction.
    pub log_power: f64,
    /// Number of points on the unit circle for the complex family.
    pub xi_count: usize,
    /// Largest tolerated `C(2N) / C(N)`.
    pub max_doubling_ratio: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { c0: 0.1, log_power: 0.0, xi_count: 16, max_doubling_ratio: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundFit {
    pub bound_id: BoundId,
    pub t: f64,
    pub n: usize,
    pub fitted_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationRow {
    pub bound_id: BoundId,
    pub t: f64,
    #[serde(rename = "fitted_C")]
    pub fitted_c: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub stable_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CertificationReport {
    pub rows: Vec<CertificationRow>,
}

impl CertificationReport {
    /// Largest fitted constant of one family at one size.
    pub fn max_constant(&self, id: BoundId, n: usize) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.bound_id == id && r.n == n)
            .map(|r| r.fitted_c)
            .fold(None, |acc, c| Some(acc.map_or(c, |a: f64| a.max(c))))
    }

    pub fn is_stable(&self, id: BoundId) -> bool {
        self.rows.iter().filter(|r| r.bound_id == id).all(|r| r.stable_flag)
            && self.rows.iter().any(|r| r.bound_id == id)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `t_k = 1 - 2^(-k)` up to the terminal time `1 - 1/N`.
pub fn default_t_grid(n: usize) -> Vec<f64> {
    let t_max = 1.0 - 1.0 / n as f64;
    let mut grid = Vec::new();
    let mut k = 0;
    loop {
        let t = 1.0 - 0.5f64.powi(k);
        if t > t_max + 1e-15 {
            break;
        }
        grid.push(t);
        k += 1;
    }
    if grid.last().is_none_or(|&t| (t - t_max).abs() > 1e-15) {
        grid.push(t_max);
    }
    grid
}

/// Evenly spaced points `exp(i theta)` on the arc where `|xi - 1| >= c0`.
pub fn default_xi_grid(c0: f64, count: usize) -> Vec<Complex64> {
    let theta_min = 2.0 * (c0 / 2.0).asin();
    let span = 2.0 * std::f64::consts::PI - 2.0 * theta_min;
    (0..count)
        .map(|k| {
            let theta = if count == 1 { std::f64::consts::PI } else { theta_min + span * k as f64 / (count - 1) as f64 };
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

/// Fitted constants for every family and every time of the grid, at the profile's size.
///
/// The profile is translation invariant, so the base point is fixed at `x = 0` and all
/// remaining lattice points are scanned exhaustively. The zero-mode family is evaluated at
/// times with `ell_t = N` and always at the terminal time `1 - 1/N`.
pub fn certify_assumption_bounds(
    profile: &VarianceProfile,
    t_grid: &[f64],
    xi_grid: &[Complex64],
    opts: &CertifyOptions,
) -> Result<Vec<BoundFit>> {
    let n = profile.size;
    if profile.alpha < 0.0 {
        return Err(PrbmError::UnsupportedRegime(format!("certification requires alpha >= 0, got {}", profile.alpha)));
    }
    let t_max = 1.0 - 1.0 / n as f64;
    for &t in t_grid {
        if !(0.0..=t_max + 1e-12).contains(&t) {
            return Err(PrbmError::InvalidParameter(format!("t = {t} outside [0, 1 - 1/N]")));
        }
    }
    for xi in xi_grid {
        if (xi.norm() - 1.0).abs() > 1e-12 || (xi - 1.0).norm() < opts.c0 - 1e-12 {
            return Err(PrbmError::InvalidParameter(format!("xi = {xi} not on the admissible arc")));
        }
    }
    let shape = ShapeParams::from_profile(profile);
    let log_corr = (n as f64).ln().powf(opts.log_power);
    let dist = |d: usize| d.min(n - d) as f64;
    let w = profile.bandwidth;
    let mut fits = Vec::new();

    for &t in t_grid {
        let theta: Vec<f64> = resolvent_row(profile, Complex64::new(t, 0.0), 1)?.row.iter().map(|c| c.re).collect();
        let b_t: Vec<f64> = (0..n).map(|d| shape.b_t(t, dist(d))).collect::<Result<_>>()?;
        let b_0: Vec<f64> = (0..n).map(|d| shape.b_t(0.0, dist(d))).collect::<Result<_>>()?;

        let c1 = (0..n).map(|d| theta[d].abs() / b_t[d]).fold(0.0, f64::max);
        fits.push(BoundFit { bound_id: BoundId::Propagator, t, n, fitted_c: c1 / log_corr });

        let mut c2: f64 = 0.0;
        for &xi in xi_grid {
            let row = resolvent_row(profile, xi * t, 1)?;
            for d in 0..n {
                c2 = c2.max(row.row[d].norm() / b_0[d]);
            }
        }
        fits.push(BoundFit { bound_id: BoundId::ComplexPropagator, t, n, fitted_c: c2 / log_corr });

        let ell = shape.ell_t(t);
        if ell < n as f64 {
            let r_t: Vec<f64> = (0..n).map(|d| shape.r_t(t, dist(d))).collect::<Result<_>>()?;
            let mut c3: f64 = 0.0;
            for y in 0..n {
                for z in 0..n {
                    if y == z {
                        continue;
                    }
                    let (dy, dz) = (dist(y), dist(z));
                    let (far, near) = if dy >= dz { (y, z) } else { (z, y) };
                    let bound = (dist((y + n - z) % n) + w) * r_t[far] * b_t[near];
                    c3 = c3.max((theta[y] - theta[z]).abs() / bound);
                }
            }
            fits.push(BoundFit { bound_id: BoundId::FirstDifference, t, n, fitted_c: c3 / log_corr });
        }
        if ell >= n as f64 || (t - t_max).abs() < 1e-12 {
            let zero_mode = 1.0 / (n as f64 * (1.0 - t));
            let mut c4: f64 = 0.0;
            for d in 0..n {
                c4 = c4.max((theta[d] - zero_mode).abs() / shape.b_ring_t(t, dist(d))?);
            }
            fits.push(BoundFit { bound_id: BoundId::ZeroMode, t, n, fitted_c: c4 / log_corr });
        }
    }
    Ok(fits)
}

/// Certifies a profile and its doubled-size counterpart on their default grids and flags
/// each family as stable when `max_t C(2N) <= max_doubling_ratio * max_t C(N)`.
pub fn certify_doubling(
    small: &VarianceProfile,
    large: &VarianceProfile,
    opts: &CertifyOptions,
) -> Result<CertificationReport> {
    if large.size != 2 * small.size {
        return Err(PrbmError::InvalidParameter(format!(
            "large profile must have size 2N = {}, got {}",
            2 * small.size,
            large.size
        )));
    }
    let xi = default_xi_grid(opts.c0, opts.xi_count);
    let fits_small = certify_assumption_bounds(small, &default_t_grid(small.size), &xi, opts)?;
    let fits_large = certify_assumption_bounds(large, &default_t_grid(large.size), &xi, opts)?;
    let max_of = |fits: &[BoundFit], id: BoundId| {
        fits.iter().filter(|f| f.bound_id == id).map(|f| f.fitted_c).fold(None, |a: Option<f64>, c| Some(a.map_or(c, |v| v.max(c))))
    };
    let mut rows = Vec::new();
    for id in BoundId::ALL {
        let stable = match (max_of(&fits_small, id), max_of(&fits_large, id)) {
            (Some(a), Some(b)) => a.is_finite() && b.is_finite() && b <= opts.max_doubling_ratio * a,
            _ => false,
        };
        for f in fits_small.iter().chain(&fits_large).filter(|f| f.bound_id == id) {
            rows.push(CertificationRow { bound_id: id, t: f.t, fitted_c: f.fitted_c, n: f.n, stable_flag: stable });
        }
    }
    Ok(CertificationReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_grid_ends_at_terminal_time() {
        let g = default_t_grid(256);
        assert_eq!(g[0], 0.0);
        assert_eq!(g.len(), 9);
        assert!((g[8] - (1.0 - 1.0 / 256.0)).abs() < 1e-15);
        let g = default_t_grid(100);
        assert!((g.last().unwrap() - 0.99).abs() < 1e-15);
    }

    #[test]
    fn xi_grid_respects_c0() {
        for xi in default_xi_grid(0.1, 16) {
            assert!((xi - 1.0).norm() >= 0.1 - 1e-12);
            assert!((xi.norm() - 1.0).abs() < 1e-14);
        }
    }
}
