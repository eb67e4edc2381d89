use crate::error::{PrbmError, Result};
use serde::{Deserialize, Serialize};

/// Shape parameters `B`, `B-ring`, `R` and the length scale `ell` of a power-law profile.
///
/// `eta` plays the role of a spectral scale in `(0, 1]`; along the flow `eta = 1 - t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeParams {
    pub alpha: f64,
    pub w: f64,
    pub n: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalScales {
    pub eta_star: f64,
    pub w_c: f64,
    pub eta_flat: f64,
}

impl ShapeParams {
    pub fn new(alpha: f64, w: f64, n: usize) -> Self {
        Self { alpha, w, n: n as f64 }
    }

    pub fn from_profile(p: &crate::VarianceProfile) -> Self {
        Self::new(p.alpha, p.bandwidth, p.size)
    }

    fn check_eta(eta: f64) -> Result<()> {
        if eta > 0.0 && eta <= 1.0 {
            Ok(())
        } else {
            Err(PrbmError::InvalidParameter(format!("eta must lie in (0, 1], got {eta}")))
        }
    }

    /// `ell(eta) = N` for `alpha <= 0`, else `min(W eta^(-1/(alpha ^ 2)), N)`.
    pub fn ell(&self, eta: f64) -> f64 {
        if self.alpha <= 0.0 {
            self.n
        } else {
            (self.w * eta.powf(-1.0 / self.alpha.min(2.0))).min(self.n)
        }
    }

    pub fn b(&self, eta: f64, r: f64) -> Result<f64> {
        Self::check_eta(eta)?;
        let (a, w, n) = (self.alpha, self.w, self.n);
        let l = self.ell(eta);
        let v = if a <= 0.0 {
            (n / w).powf(a) / w * (r / w + 1.0).powf(-1.0 - a) + 1.0 / (n * eta)
        } else if a < 1.0 {
            ((r / w + 1.0).powf(a - 1.0) / w + 1.0 / (n * eta)) * (r / l + 1.0).powf(-2.0 * a)
        } else {
            (r / l + 1.0).powf(-1.0 - a) / (eta * l)
        };
        Ok(v)
    }

    /// `B-ring`, the bound for the propagator with its zero mode removed. Independent of `eta`.
    pub fn b_ring(&self, eta: f64, r: f64) -> Result<f64> {
        Self::check_eta(eta)?;
        let (a, w, n) = (self.alpha, self.w, self.n);
        if a < 0.0 {
            Err(PrbmError::UnsupportedRegime(format!("B-ring requires alpha >= 0, got {a}")))
        } else if a < 1.0 {
            Ok((r / w + 1.0).powf(a - 1.0) / w)
        } else {
            Ok((n / w).powf(a.min(2.0)) / n)
        }
    }

    /// `R`, the relative size of first differences of the propagator.
    pub fn r(&self, eta: f64, r: f64) -> Result<f64> {
        Self::check_eta(eta)?;
        let (a, w) = (self.alpha, self.w);
        let l = self.ell(eta);
        if a <= 0.0 {
            Err(PrbmError::UnsupportedRegime(format!("R requires alpha > 0, got {a}")))
        } else if a < 1.0 {
            Ok(1.0 / (w * (r / w + 1.0)))
        } else if a < 2.0 {
            Ok(w.powf(a - 2.0) * l.powf(1.0 - a) * (r / w + 1.0).powf(a - 2.0) * (r / l + 1.0).powf(1.0 - a))
        } else {
            Ok(1.0 / (l * (r / l + 1.0)))
        }
    }

    pub fn b_t(&self, t: f64, r: f64) -> Result<f64> {
        self.b(1.0 - t, r)
    }

    pub fn b_ring_t(&self, t: f64, r: f64) -> Result<f64> {
        self.b_ring(1.0 - t, r)
    }

    pub fn r_t(&self, t: f64, r: f64) -> Result<f64> {
        self.r(1.0 - t, r)
    }

    pub fn ell_t(&self, t: f64) -> f64 {
        self.ell(1.0 - t)
    }

    pub fn critical_scales(&self) -> CriticalScales {
        let (a, w, n) = (self.alpha, self.w, self.n);
        let (eta_star, w_c) = if a <= 1.0 {
            (1.0 / n, 1.0)
        } else if a < 2.0 {
            (w.powf(-a / (a - 1.0)) + 1.0 / n, n.powf(1.0 - 1.0 / a))
        } else {
            (w.powi(-2) + 1.0 / n, n.sqrt())
        };
        let eta_flat = if a < 0.0 {
            (w / n).powf(1.0 + a)
        } else if a < 1.0 {
            w / n
        } else {
            (w / n).powf(a.min(2.0))
        };
        CriticalScales { eta_star, w_c, eta_flat }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn b_at_unit_eta_is_inverse_width() {
        let s = ShapeParams::new(1.5, 16.0, 512);
        assert!((s.b(1.0, 0.0).unwrap() - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn b_half_power_example() {
        let (w, n) = (8.0, 64usize);
        let s = ShapeParams::new(0.5, w, n);
        let eta = 1e-3;
        assert_eq!(s.ell(eta), n as f64);
        let nf = n as f64;
        let expect = ((nf / w + 1.0).powf(-0.5) / w + 1.0 / (nf * eta)) * 0.5;
        assert!((s.b(eta, nf).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn regime_errors() {
        let s = ShapeParams::new(-0.5, 4.0, 64);
        assert!(s.b_ring(0.5, 1.0).is_err());
        assert!(s.r(0.5, 1.0).is_err());
        assert!(ShapeParams::new(0.0, 4.0, 64).r(0.5, 1.0).is_err());
        assert!(s.b(0.0, 1.0).is_err());
    }

    #[test]
    fn critical_scale_values() {
        let c = ShapeParams::new(3.0, 32.0, 512).critical_scales();
        assert!((c.eta_star - (1.0 / 1024.0 + 1.0 / 512.0)).abs() < 1e-15);
        assert!((c.w_c - 512f64.sqrt()).abs() < 1e-12);
        let c = ShapeParams::new(0.5, 32.0, 512).critical_scales();
        assert_eq!(c.eta_star, 1.0 / 512.0);
        assert_eq!(c.eta_flat, 32.0 / 512.0);
    }
}
