//! Variance profiles `S_xy = kernel[(y - x) mod N]`, symmetric and doubly stochastic.

use crate::circulant::symbol_of;
use crate::error::{invalid, PrbmError, Result};
use crate::periodic_distance;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

/// Cap on the number of periodic images summed per lattice point.
pub const MAX_WRAPS: usize = 1_000_000;
/// Relative accuracy target for the periodized wrap sum.
pub const WRAP_TOL: f64 = 1e-14;

/// Symmetric probability densities with power-law tails `~ |x|^(-1-alpha)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileDensity {
    StudentT { nu: f64 },
    Cauchy,
}

impl ProfileDensity {
    pub fn tail_exponent(&self) -> f64 {
        match *self {
            ProfileDensity::StudentT { nu } => nu,
            ProfileDensity::Cauchy => 1.0,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            ProfileDensity::StudentT { nu } => format!("student_t({nu})"),
            ProfileDensity::Cauchy => "cauchy".to_string(),
        }
    }

    fn parse(label: &str) -> Option<Self> {
        if label == "cauchy" {
            return Some(ProfileDensity::Cauchy);
        }
        let nu = label.strip_prefix("student_t(")?.strip_suffix(')')?.parse().ok()?;
        Some(ProfileDensity::StudentT { nu })
    }
}

/// Density evaluator with its normalizing constant precomputed.
struct Density {
    kind: ProfileDensity,
    log_c: f64,
    student: Option<StudentsT>,
}

impl Density {
    fn new(kind: ProfileDensity) -> Result<Self> {
        match kind {
            ProfileDensity::StudentT { nu } => {
                if !(nu > 0.0) || !nu.is_finite() {
                    return invalid(format!("Student-t degrees of freedom must be positive, got {nu}"));
                }
                let log_c = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * PI).ln();
                let student = StudentsT::new(0.0, 1.0, nu).map_err(|e| PrbmError::InvalidParameter(e.to_string()))?;
                Ok(Self { kind, log_c, student: Some(student) })
            }
            ProfileDensity::Cauchy => Ok(Self { kind, log_c: -PI.ln(), student: None }),
        }
    }

    fn pdf(&self, x: f64) -> f64 {
        match self.kind {
            ProfileDensity::StudentT { nu } => (self.log_c - 0.5 * (nu + 1.0) * (x * x / nu).ln_1p()).exp(),
            ProfileDensity::Cauchy => 1.0 / (PI * (1.0 + x * x)),
        }
    }

    fn dpdf_abs(&self, x: f64) -> f64 {
        match self.kind {
            ProfileDensity::StudentT { nu } => (nu + 1.0) * x.abs() / (nu + x * x) * self.pdf(x),
            ProfileDensity::Cauchy => 2.0 * x.abs() / (PI * (1.0 + x * x).powi(2)),
        }
    }

    /// `P(X > x)` for `x >= 0`.
    fn survival(&self, x: f64) -> f64 {
        match &self.student {
            Some(st) => st.sf(x),
            None => (1.0 / x).atan() / PI,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileKind {
    /// `(|x-y|_N / W + 1)^(-1-alpha) / Z_alpha`.
    PowerLaw,
    /// Periodized density `sum_n f((x - y + nN)/W)`, normalized.
    ProfileFunction(ProfileDensity),
    /// Arbitrary symmetric stochastic kernel, mostly for small hand-checked examples.
    Custom,
}

impl ProfileKind {
    pub fn label(&self) -> String {
        match self {
            ProfileKind::PowerLaw => "power_law".to_string(),
            ProfileKind::ProfileFunction(d) => d.label(),
            ProfileKind::Custom => "custom".to_string(),
        }
    }

    pub fn parse(label: &str) -> Result<Self> {
        match label {
            "power_law" => Ok(ProfileKind::PowerLaw),
            "custom" => Ok(ProfileKind::Custom),
            other => ProfileDensity::parse(other)
                .map(ProfileKind::ProfileFunction)
                .ok_or_else(|| PrbmError::InvalidParameter(format!("unknown profile kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceProfile {
    pub alpha: f64,
    pub bandwidth: f64,
    pub size: usize,
    pub kind: ProfileKind,
    /// `kernel[d] = S_{0,d}`.
    pub kernel: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileRecord {
    alpha: f64,
    #[serde(rename = "W")]
    w: f64,
    #[serde(rename = "N")]
    n: usize,
    kind: String,
    kernel: Vec<f64>,
}

fn check_geometry(alpha: f64, w: f64, n: usize) -> Result<()> {
    if n < 2 {
        return invalid(format!("N must be at least 2, got {n}"));
    }
    if !(w >= 1.0) || !w.is_finite() {
        return invalid(format!("W must be >= 1, got {w}"));
    }
    if w > n as f64 / 2.0 {
        return invalid(format!("W = {w} exceeds N/2 = {}", n as f64 / 2.0));
    }
    if !(alpha > -1.0) || !alpha.is_finite() {
        return invalid(format!("alpha must be > -1, got {alpha}"));
    }
    Ok(())
}

/// `Z_alpha = sum_{x in Z_N} (|x|_N / W + 1)^(-1-alpha)`.
pub fn power_law_normalizer(alpha: f64, w: f64, n: usize) -> f64 {
    (0..n).map(|x| ((periodic_distance(0, x, n) as f64) / w + 1.0).powf(-1.0 - alpha)).sum()
}

impl VarianceProfile {
    pub fn power_law(alpha: f64, w: f64, n: usize) -> Result<Self> {
        check_geometry(alpha, w, n)?;
        let z = power_law_normalizer(alpha, w, n);
        let kernel = (0..n)
            .map(|x| ((periodic_distance(0, x, n) as f64) / w + 1.0).powf(-1.0 - alpha) / z)
            .collect();
        Ok(Self { alpha, bandwidth: w, size: n, kind: ProfileKind::PowerLaw, kernel })
    }

    pub fn profile_function(density: ProfileDensity, w: f64, n: usize) -> Result<Self> {
        let alpha = density.tail_exponent();
        check_geometry(alpha, w, n)?;
        let f = Density::new(density)?;
        let h = n as f64 / w;
        let mut raw = vec![0.0; n];
        for r in 0..=n / 2 {
            let v = wrap_sum(&f, r as f64 / w, h)?;
            raw[r] = v;
            raw[(n - r) % n] = v;
        }
        let z: f64 = raw.iter().sum();
        let kernel = raw.into_iter().map(|v| v / z).collect();
        Ok(Self { alpha, bandwidth: w, size: n, kind: ProfileKind::ProfileFunction(density), kernel })
    }

    /// Builds a profile from an explicit first row, checking symmetry and unit row sum.
    pub fn from_kernel(alpha: f64, w: f64, kernel: Vec<f64>) -> Result<Self> {
        let n = kernel.len();
        check_geometry(alpha, w, n)?;
        if kernel.iter().any(|&k| !(k >= 0.0) || !k.is_finite()) {
            return invalid("kernel entries must be finite and nonnegative");
        }
        for d in 1..n {
            if (kernel[d] - kernel[n - d]).abs() > 1e-12 {
                return invalid(format!("kernel not symmetric at offset {d}"));
            }
        }
        let total: f64 = kernel.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return invalid(format!("kernel row sum is {total}, expected 1"));
        }
        Ok(Self { alpha, bandwidth: w, size: n, kind: ProfileKind::Custom, kernel })
    }

    /// Flat profile `S_xy = 1/N` (GUE normalization).
    pub fn flat(n: usize) -> Result<Self> {
        if n < 2 {
            return invalid(format!("N must be at least 2, got {n}"));
        }
        Ok(Self {
            alpha: -1.0,
            bandwidth: n as f64 / 2.0,
            size: n,
            kind: ProfileKind::Custom,
            kernel: vec![1.0 / n as f64; n],
        })
    }

    #[inline]
    pub fn entry(&self, x: usize, y: usize) -> f64 {
        let n = self.size;
        self.kernel[(y + n - x % n) % n]
    }

    pub fn dense(&self) -> faer::Mat<f64> {
        faer::Mat::from_fn(self.size, self.size, |x, y| self.entry(x, y))
    }

    pub fn identifier(&self) -> String {
        format!("{}(alpha={},W={},N={})", self.kind.label(), self.alpha, self.bandwidth, self.size)
    }

    /// `psi(p_j) = sum_x S_{0x} exp(i p_j x)`, real because the kernel is symmetric.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let row: Vec<Complex64> = self.kernel.iter().map(|&k| Complex64::new(k, 0.0)).collect();
        symbol_of(&row).into_iter().map(|c| c.re).collect()
    }

    /// Largest `c` with `1 - psi(p) >= c min(|W p|^(alpha ^ 2), 1)` over nonzero momenta.
    pub fn spectral_gap_constant(&self) -> f64 {
        let n = self.size;
        let psi = self.eigenvalues();
        let expo = self.alpha.clamp(0.0, 2.0);
        let mut best = f64::INFINITY;
        for (j, &v) in psi.iter().enumerate().skip(1) {
            let jj = j.min(n - j) as f64;
            let p = 2.0 * PI * jj / n as f64;
            let scale = (self.bandwidth * p).powf(expo).min(1.0);
            best = best.min((1.0 - v) / scale);
        }
        best
    }

    pub fn to_json(&self) -> Result<String> {
        let rec = ProfileRecord {
            alpha: self.alpha,
            w: self.bandwidth,
            n: self.size,
            kind: self.kind.label(),
            kernel: self.kernel.clone(),
        };
        Ok(serde_json::to_string_pretty(&rec)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: ProfileRecord = serde_json::from_str(text)?;
        if rec.kernel.len() != rec.n {
            return invalid(format!("kernel length {} does not match N = {}", rec.kernel.len(), rec.n));
        }
        let kind = ProfileKind::parse(&rec.kind)?;
        let mut p = Self::from_kernel(rec.alpha, rec.w, rec.kernel)?;
        p.kind = kind;
        Ok(p)
    }
}

/// `sum_{n in Z} f(x0 + n h)` for `0 <= x0 <= h/2`.
///
/// Explicit images are summed until the remaining tail, replaced by its midpoint
/// integral `P(X > a) / h` plus the first Euler-Maclaurin correction, is known to
/// relative accuracy [`WRAP_TOL`].
fn wrap_sum(f: &Density, x0: f64, h: f64) -> Result<f64> {
    let mut s = f.pdf(x0);
    for m in 1..=MAX_WRAPS {
        let mf = m as f64;
        s += f.pdf(x0 + mf * h) + f.pdf(mf * h - x0);
        let a_plus = x0 + (mf + 0.5) * h;
        let a_minus = (mf + 0.5) * h - x0;
        let slope = h / 24.0 * (f.dpdf_abs(a_plus) + f.dpdf_abs(a_minus));
        let tail = (f.survival(a_plus) + f.survival(a_minus)) / h - slope;
        if slope <= WRAP_TOL * (s + tail) {
            return Ok(s + tail);
        }
    }
    Err(PrbmError::Truncation { wraps: MAX_WRAPS })
}
