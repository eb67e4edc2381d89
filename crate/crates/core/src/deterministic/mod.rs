//! Deterministic approximants: the semicircle law, the flow-deformed self-consistent
//! equation, shape parameters and the propagators built from the variance profile.

mod certify;
mod propagator;
mod shape;

pub use certify::{
    certify_assumption_bounds, certify_doubling, default_t_grid, default_xi_grid, BoundFit, BoundId,
    CertificationReport, CertificationRow, CertifyOptions,
};
pub use propagator::{
    charge_product, evolution_kernel, k_loop_propagator, khat2_propagator, profile_function_row,
    resolvent_row, theta_propagator, NEAR_SINGULAR,
};
pub use shape::{CriticalScales, ShapeParams};

use crate::error::{PrbmError, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Resolvent charge: `+` for `G(z)`, `-` for `G(z)^* = G(conj z)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Charge {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Charge {
    pub const BOTH: [Charge; 2] = [Charge::Plus, Charge::Minus];

    /// `m` for `+`, `conj(m)` for `-`.
    pub fn apply(self, m: Complex64) -> Complex64 {
        match self {
            Charge::Plus => m,
            Charge::Minus => m.conj(),
        }
    }

    pub fn flip(self) -> Charge {
        match self {
            Charge::Plus => Charge::Minus,
            Charge::Minus => Charge::Plus,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Charge::Plus => '+',
            Charge::Minus => '-',
        }
    }
}

/// All charge vectors of length `n`, in lexicographic order with `+` first.
pub fn all_charges(n: usize) -> Vec<Vec<Charge>> {
    (0..1usize << n)
        .map(|bits| (0..n).map(|i| if bits >> (n - 1 - i) & 1 == 0 { Charge::Plus } else { Charge::Minus }).collect())
        .collect()
}

/// Stieltjes transform of the semicircle law, `m = (-z + sqrt(z^2 - 4)) / 2`.
///
/// Uses the branch `sqrt(z - 2) sqrt(z + 2)`, which is cut along `[-2, 2]` and behaves like
/// `z` at infinity, so `Im m > 0` for `Im z > 0` and `m` is real with `|m| < 1` on
/// `R \ [-2, 2]`. Real `z` in the bulk gives the boundary value from above. Lower
/// half-plane arguments return `conj(m(conj z))`.
pub fn m_sc(z: Complex64) -> Complex64 {
    if z.im < 0.0 {
        return m_sc(z.conj()).conj();
    }
    let z = Complex64::new(z.re, z.im.abs());
    let s = (z - 2.0).sqrt() * (z + 2.0).sqrt();
    -2.0 / (z + s)
}

/// Boundary value `m(E + i0)`.
pub fn m_sc_real(e: f64) -> Complex64 {
    m_sc(Complex64::new(e, 0.0))
}

pub const M_T_TOL: f64 = 1e-13;
pub const M_T_MAX_ITER: usize = 200;

/// Solution of `m = -(z + t m)^(-1)` with `Im m > 0`, by Newton iteration started at `m_sc(z)`.
pub fn m_t(z: Complex64, t: f64) -> Result<Complex64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(PrbmError::InvalidParameter(format!("t must lie in [0, 1], got {t}")));
    }
    if z.im < 0.0 {
        return Err(PrbmError::InvalidParameter(format!("Im z must be >= 0, got {}", z.im)));
    }
    if t == 0.0 {
        if z.norm() == 0.0 {
            return Err(PrbmError::InvalidParameter("z = 0 at t = 0".into()));
        }
        return Ok(-1.0 / z);
    }
    let mut m = m_sc(z);
    for _ in 0..M_T_MAX_ITER {
        let resid = m + 1.0 / (z + t * m);
        if resid.norm() <= M_T_TOL * m.norm().max(1.0) {
            if z.im > 0.0 && m.im <= 0.0 {
                return Err(PrbmError::Convergence(format!("Newton reached the wrong branch at z = {z}, t = {t}")));
            }
            return Ok(m);
        }
        let f = t * m * m + z * m + 1.0;
        let df = 2.0 * t * m + z;
        if df.norm() == 0.0 {
            break;
        }
        m -= f / df;
    }
    Err(PrbmError::Convergence(format!("m_t did not converge at z = {z}, t = {t}")))
}
