use super::{m_sc_real, Charge};
use crate::circulant::Circulant;
use crate::error::{PrbmError, Result};
use crate::VarianceProfile;
use num_complex::Complex64;

/// Smallest admissible `|1 - xi psi(p)|` before a propagator is declared singular.
pub const NEAR_SINGULAR: f64 = 1e-10;

/// First row of `F(S)` where `F` acts on the profile eigenvalues.
pub fn profile_function_row(profile: &VarianceProfile, f: impl Fn(f64) -> Complex64) -> Circulant {
    let symbol: Vec<Complex64> = profile.eigenvalues().into_iter().map(f).collect();
    Circulant::from_symbol(&symbol)
}

/// First row of `S^power (1 - xi S)^(-1)`.
pub fn resolvent_row(profile: &VarianceProfile, xi: Complex64, power: i32) -> Result<Circulant> {
    let psi = profile.eigenvalues();
    let min_modulus = psi.iter().map(|&p| (1.0 - xi * p).norm()).fold(f64::INFINITY, f64::min);
    if min_modulus < NEAR_SINGULAR {
        return Err(PrbmError::NearSingular { min_modulus });
    }
    let symbol: Vec<Complex64> = psi.iter().map(|&p| p.powi(power) / (1.0 - xi * p)).collect();
    Ok(Circulant::from_symbol(&symbol))
}

/// `m(sigma_1) m(sigma_2)` with `m = m(E + i0)`.
pub fn charge_product(e: f64, charges: (Charge, Charge)) -> Complex64 {
    let m = m_sc_real(e);
    charges.0.apply(m) * charges.1.apply(m)
}

fn scaled(c: Circulant, a: Complex64) -> Circulant {
    Circulant::from_row(c.row.into_iter().map(|v| v * a).collect())
}

/// `Theta_t = a S / (1 - t a S)` with `a = m(sigma_1) m(sigma_2)`.
pub fn theta_propagator(profile: &VarianceProfile, t: f64, charges: (Charge, Charge), e: f64) -> Result<Circulant> {
    let a = charge_product(e, charges);
    Ok(scaled(resolvent_row(profile, t * a, 1)?, a))
}

/// Deterministic two-loop `K_t = a S^2 / (1 - t a S)`.
pub fn k_loop_propagator(profile: &VarianceProfile, t: f64, charges: (Charge, Charge), e: f64) -> Result<Circulant> {
    let a = charge_product(e, charges);
    Ok(scaled(resolvent_row(profile, t * a, 2)?, a))
}

/// Unsmoothed two-loop `a (1 - t a S)^(-1)`.
pub fn khat2_propagator(profile: &VarianceProfile, t: f64, charges: (Charge, Charge), e: f64) -> Result<Circulant> {
    let a = charge_product(e, charges);
    Ok(scaled(resolvent_row(profile, t * a, 0)?, a))
}

/// Evolution kernel `U_{s,t} = 1 + (t - s) Theta_t`.
pub fn evolution_kernel(
    profile: &VarianceProfile,
    s: f64,
    t: f64,
    charges: (Charge, Charge),
    e: f64,
) -> Result<Circulant> {
    if !(0.0 <= s && s <= t && t <= 1.0) {
        return Err(PrbmError::InvalidParameter(format!("need 0 <= s <= t <= 1, got s = {s}, t = {t}")));
    }
    let theta = theta_propagator(profile, t, charges, e)?;
    let mut row: Vec<Complex64> = theta.row.into_iter().map(|v| v * (t - s)).collect();
    row[0] += 1.0;
    Ok(Circulant::from_row(row))
}
