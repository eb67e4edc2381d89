//! Deterministic loop tensors `Khat^(n)`, their smoothed versions `K^L`, `K^C`, the
//! non-crossing tree decay and the associated consistency checks.

mod decay;
mod ode;
mod recursion;
mod tensor;
mod trees;

pub use decay::{decay_factors, DecayFactors, DecayMode};
pub use ode::{khat_ode_oracle, khat_ode_trajectory, OdeOptions, MAX_ODE_ORDER, MAX_ODE_SITES};
pub use recursion::{KhatEngine, MAX_POINTWISE_SITES, MAX_TENSOR_ORDER, MAX_TENSOR_SITES};
pub use tensor::{kloop_c, kloop_l, LoopTensor};
pub use trees::{enumerate_noncrossing_trees, NonCrossingTree, MAX_TREE_VERTICES};

use crate::deterministic::{Charge, ShapeParams};
use crate::error::{invalid, PrbmError, Result};
use crate::VarianceProfile;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Single-entry recursion evaluation.
pub fn khat_recursive(profile: &VarianceProfile, energy: f64, t: f64, sigma: &[Charge], xs: &[usize]) -> Result<Complex64> {
    if sigma.len() > MAX_TENSOR_ORDER {
        return invalid(format!("order {} exceeds {MAX_TENSOR_ORDER}", sigma.len()));
    }
    KhatEngine::new(profile, energy, t)?.value(sigma, xs)
}

/// `max |sum_{x_n} K^(n) - (K^(n-1)_{(+,s_2..s_{n-1})} - K^(n-1)_{(-,s_2..s_{n-1})}) / (2 i eta_t)|`
/// with `eta_t = (1 - t) Im m(E)`, for `sigma_1 != sigma_n`.
pub fn kloop_ward_check(profile: &VarianceProfile, energy: f64, t: f64, sigma: &[Charge]) -> Result<f64> {
    let n = sigma.len();
    if n < 2 {
        return invalid("Ward check needs n >= 2");
    }
    if sigma[0] == sigma[n - 1] {
        return invalid("Ward check needs sigma_1 != sigma_n");
    }
    let mut engine = KhatEngine::new(profile, energy, t)?;
    let eta_t = (1.0 - t) * engine.m(Charge::Plus).im;
    if !(eta_t > 0.0) {
        return Err(PrbmError::InvalidParameter("Im m(E) vanishes".into()));
    }
    let full = kloop_l(&*engine.tensor(sigma)?, profile);
    let mut hat: Vec<Charge> = sigma[..n - 1].to_vec();
    hat[0] = Charge::Plus;
    let plus = kloop_l(&*engine.tensor(&hat)?, profile);
    hat[0] = Charge::Minus;
    let minus = kloop_l(&*engine.tensor(&hat)?, profile);
    let ns = profile.size;
    let scale = Complex64::new(0.0, 2.0 * eta_t);
    let mut worst: f64 = 0.0;
    for head in 0..plus.data.len() {
        let lhs: Complex64 = full.data[head * ns..(head + 1) * ns].iter().sum();
        let rhs = (plus.data[head] - minus.data[head]) / scale;
        worst = worst.max((lhs - rhs).norm());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeBoundFit {
    pub n: usize,
    pub alpha: f64,
    pub t: f64,
    #[serde(rename = "N")]
    pub n_sites: usize,
    /// `max |K| / (B_t(0)^(n-1) T^(n))` over both smoothed versions and all tuples.
    pub constant: f64,
}

/// Fitted constant of the tree bound over `tuples` (all of `Z_N^n` when `None`).
pub fn verify_tree_bound(
    profile: &VarianceProfile,
    energy: f64,
    t: f64,
    sigma: &[Charge],
    tuples: Option<&[Vec<usize>]>,
) -> Result<TreeBoundFit> {
    let n = sigma.len();
    if n > MAX_TENSOR_ORDER || profile.size > MAX_TENSOR_SITES {
        return invalid(format!("tree bound check supports n <= {MAX_TENSOR_ORDER}, N <= {MAX_TENSOR_SITES}"));
    }
    let shape = ShapeParams::from_profile(profile);
    let mut decay = DecayFactors::new(shape, t, DecayMode::Standard)?;
    let mut engine = KhatEngine::new(profile, energy, t)?;
    let khat = engine.tensor(sigma)?;
    let kl = kloop_l(&khat, profile);
    let kc = kloop_c(&khat, profile);
    let b0 = shape.b_t(t, 0.0)?.powi(n as i32 - 1);
    let mut constant: f64 = 0.0;
    let mut visit = |xs: &[usize]| -> Result<()> {
        let tree = decay.tree_decay(xs)?;
        let v = kl.get(xs).norm().max(kc.get(xs).norm());
        constant = constant.max(v / (b0 * tree));
        Ok(())
    };
    match tuples {
        Some(list) => {
            for xs in list {
                if xs.len() != n || xs.iter().any(|&x| x >= profile.size) {
                    return invalid("tuple has wrong length or leaves Z_N");
                }
                visit(xs)?;
            }
        }
        None => {
            for flat in 0..kl.data.len() {
                visit(&kl.unravel(flat))?;
            }
        }
    }
    Ok(TreeBoundFit { n, alpha: profile.alpha, t, n_sites: profile.size, constant })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KReportRow {
    pub n: usize,
    pub alpha: f64,
    pub t: f64,
    #[serde(rename = "N")]
    pub n_sites: usize,
    pub constant: f64,
    pub stable_flag: bool,
}

/// Tree-bound constants at `N` and `2N`, flagged stable when the ratio is at most 2.
pub fn tree_bound_doubling(
    small: &VarianceProfile,
    large: &VarianceProfile,
    energy: f64,
    t: f64,
    sigma: &[Charge],
) -> Result<Vec<KReportRow>> {
    let a = verify_tree_bound(small, energy, t, sigma, None)?;
    let b = verify_tree_bound(large, energy, t, sigma, None)?;
    let stable = b.constant.is_finite() && b.constant <= 2.0 * a.constant;
    Ok([a, b]
        .iter()
        .map(|f| KReportRow { n: f.n, alpha: f.alpha, t: f.t, n_sites: f.n_sites, constant: f.constant, stable_flag: stable })
        .collect())
}

pub fn write_k_report<W: Write>(rows: &[KReportRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}
