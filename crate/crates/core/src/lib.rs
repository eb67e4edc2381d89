//! Numerical laboratory for power-law random band matrices (PRBM).
//!
//! Hermitian matrices on the periodic lattice `Z_N` whose entry variances follow a
//! circulant, power-law decaying profile `S_xy ~ (|x-y|/W + 1)^(-1-alpha)`. The crate
//! samples such matrices, evaluates the deterministic objects they concentrate around
//! (semicircle law, propagators, K-loops) and measures how close the random quantities
//! get to them.

pub mod circulant;
pub mod deterministic;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod flow_sim;
pub mod kloop_calculus;
pub mod profile;
pub mod resolvent_observables;
pub mod spectral;

pub use error::{PrbmError, Result};
pub use num_complex::Complex64;
pub use profile::{ProfileDensity, ProfileKind, VarianceProfile};

/// Periodic distance `min(|x-y|, N-|x-y|)` on `Z_N`.
pub fn periodic_distance(x: usize, y: usize, n: usize) -> usize {
    let d = x.abs_diff(y) % n;
    d.min(n - d)
}
