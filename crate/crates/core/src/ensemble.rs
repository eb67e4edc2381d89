//! Sampling of Hermitian matrices with a prescribed variance profile.
//!
//! Randomness is counter based: each sample owns a ChaCha20 stream selected by
//! `(root_seed, stream)`, so results do not depend on scheduling or thread count.

use crate::error::{invalid, Result};
use crate::VarianceProfile;
use faer::Mat;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::io::{Read, Write};

pub const RNG_ALGORITHM: &str = "chacha20";

/// Key of an independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub root_seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(root_seed: u64, stream: u64) -> Self {
        Self { root_seed, stream }
    }

    /// Stream index for replica `replica` of experiment cell `cell`.
    pub fn for_cell(root_seed: u64, cell: u32, replica: u32) -> Self {
        Self { root_seed, stream: (u64::from(cell) << 32) | u64::from(replica) }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.root_seed);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Debug, Clone)]
pub struct HermitianSample {
    pub matrix: Mat<Complex64>,
    pub profile_id: String,
    pub seed: RngStream,
}

/// Draws `H` with independent entries up to symmetry: `H_xx ~ N(0, S_xx)` real and
/// `H_xy = (g1 + i g2) sqrt(S_xy / 2)` for `x < y`, in row-major order over the upper triangle.
pub fn sample_matrix<R: Rng + ?Sized>(profile: &VarianceProfile, rng: &mut R) -> Mat<Complex64> {
    let n = profile.size;
    let mut h = Mat::<Complex64>::zeros(n, n);
    for x in 0..n {
        let g: f64 = rng.sample(StandardNormal);
        h[(x, x)] = Complex64::new(g * profile.entry(x, x).sqrt(), 0.0);
        for y in x + 1..n {
            let s = (profile.entry(x, y) / 2.0).sqrt();
            let g1: f64 = rng.sample(StandardNormal);
            let g2: f64 = rng.sample(StandardNormal);
            let v = Complex64::new(g1 * s, g2 * s);
            h[(x, y)] = v;
            h[(y, x)] = v.conj();
        }
    }
    h
}

pub fn sample_prbm(profile: &VarianceProfile, seed: RngStream) -> HermitianSample {
    let matrix = sample_matrix(profile, &mut seed.rng());
    HermitianSample { matrix, profile_id: profile.identifier(), seed }
}

/// GUE normalized so that `E|H_xy|^2 = 1/N`.
pub fn sample_gue(n: usize, seed: RngStream) -> Result<HermitianSample> {
    let flat = VarianceProfile::flat(n)?;
    let mut s = sample_prbm(&flat, seed);
    s.profile_id = format!("gue(N={n})");
    Ok(s)
}

/// Increment `H_{t+dt} - H_t = sqrt(dt) H'` of the matrix Brownian motion `dH = sqrt(S) dB`.
pub fn sample_mbm_increment<R: Rng + ?Sized>(profile: &VarianceProfile, dt: f64, rng: &mut R) -> Result<Mat<Complex64>> {
    if !(dt >= 0.0) {
        return invalid(format!("time step must be nonnegative, got {dt}"));
    }
    let mut h = sample_matrix(profile, rng);
    let s = dt.sqrt();
    for j in 0..h.ncols() {
        for i in 0..h.nrows() {
            h[(i, j)] *= s;
        }
    }
    Ok(h)
}

/// Independent samples for the given streams, in input order.
pub fn sample_batch(profile: &VarianceProfile, root_seed: u64, streams: &[u64]) -> Vec<HermitianSample> {
    streams.par_iter().map(|&s| sample_prbm(profile, RngStream::new(root_seed, s))).collect()
}

/// Writes the matrix row-major as little-endian complex64 values (two `f32` per entry).
pub fn write_dump<W: Write>(h: &Mat<Complex64>, mut w: W) -> Result<()> {
    let mut buf = Vec::with_capacity(8 * h.nrows() * h.ncols());
    for i in 0..h.nrows() {
        for j in 0..h.ncols() {
            let v = h[(i, j)];
            buf.extend_from_slice(&(v.re as f32).to_le_bytes());
            buf.extend_from_slice(&(v.im as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_dump<R: Read>(mut r: R, n: usize) -> Result<Mat<Complex64>> {
    let mut buf = vec![0u8; 8 * n * n];
    r.read_exact(&mut buf)?;
    let word = |k: usize| f32::from_le_bytes([buf[k], buf[k + 1], buf[k + 2], buf[k + 3]]) as f64;
    Ok(Mat::from_fn(n, n, |i, j| {
        let k = 8 * (i * n + j);
        Complex64::new(word(k), word(k + 4))
    }))
}
