use crate::error::{invalid, Result};
use crate::VarianceProfile;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Dense tensor over `Z_N^order`, row-major in `(x_1, ..., x_order)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopTensor {
    pub n_sites: usize,
    pub order: usize,
    pub data: Vec<Complex64>,
}

impl LoopTensor {
    pub fn zeros(n_sites: usize, order: usize) -> Self {
        Self { n_sites, order, data: vec![Complex64::new(0.0, 0.0); n_sites.pow(order as u32)] }
    }

    #[inline]
    pub fn index(&self, xs: &[usize]) -> usize {
        xs.iter().fold(0, |acc, &x| acc * self.n_sites + x)
    }

    #[inline]
    pub fn get(&self, xs: &[usize]) -> Complex64 {
        self.data[self.index(xs)]
    }

    /// Multi-index of a flat position.
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut xs = vec![0; self.order];
        for k in (0..self.order).rev() {
            xs[k] = flat % self.n_sites;
            flat /= self.n_sites;
        }
        xs
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &LoopTensor) -> Result<f64> {
        if self.n_sites != other.n_sites || self.order != other.order {
            return invalid("tensor shapes differ");
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }

    /// Contracts axis `axis` with the circulant profile: `x_axis -> sum_a S_{x_axis a} (.)_a`.
    pub fn smooth_axis(&self, profile: &VarianceProfile, axis: usize) -> LoopTensor {
        let n = self.n_sites;
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let mut kernel: Vec<Complex64> = profile.kernel.iter().map(|&k| Complex64::new(k, 0.0)).collect();
        fwd.process(&mut kernel);
        let stride = n.pow((self.order - 1 - axis) as u32);
        let outer = self.data.len() / (n * stride);
        let mut out = self.clone();
        let mut fiber = vec![Complex64::new(0.0, 0.0); n];
        for o in 0..outer {
            for s in 0..stride {
                let base = o * n * stride + s;
                for (a, f) in fiber.iter_mut().enumerate() {
                    *f = self.data[base + a * stride];
                }
                convolve(&mut fiber, &kernel, fwd.as_ref(), inv.as_ref());
                for (a, f) in fiber.iter().enumerate() {
                    out.data[base + a * stride] = *f;
                }
            }
        }
        out
    }

    pub fn smooth_axes(&self, profile: &VarianceProfile, axes: std::ops::Range<usize>) -> LoopTensor {
        axes.fold(self.clone(), |acc, ax| acc.smooth_axis(profile, ax))
    }
}

/// `f <- S f` for a symmetric circulant with forward-transformed first row `kernel_hat`.
fn convolve(f: &mut [Complex64], kernel_hat: &[Complex64], fwd: &dyn Fft<f64>, inv: &dyn Fft<f64>) {
    let n = f.len() as f64;
    fwd.process(f);
    for (v, k) in f.iter_mut().zip(kernel_hat) {
        *v *= k / n;
    }
    inv.process(f);
}

/// Smoothed loop `K^L_x = sum_a prod_i S_{x_i a_i} Khat_a`.
pub fn kloop_l(khat: &LoopTensor, profile: &VarianceProfile) -> LoopTensor {
    khat.smooth_axes(profile, 0..khat.order)
}

/// Diagonal part of the smoothed chain: `K^C_{(x_1..x_{n-1}, x)} = sum_a prod_{i<n} S_{x_i a_i} Khat_{(a, x)}`.
pub fn kloop_c(khat: &LoopTensor, profile: &VarianceProfile) -> LoopTensor {
    khat.smooth_axes(profile, 0..khat.order.saturating_sub(1))
}

pub(crate) type SharedTensor = Arc<LoopTensor>;
