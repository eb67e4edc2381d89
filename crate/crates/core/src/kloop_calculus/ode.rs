//! Direct integration of the loop-order ODE system for `Khat`, used as an independent
//! check of the recursion.

use super::tensor::LoopTensor;
use crate::deterministic::{m_sc_real, Charge};
use crate::error::{invalid, PrbmError, Result};
use crate::VarianceProfile;
use num_complex::Complex64;
use std::collections::HashMap;

pub const MAX_ODE_ORDER: usize = 3;
pub const MAX_ODE_SITES: usize = 32;

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    /// Largest RK4 step.
    pub dt: f64,
    /// Accepted discrepancy between step `dt` and `dt/2`, relative to the largest entry.
    pub halving_tol: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { dt: 1e-3, halving_tol: 1e-9 }
    }
}

/// Charge vectors of the two factors produced by cutting edges `i < j` (1-based) of a loop.
fn split_charges(sigma: &[Charge], i: usize, j: usize) -> (Vec<Charge>, Vec<Charge>) {
    let k = sigma.len();
    let mut left: Vec<Charge> = sigma[j - 1..k].to_vec();
    left.extend_from_slice(&sigma[..i]);
    (left, sigma[i - 1..j].to_vec())
}

struct Split {
    left: usize,
    right: usize,
    r_rows: usize,
    // (left row, right row) for every entry of the differentiated tensor
    gather: Vec<(usize, usize)>,
}

struct System<'a> {
    profile: &'a VarianceProfile,
    charges: Vec<Vec<Charge>>,
    splits: Vec<Vec<Split>>,
    kernel: Vec<f64>,
}

impl<'a> System<'a> {
    fn new(profile: &'a VarianceProfile, target: &[Charge]) -> Self {
        let mut charges = vec![target.to_vec()];
        let mut slot = HashMap::from([(target.to_vec(), 0)]);
        let mut cursor = 0;
        while cursor < charges.len() {
            let sigma = charges[cursor].clone();
            let k = sigma.len();
            for i in 1..=k {
                for j in i + 1..=k {
                    let (l, r) = split_charges(&sigma, i, j);
                    for c in [l, r] {
                        if !slot.contains_key(&c) {
                            slot.insert(c.clone(), charges.len());
                            charges.push(c);
                        }
                    }
                }
            }
            cursor += 1;
        }
        let n = profile.size;
        let splits = charges
            .iter()
            .map(|sigma| {
                let k = sigma.len();
                let size = n.pow(k as u32);
                let mut out = Vec::new();
                for i in 1..=k {
                    for j in i + 1..=k {
                        let (lc, rc) = split_charges(sigma, i, j);
                        let probe = LoopTensor::zeros(n, k);
                        let gather = (0..size)
                            .map(|flat| {
                                let xs = probe.unravel(flat);
                                let li = xs[j - 1..].iter().chain(&xs[..i - 1]).fold(0, |acc, &x| acc * n + x);
                                let ri = xs[i - 1..j - 1].iter().fold(0, |acc, &x| acc * n + x);
                                (li, ri)
                            })
                            .collect();
                        out.push(Split { left: slot[&lc], right: slot[&rc], r_rows: n.pow(rc.len() as u32 - 1), gather });
                    }
                }
                out
            })
            .collect();
        let kernel = (0..n * n).map(|f| profile.entry(f / n, f % n)).collect();
        Self { profile, charges, splits, kernel }
    }

    fn initial(&self, m: Complex64) -> Vec<LoopTensor> {
        let n = self.profile.size;
        self.charges
            .iter()
            .map(|sigma| {
                let mut t = LoopTensor::zeros(n, sigma.len());
                let prod: Complex64 = sigma.iter().map(|s| s.apply(m)).product();
                for x in 0..n {
                    let idx = t.index(&vec![x; sigma.len()]);
                    t.data[idx] = prod;
                }
                t
            })
            .collect()
    }

    fn rhs(&self, state: &[LoopTensor]) -> Vec<LoopTensor> {
        let n = self.profile.size;
        let zero = Complex64::new(0.0, 0.0);
        let mut out = Vec::with_capacity(state.len());
        for (sigma, splits) in self.charges.iter().zip(&self.splits) {
            let mut d = LoopTensor::zeros(n, sigma.len());
            for sp in splits {
                let left = &state[sp.left].data;
                let right = &state[sp.right].data;
                // smoothed[b, u] = sum_v right[b, v] S[u, v]
                let mut smoothed = vec![zero; sp.r_rows * n];
                for b in 0..sp.r_rows {
                    let rb = &right[b * n..(b + 1) * n];
                    for u in 0..n {
                        let su = &self.kernel[u * n..(u + 1) * n];
                        smoothed[b * n + u] = rb.iter().zip(su).map(|(p, q)| p * q).sum();
                    }
                }
                let l_rows = left.len() / n;
                let mut prod = vec![zero; l_rows * sp.r_rows];
                for a in 0..l_rows {
                    let la = &left[a * n..(a + 1) * n];
                    for b in 0..sp.r_rows {
                        let rb = &smoothed[b * n..(b + 1) * n];
                        prod[a * sp.r_rows + b] = la.iter().zip(rb).map(|(p, q)| p * q).sum();
                    }
                }
                for (v, &(li, ri)) in d.data.iter_mut().zip(&sp.gather) {
                    *v += prod[li * sp.r_rows + ri];
                }
            }
            out.push(d);
        }
        out
    }

    fn axpy(state: &[LoopTensor], h: f64, k: &[LoopTensor]) -> Vec<LoopTensor> {
        state
            .iter()
            .zip(k)
            .map(|(s, d)| LoopTensor {
                n_sites: s.n_sites,
                order: s.order,
                data: s.data.iter().zip(&d.data).map(|(a, b)| a + b * h).collect(),
            })
            .collect()
    }

    fn rk4_step(&self, state: &mut Vec<LoopTensor>, h: f64) {
        let k1 = self.rhs(state);
        let k2 = self.rhs(&Self::axpy(state, h / 2.0, &k1));
        let k3 = self.rhs(&Self::axpy(state, h / 2.0, &k2));
        let k4 = self.rhs(&Self::axpy(state, h, &k3));
        for (idx, s) in state.iter_mut().enumerate() {
            for (e, v) in s.data.iter_mut().enumerate() {
                *v += h / 6.0 * (k1[idx].data[e] + 2.0 * k2[idx].data[e] + 2.0 * k3[idx].data[e] + k4[idx].data[e]);
            }
        }
    }

    fn integrate(&self, m: Complex64, times: &[f64], dt: f64) -> Vec<LoopTensor> {
        let mut state = self.initial(m);
        let mut now = 0.0;
        let mut snapshots = Vec::with_capacity(times.len());
        for &t in times {
            let span = t - now;
            if span > 0.0 {
                let steps = (span / dt).ceil() as usize;
                let h = span / steps as f64;
                for _ in 0..steps {
                    self.rk4_step(&mut state, h);
                }
            }
            now = t;
            snapshots.push(state[0].clone());
        }
        snapshots
    }
}

/// `Khat^(n)` for charges `sigma` at each of the (ascending) `times`, by RK4 from the
/// diagonal initial condition. The run is repeated with half the step and rejected when
/// the two disagree by more than `halving_tol` relative to the largest entry.
pub fn khat_ode_trajectory(
    profile: &VarianceProfile,
    energy: f64,
    times: &[f64],
    sigma: &[Charge],
    opts: &OdeOptions,
) -> Result<Vec<LoopTensor>> {
    let order = sigma.len();
    if order < 2 || order > MAX_ODE_ORDER || profile.size > MAX_ODE_SITES {
        return invalid(format!(
            "ODE oracle supports 2 <= n <= {MAX_ODE_ORDER} and N <= {MAX_ODE_SITES}, got n = {order}, N = {}",
            profile.size
        ));
    }
    if energy.abs() >= 2.0 {
        return invalid(format!("energy {energy} is outside the bulk (-2, 2)"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| !(0.0..1.0).contains(&t)) {
        return invalid("times must be ascending in [0, 1)");
    }
    if !(opts.dt > 0.0 && opts.dt <= 1e-3) {
        return invalid(format!("ODE step must lie in (0, 1e-3], got {}", opts.dt));
    }
    let m = m_sc_real(energy);
    let system = System::new(profile, sigma);
    let coarse = system.integrate(m, times, opts.dt);
    let fine = system.integrate(m, times, opts.dt / 2.0);
    for (c, f) in coarse.iter().zip(&fine) {
        let diff = c.max_abs_diff(f)?;
        if diff > opts.halving_tol * f.max_abs().max(1.0) {
            return Err(PrbmError::Convergence(format!("RK4 step halving changed the result by {diff:e}")));
        }
    }
    Ok(fine)
}

pub fn khat_ode_oracle(profile: &VarianceProfile, energy: f64, t: f64, sigma: &[Charge], opts: &OdeOptions) -> Result<LoopTensor> {
    Ok(khat_ode_trajectory(profile, energy, &[t], sigma, opts)?.remove(0))
}
