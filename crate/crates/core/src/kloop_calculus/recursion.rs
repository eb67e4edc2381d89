use super::tensor::{LoopTensor, SharedTensor};
use crate::deterministic::{m_sc_real, resolvent_row, Charge};
use crate::error::{invalid, PrbmError, Result};
use crate::VarianceProfile;
use num_complex::Complex64;
use std::collections::HashMap;
use std::sync::Arc;

/// Largest order for which dense tensors are built.
pub const MAX_TENSOR_ORDER: usize = 4;
/// Largest `N` in dense-tensor mode.
pub const MAX_TENSOR_SITES: usize = 64;
/// Largest `N` in pointwise mode.
pub const MAX_POINTWISE_SITES: usize = 128;

/// Evaluates `Khat^(n)` through the two-term recursion in the loop order, memoizing
/// lower-order tensors and pointwise values.
///
/// `Khat^(n+1)_{sigma,x} = m(s_1) Khat^(n)_{(s_2..s_{n+1}),(x_2..x_n,x_1)} R_{x_1 x_{n+1}}
///   + t m(s_1) sum_{k=2}^{n} sum_{x,y} Khat^(k)_{(s_1..s_k),(x_1..x_{k-1},y)} S_xy
///     Khat^(n-k+2)_{(s_k..s_{n+1}),(x_k..x_n,x)} R_{x x_{n+1}}`
/// with `R = (1 - t m(s_1) m(s_{n+1}) S)^(-1)`.
pub struct KhatEngine<'a> {
    profile: &'a VarianceProfile,
    t: f64,
    m: Complex64,
    resolvents: HashMap<(Charge, Charge), Vec<Complex64>>,
    tensors: HashMap<Vec<Charge>, SharedTensor>,
    points: HashMap<(Vec<Charge>, Vec<usize>), Complex64>,
}

impl<'a> KhatEngine<'a> {
    pub fn new(profile: &'a VarianceProfile, energy: f64, t: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&t) {
            return invalid(format!("t must lie in [0, 1), got {t}"));
        }
        if energy.abs() >= 2.0 {
            return invalid(format!("energy {energy} is outside the bulk (-2, 2)"));
        }
        Ok(Self {
            profile,
            t,
            m: m_sc_real(energy),
            resolvents: HashMap::new(),
            tensors: HashMap::new(),
            points: HashMap::new(),
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn m(&self, s: Charge) -> Complex64 {
        s.apply(self.m)
    }

    /// First row of `(1 - t m(a) m(b) S)^(-1)`.
    fn resolvent(&mut self, a: Charge, b: Charge) -> Result<&[Complex64]> {
        if !self.resolvents.contains_key(&(a, b)) {
            let xi = self.t * self.m(a) * self.m(b);
            let row = resolvent_row(self.profile, xi, 0)?.row;
            self.resolvents.insert((a, b), row);
        }
        Ok(&self.resolvents[&(a, b)])
    }

    /// Dense `Khat^(n)` for the given charges, `n = sigma.len()`.
    pub fn tensor(&mut self, sigma: &[Charge]) -> Result<SharedTensor> {
        let n_sites = self.profile.size;
        let order = sigma.len();
        if order == 0 || order > MAX_TENSOR_ORDER || n_sites > MAX_TENSOR_SITES {
            return Err(PrbmError::InvalidParameter(format!(
                "dense mode supports order <= {MAX_TENSOR_ORDER} and N <= {MAX_TENSOR_SITES}, got order {order}, N {n_sites}"
            )));
        }
        if let Some(t) = self.tensors.get(sigma) {
            return Ok(t.clone());
        }
        let out = if order == 1 {
            let mut t = LoopTensor::zeros(n_sites, 1);
            t.data.fill(self.m(sigma[0]));
            t
        } else {
            self.build(sigma)?
        };
        let out = Arc::new(out);
        self.tensors.insert(sigma.to_vec(), out.clone());
        Ok(out)
    }

    fn build(&mut self, sigma: &[Charge]) -> Result<LoopTensor> {
        let n = self.profile.size;
        let order = sigma.len();
        let m1 = self.m(sigma[0]);
        let r = self.resolvent(sigma[0], sigma[order - 1])?.to_vec();
        let r_at = |x: usize, y: usize| r[(y + n - x) % n];
        let mut out = LoopTensor::zeros(n, order);

        let inner = self.tensor(&sigma[1..])?;
        for flat in 0..out.data.len() {
            let xs = out.unravel(flat);
            let mut idx = 0;
            for &x in &xs[1..order - 1] {
                idx = idx * n + x;
            }
            idx = idx * n + xs[0];
            out.data[flat] = m1 * inner.data[idx] * r_at(xs[0], xs[order - 1]);
        }

        let coupling = self.t * m1;
        for k in 2..order {
            let a = self.tensor(&sigma[..k])?;
            let a_smooth = a.smooth_axis(self.profile, k - 1);
            let b = self.tensor(&sigma[k - 1..])?;
            let p_len = n.pow((k - 1) as u32);
            let q_len = n.pow((order - k) as u32);
            let mut v = vec![Complex64::new(0.0, 0.0); n];
            for p in 0..p_len {
                for q in 0..q_len {
                    for (x, vx) in v.iter_mut().enumerate() {
                        *vx = a_smooth.data[p * n + x] * b.data[q * n + x];
                    }
                    let base = (p * q_len + q) * n;
                    for last in 0..n {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (x, vx) in v.iter().enumerate() {
                            acc += vx * r_at(x, last);
                        }
                        out.data[base + last] += coupling * acc;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Single entry `Khat^(n)_{sigma,x}` without building dense tensors of order `n`.
    pub fn value(&mut self, sigma: &[Charge], xs: &[usize]) -> Result<Complex64> {
        let n = self.profile.size;
        if sigma.len() != xs.len() || sigma.is_empty() {
            return invalid("charges and vertices must have equal nonzero length");
        }
        if n > MAX_POINTWISE_SITES {
            return invalid(format!("pointwise mode supports N <= {MAX_POINTWISE_SITES}, got {n}"));
        }
        if xs.iter().any(|&x| x >= n) {
            return invalid("vertex outside Z_N");
        }
        if let Some(t) = self.tensors.get(sigma) {
            return Ok(t.get(xs));
        }
        let key = (sigma.to_vec(), xs.to_vec());
        if let Some(&v) = self.points.get(&key) {
            return Ok(v);
        }
        let order = sigma.len();
        let v = if order == 1 {
            self.m(sigma[0])
        } else {
            let m1 = self.m(sigma[0]);
            let r = self.resolvent(sigma[0], sigma[order - 1])?.to_vec();
            let r_at = |x: usize, y: usize| r[(y + n - x) % n];
            let mut inner_x: Vec<usize> = xs[1..order - 1].to_vec();
            inner_x.push(xs[0]);
            let mut v = m1 * self.value(&sigma[1..], &inner_x)? * r_at(xs[0], xs[order - 1]);
            let coupling = self.t * m1;
            for k in 2..order {
                let mut a_row = Vec::with_capacity(n);
                let mut left: Vec<usize> = xs[..k - 1].to_vec();
                left.push(0);
                for y in 0..n {
                    left[k - 1] = y;
                    a_row.push(self.value(&sigma[..k], &left)?);
                }
                let mut right: Vec<usize> = xs[k - 1..order - 1].to_vec();
                right.push(0);
                let last = xs[order - 1];
                for x in 0..n {
                    right[order - k] = x;
                    let b = self.value(&sigma[k - 1..], &right)?;
                    let sa: Complex64 = (0..n).map(|y| self.profile.entry(x, y) * a_row[y]).sum();
                    v += coupling * sa * b * r_at(x, last);
                }
            }
            v
        };
        self.points.insert(key, v);
        Ok(v)
    }
}
