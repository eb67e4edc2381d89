//! Resolvent entries, loops and chains of a sampled matrix, and their residuals against
//! the deterministic approximants.

use crate::circulant::Circulant;
use crate::deterministic::{m_sc, resolvent_row, Charge, ShapeParams};
use crate::ensemble::RngStream;
use crate::error::{invalid, PrbmError, Result};
use crate::spectral::SpectralDecomposition;
use crate::{periodic_distance, VarianceProfile};
use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// `G(z) = (H - z)^(-1)` together with `G(z)^* = G(conj z)`.
#[derive(Debug, Clone)]
pub struct Resolvent {
    pub z: Complex64,
    pub plus: Mat<Complex64>,
    pub minus: Mat<Complex64>,
}

fn adjoint(m: &Mat<Complex64>) -> Mat<Complex64> {
    m.adjoint().to_owned()
}

impl Resolvent {
    /// `G = U diag(1/(lambda - z)) U^*`.
    pub fn from_decomposition(decomp: &SpectralDecomposition, z: Complex64) -> Result<Self> {
        if !(z.im > 0.0) {
            return invalid(format!("Im z must be positive, got {}", z.im));
        }
        let u = &decomp.eigenvectors;
        let n = decomp.size();
        let scaled = Mat::from_fn(n, n, |i, k| u[(i, k)] / (decomp.eigenvalues[k] - z));
        let plus = &scaled * u.adjoint();
        let minus = adjoint(&plus);
        Ok(Self { z, plus, minus })
    }

    /// Direct inversion of `H - z` by LU with partial pivoting.
    pub fn from_matrix(h: &Mat<Complex64>, z: Complex64) -> Result<Self> {
        if !(z.im > 0.0) {
            return invalid(format!("Im z must be positive, got {}", z.im));
        }
        let n = h.nrows();
        let shifted = Mat::from_fn(n, n, |i, j| if i == j { h[(i, j)] - z } else { h[(i, j)] });
        let plus = shifted.partial_piv_lu().inverse();
        let minus = adjoint(&plus);
        Ok(Self { z, plus, minus })
    }

    pub fn size(&self) -> usize {
        self.plus.nrows()
    }

    pub fn eta(&self) -> f64 {
        self.z.im
    }

    pub fn charged(&self, sigma: Charge) -> &Mat<Complex64> {
        match sigma {
            Charge::Plus => &self.plus,
            Charge::Minus => &self.minus,
        }
    }

    /// `(G - G^*) / (2i)`.
    pub fn im_part(&self) -> Mat<Complex64> {
        let n = self.size();
        let half_i = Complex64::new(0.0, 2.0);
        Mat::from_fn(n, n, |i, j| (self.plus[(i, j)] - self.minus[(i, j)]) / half_i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualMax {
    pub value: f64,
    pub x: usize,
    pub y: usize,
}

/// `max_{x,y} |G_xy - m delta_xy|^2 / B(eta, |x-y|)`.
pub fn entrywise_local_law_residual(res: &Resolvent, m: Complex64, shape: &ShapeParams, eta: f64) -> Result<ResidualMax> {
    let n = res.size();
    let b: Vec<f64> = (0..=n / 2).map(|r| shape.b(eta, r as f64)).collect::<Result<_>>()?;
    let mut best = ResidualMax { value: 0.0, x: 0, y: 0 };
    for y in 0..n {
        for x in 0..n {
            let d = if x == y { res.plus[(x, y)] - m } else { res.plus[(x, y)] };
            let v = d.norm_sqr() / b[periodic_distance(x, y, n)];
            if v > best.value {
                best = ResidualMax { value: v, x, y };
            }
        }
    }
    Ok(best)
}

/// `max_x |<(G - m) S^(x)>| / B(eta, 0)`.
pub fn averaged_local_law_residual(
    res: &Resolvent,
    profile: &VarianceProfile,
    m: Complex64,
    shape: &ShapeParams,
    eta: f64,
) -> Result<ResidualMax> {
    let n = res.size();
    let b0 = shape.b(eta, 0.0)?;
    let mut best = ResidualMax { value: 0.0, x: 0, y: 0 };
    for x in 0..n {
        let s: Complex64 = (0..n).map(|a| profile.entry(x, a) * (res.plus[(a, a)] - m)).sum();
        let v = s.norm() / b0;
        if v > best.value {
            best = ResidualMax { value: v, x, y: x };
        }
    }
    Ok(best)
}

/// `M_ab = G(sigma_1)_ba G(sigma_2)_ab`, so that `L_xy = (S M S)_xy`.
fn loop_kernel(res: &Resolvent, sigma: (Charge, Charge)) -> Mat<Complex64> {
    let (g1, g2) = (res.charged(sigma.0), res.charged(sigma.1));
    let n = res.size();
    Mat::from_fn(n, n, |a, b| g1[(b, a)] * g2[(a, b)])
}

/// Two-loop `L_xy = Tr(G(sigma_1) S^(x) G(sigma_2) S^(y))`, evaluated pointwise.
pub fn l_loop_2(res: &Resolvent, profile: &VarianceProfile, x: usize, y: usize, sigma: (Charge, Charge)) -> Complex64 {
    LoopEvaluator::new(res, profile, sigma).at(x, y)
}

/// Repeated evaluation of `L_xy` for one charge pair.
pub struct LoopEvaluator<'a> {
    kernel: Mat<Complex64>,
    profile: &'a VarianceProfile,
}

impl<'a> LoopEvaluator<'a> {
    pub fn new(res: &Resolvent, profile: &'a VarianceProfile, sigma: (Charge, Charge)) -> Self {
        Self { kernel: loop_kernel(res, sigma), profile }
    }

    pub fn at(&self, x: usize, y: usize) -> Complex64 {
        let n = self.profile.size;
        let mut acc = Complex64::new(0.0, 0.0);
        for b in 0..n {
            let syb = self.profile.entry(y, b);
            let mut col = Complex64::new(0.0, 0.0);
            for a in 0..n {
                col += self.profile.entry(x, a) * self.kernel[(a, b)];
            }
            acc += col * syb;
        }
        acc
    }
}

/// Full matrix `L = S M S`.
pub fn l_loop_matrix(res: &Resolvent, profile: &VarianceProfile, sigma: (Charge, Charge)) -> Mat<Complex64> {
    let s = profile.dense();
    let n = profile.size;
    let sc = Mat::from_fn(n, n, |i, j| Complex64::new(s[(i, j)], 0.0));
    let m = loop_kernel(res, sigma);
    &(&sc * &m) * &sc
}

/// `T_{x,yy'} = sum_a S_xa G(sigma_1)_ya G(sigma_2)_ay'`.
pub fn t_variable(res: &Resolvent, profile: &VarianceProfile, x: usize, y: usize, y2: usize, sigma: (Charge, Charge)) -> Complex64 {
    let (g1, g2) = (res.charged(sigma.0), res.charged(sigma.1));
    (0..res.size()).map(|a| profile.entry(x, a) * g1[(y, a)] * g2[(a, y2)]).sum()
}

/// `m(z_sigma_1) m(z_sigma_2)` with `m(z_-) = conj m(z)`.
pub fn target_charge_product(z: Complex64, sigma: (Charge, Charge)) -> Complex64 {
    let m = m_sc(z);
    sigma.0.apply(m) * sigma.1.apply(m)
}

/// Deterministic two-loop at a target spectral parameter, `a S^2 / (1 - a S)`.
pub fn k_loop_at(profile: &VarianceProfile, z: Complex64, sigma: (Charge, Charge)) -> Result<Circulant> {
    let a = target_charge_product(z, sigma);
    let r = resolvent_row(profile, a, 2)?;
    Ok(Circulant::from_row(r.row.into_iter().map(|v| v * a).collect()))
}

/// Deterministic T-variable kernel at a target spectral parameter, `a S / (1 - a S)`.
pub fn theta_at(profile: &VarianceProfile, z: Complex64, sigma: (Charge, Charge)) -> Result<Circulant> {
    let a = target_charge_product(z, sigma);
    let r = resolvent_row(profile, a, 1)?;
    Ok(Circulant::from_row(r.row.into_iter().map(|v| v * a).collect()))
}

fn diag_scale_cols(m: &Mat<Complex64>, profile: &VarianceProfile, x: usize) -> Mat<Complex64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * profile.entry(x, j))
}

/// `G(sigma_1) S^(x_1) ... G(sigma_k) S^(x_k)` for the first `k = xs.len()` factors.
fn chain_product(res: &Resolvent, profile: &VarianceProfile, sigma: &[Charge], xs: &[usize]) -> Mat<Complex64> {
    let mut acc = diag_scale_cols(res.charged(sigma[0]), profile, xs[0]);
    for k in 1..xs.len() {
        let next = &acc * res.charged(sigma[k]);
        acc = diag_scale_cols(&next, profile, xs[k]);
    }
    acc
}

/// `n`-loop `Tr(G(sigma_1) S^(x_1) ... G(sigma_n) S^(x_n))`.
pub fn n_loop(res: &Resolvent, profile: &VarianceProfile, sigma: &[Charge], xs: &[usize]) -> Result<Complex64> {
    if sigma.is_empty() || sigma.len() != xs.len() {
        return invalid("n-loop needs equally many charges and vertices");
    }
    let p = chain_product(res, profile, sigma, xs);
    Ok((0..p.nrows()).map(|i| p[(i, i)]).sum())
}

/// `n`-chain `(G(sigma_1) S^(x_1) ... S^(x_{n-1}) G(sigma_n))_xy` with `xs.len() = n - 1`.
pub fn n_chain(res: &Resolvent, profile: &VarianceProfile, sigma: &[Charge], xs: &[usize], x: usize, y: usize) -> Result<Complex64> {
    if sigma.len() != xs.len() + 1 {
        return invalid("n-chain needs n charges and n - 1 vertices");
    }
    if xs.is_empty() {
        return Ok(res.charged(sigma[0])[(x, y)]);
    }
    let p = chain_product(res, profile, &sigma[..xs.len()], xs);
    let g = res.charged(sigma[xs.len()]);
    Ok((0..res.size()).map(|a| p[(x, a)] * g[(a, y)]).sum())
}

/// Largest deviations in the three Ward identities, relative to `max(1, max |rhs|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WardResiduals {
    /// `sum_x conj(G_xy) G_xy' = (Im G)_yy' / eta`.
    pub resolvent: f64,
    /// `sum_y L^{+-}_xy = Im Tr(G S^(x)) / eta`.
    pub loop_sum: f64,
    /// `sum_x T^{+-}_{x,yy'} = (Im G)_yy' / eta`.
    pub t_sum: f64,
}

impl WardResiduals {
    pub fn max(&self) -> f64 {
        self.resolvent.max(self.loop_sum).max(self.t_sum)
    }
}

pub fn ward_residuals(res: &Resolvent, profile: &VarianceProfile) -> WardResiduals {
    let n = res.size();
    let eta = res.eta();
    let im_g = res.im_part();
    let rhs = Mat::from_fn(n, n, |i, j| im_g[(i, j)] / eta);
    let rhs_scale = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| rhs[(i, j)].norm()).fold(1.0, f64::max);

    let gstar_g = &res.minus * &res.plus;
    let mut resolvent: f64 = 0.0;
    for j in 0..n {
        for i in 0..n {
            resolvent = resolvent.max((gstar_g[(i, j)] - rhs[(i, j)]).norm());
        }
    }

    let l = l_loop_matrix(res, profile, (Charge::Plus, Charge::Minus));
    let mut loop_sum: f64 = 0.0;
    let mut loop_scale: f64 = 1.0;
    for x in 0..n {
        let lhs: Complex64 = (0..n).map(|y| l[(x, y)]).sum();
        let target: f64 = (0..n).map(|a| profile.entry(x, a) * im_g[(a, a)].re).sum::<f64>() / eta;
        loop_scale = loop_scale.max(target.abs());
        loop_sum = loop_sum.max((lhs - target).norm());
    }

    // sum_x T_{x,yy'} = sum_a (sum_x S_xa) G_ya G*_ay', evaluated with the explicit column sums of S.
    let col_sums: Vec<f64> = (0..n).map(|a| (0..n).map(|x| profile.entry(x, a)).sum()).collect();
    let weighted = Mat::from_fn(n, n, |y, a| res.plus[(y, a)] * col_sums[a]);
    let t_total = &weighted * &res.minus;
    let mut t_sum: f64 = 0.0;
    for j in 0..n {
        for i in 0..n {
            t_sum = t_sum.max((t_total[(i, j)] - rhs[(i, j)]).norm());
        }
    }
    WardResiduals { resolvent: resolvent / rhs_scale, loop_sum: loop_sum / loop_scale, t_sum: t_sum / rhs_scale }
}

/// Which theoretical error size a residual is divided by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizerId {
    /// `B(0) B(|x-y|)`, for `alpha >= 1`.
    LoopSupercritical,
    /// `B(0)^(1/5) B(|x-y|)`, for `alpha in [0, 1)`.
    LoopSubcritical,
    /// `W^(-6/5) + (N eta)^(-7/4)`, in the flat regime.
    LoopFlat,
    /// `B(0)^(1/2) [B(|x-y|) B(|x-y'|)]^(1/2)`, for `alpha >= 1`.
    TSupercritical,
    /// `B(0)^(7/10) B(|x-y| ^ |x-y'|)^(1/2)`, for `alpha in [0, 1)`.
    TSubcritical,
    /// `W^(-6/5) + (N eta)^(-3/2)`, in the flat regime.
    TFlat,
}

impl NormalizerId {
    pub fn as_str(self) -> &'static str {
        match self {
            NormalizerId::LoopSupercritical => "loop_supercritical",
            NormalizerId::LoopSubcritical => "loop_subcritical",
            NormalizerId::LoopFlat => "loop_flat",
            NormalizerId::TSupercritical => "t_supercritical",
            NormalizerId::TSubcritical => "t_subcritical",
            NormalizerId::TFlat => "t_flat",
        }
    }

    /// Default choice for loops (`t_variable = false`) or T-variables; the flat variants
    /// apply for `alpha < 0` or when `flat` is requested.
    pub fn select(alpha: f64, t_variable: bool, flat: bool) -> Self {
        match (t_variable, flat || alpha < 0.0, alpha >= 1.0) {
            (false, true, _) => NormalizerId::LoopFlat,
            (false, false, true) => NormalizerId::LoopSupercritical,
            (false, false, false) => NormalizerId::LoopSubcritical,
            (true, true, _) => NormalizerId::TFlat,
            (true, false, true) => NormalizerId::TSupercritical,
            (true, false, false) => NormalizerId::TSubcritical,
        }
    }
}

/// Shape parameter at a target spectral parameter, `B(1 - |m(z)|^2, r)`.
pub fn target_shape_b(shape: &ShapeParams, z: Complex64, r: f64) -> Result<f64> {
    let m2 = m_sc(z).norm_sqr();
    shape.b(1.0 - m2, r)
}

/// Normalizer value; `r2` is only used by the T-variable variants.
pub fn normalizer_value(id: NormalizerId, shape: &ShapeParams, eta_eff: f64, eta: f64, r: f64, r2: f64) -> Result<f64> {
    let b = |r: f64| shape.b(eta_eff, r);
    let flat = |p: f64| shape.w.powf(-1.2) + (shape.n * eta).powf(-p);
    Ok(match id {
        NormalizerId::LoopSupercritical => b(0.0)? * b(r)?,
        NormalizerId::LoopSubcritical => b(0.0)?.powf(0.2) * b(r)?,
        NormalizerId::LoopFlat => flat(1.75),
        NormalizerId::TSupercritical => b(0.0)?.sqrt() * (b(r)? * b(r2)?).sqrt(),
        NormalizerId::TSubcritical => b(0.0)?.powf(0.7) * b(r.min(r2))?.sqrt(),
        NormalizerId::TFlat => flat(1.5),
    })
}

/// Points at which a residual is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub random_points: usize,
    pub lattice_step: Option<usize>,
    pub seed: u64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self { random_points: 256, lattice_step: None, seed: 0 }
    }
}

impl SamplingPlan {
    /// Random `(x, y, sigma)` triples followed by every lattice pair with all four charge pairs.
    pub fn points(&self, n: usize) -> Vec<(usize, usize, (Charge, Charge))> {
        let mut rng = RngStream::new(self.seed, u64::MAX).rng();
        let charge = |b: bool| if b { Charge::Plus } else { Charge::Minus };
        let mut pts: Vec<_> = (0..self.random_points)
            .map(|_| (rng.random_range(0..n), rng.random_range(0..n), (charge(rng.random()), charge(rng.random()))))
            .collect();
        if let Some(step) = self.lattice_step.filter(|&s| s > 0) {
            for x in (0..n).step_by(step) {
                for y in (0..n).step_by(step) {
                    for s1 in Charge::BOTH {
                        for s2 in Charge::BOTH {
                            pts.push((x, y, (s1, s2)));
                        }
                    }
                }
            }
        }
        pts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub max: f64,
    pub mean: f64,
    pub p99: f64,
    pub count: usize,
}

impl ResidualStats {
    pub fn from_values(mut v: Vec<f64>) -> Self {
        let count = v.len();
        if count == 0 {
            return Self { max: f64::NAN, mean: f64::NAN, p99: f64::NAN, count };
        }
        v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let mean = v.iter().sum::<f64>() / count as f64;
        let idx = ((0.99 * count as f64).ceil() as usize).clamp(1, count) - 1;
        Self { max: v[count - 1], mean, p99: v[idx], count }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionReport {
    pub loop_stats: ResidualStats,
    pub loop_normalizer: NormalizerId,
    pub t_stats: ResidualStats,
    pub t_normalizer: NormalizerId,
}

/// Normalized residuals `|L - K|` and `|T - Theta|` over the sampling plan, at the
/// resolvent's own spectral parameter. The T-variable uses `y' = y` for even and
/// `y' = x` for odd sample positions.
pub fn diffusion_residual(res: &Resolvent, profile: &VarianceProfile, plan: &SamplingPlan, flat: bool) -> Result<DiffusionReport> {
    let n = profile.size;
    let z = res.z;
    if res.size() != n {
        return Err(PrbmError::InvalidParameter("resolvent and profile sizes differ".into()));
    }
    let shape = ShapeParams::from_profile(profile);
    let eta_eff = 1.0 - m_sc(z).norm_sqr();
    let loop_id = NormalizerId::select(profile.alpha, false, flat);
    let t_id = NormalizerId::select(profile.alpha, true, flat);
    let mut evaluators = Vec::new();
    let mut k_rows = Vec::new();
    let mut theta_rows = Vec::new();
    for s1 in Charge::BOTH {
        for s2 in Charge::BOTH {
            evaluators.push(LoopEvaluator::new(res, profile, (s1, s2)));
            k_rows.push(k_loop_at(profile, z, (s1, s2))?);
            theta_rows.push(theta_at(profile, z, (s1, s2))?);
        }
    }
    let slot = |s: (Charge, Charge)| 2 * usize::from(s.0 == Charge::Minus) + usize::from(s.1 == Charge::Minus);
    let mut loop_vals = Vec::new();
    let mut t_vals = Vec::new();
    for (i, (x, y, sigma)) in plan.points(n).into_iter().enumerate() {
        let k = slot(sigma);
        let r = periodic_distance(x, y, n) as f64;
        let l = evaluators[k].at(x, y);
        let norm = normalizer_value(loop_id, &shape, eta_eff, z.im, r, r)?;
        loop_vals.push((l - k_rows[k].entry(x, y)).norm() / norm);

        let y2 = if i % 2 == 0 { y } else { x };
        let t = t_variable(res, profile, x, y, y2, sigma);
        let theta = if y2 == y { theta_rows[k].entry(x, y) } else { Complex64::new(0.0, 0.0) };
        let r2 = periodic_distance(x, y2, n) as f64;
        let norm_t = normalizer_value(t_id, &shape, eta_eff, z.im, r, r2)?;
        t_vals.push((t - theta).norm() / norm_t);
    }
    Ok(DiffusionReport {
        loop_stats: ResidualStats::from_values(loop_vals),
        loop_normalizer: loop_id,
        t_stats: ResidualStats::from_values(t_vals),
        t_normalizer: t_id,
    })
}
