//! Matrix Brownian motion `dH = sqrt(S) dB` observed along the spectral parameter flow
//! `z_t(E) = E + (1 - t) m(E)`, under which the deterministic limit of `G_t(z_t)` stays `m(E)`.
//!
//! Matrices are sampled exactly at checkpoints from independent Gaussian increments, so
//! there is no time discretization error.

use crate::deterministic::{k_loop_propagator, m_sc, m_sc_real, m_t, theta_propagator, Charge, ShapeParams};
use crate::ensemble::{sample_matrix, sample_mbm_increment, RngStream};
use crate::error::{invalid, PrbmError, Result};
use crate::resolvent_observables::{
    l_loop_2, normalizer_value, t_variable, ward_residuals, NormalizerId, Resolvent, WardResiduals,
};
use crate::{periodic_distance, VarianceProfile};
use faer::Mat;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Smallest admissible `Im z` for a flow target.
pub const ETA_FLOOR: f64 = 1e-3;
const ROUND_TRIP_TOL: f64 = 1e-10;

fn check_bulk(energy: f64) -> Result<()> {
    if !(energy.abs() < 2.0) {
        return Err(PrbmError::UnsupportedRegime(format!("energy {energy} is outside the bulk (-2, 2)")));
    }
    Ok(())
}

/// `z_t(E) = E + (1 - t) m(E)`.
pub fn z_flow(energy: f64, t: f64) -> Result<Complex64> {
    check_bulk(energy)?;
    if !(0.0..=1.0).contains(&t) {
        return invalid(format!("flow time must lie in [0, 1], got {t}"));
    }
    Ok(energy + (1.0 - t) * m_sc_real(energy))
}

/// `eta_t = (1 - t) Im m(E)`.
pub fn eta_flow(energy: f64, t: f64) -> Result<f64> {
    Ok(z_flow(energy, t)?.im)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub t_f: f64,
    pub energy: f64,
}

/// Terminal time and base energy with `z_{t_f}(E) = sqrt(t_f) z`:
/// `t_f = |m(z)|^2`, `E = -2 Re m(z) / |m(z)|`.
pub fn flow_params_for_target(z: Complex64) -> Result<FlowParams> {
    if !(z.im >= ETA_FLOOR) {
        return invalid(format!("target needs Im z >= {ETA_FLOOR}, got {}", z.im));
    }
    let m = m_sc(z);
    let t_f = m.norm_sqr();
    let energy = -2.0 * m.re / m.norm();
    let back = z_flow(energy, t_f)?;
    let want = t_f.sqrt() * z;
    let err = (back - want).norm();
    if !(err <= ROUND_TRIP_TOL * want.norm().max(1.0)) {
        return Err(PrbmError::Convergence(format!(
            "flow parameters for z = {z}: t_f = {t_f}, E = {energy}, z_t_f(E) = {back} differs from sqrt(t_f) z = {want} by {err:e}"
        )));
    }
    Ok(FlowParams { t_f, energy })
}

/// Largest `|m_t(z_t(E)) - m(E)|` over `times`.
pub fn flow_invariance_residual(energy: f64, times: &[f64]) -> Result<f64> {
    let m = m_sc_real(energy);
    let mut worst: f64 = 0.0;
    for &t in times {
        worst = worst.max((m_t(z_flow(energy, t)?, t)? - m).norm());
    }
    Ok(worst)
}

/// `{0} ∪ {(1 - 2^-k) t_f : k = 1..=levels}`.
pub fn default_checkpoints(t_f: f64, levels: usize) -> Vec<f64> {
    std::iter::once(0.0).chain((1..=levels).map(|k| (1.0 - 0.5f64.powi(k as i32)) * t_f)).collect()
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| !(0.0..1.0).contains(&t)) {
        return invalid("checkpoints must be non-empty and ascending in [0, 1)");
    }
    Ok(())
}

/// `H_t` at each checkpoint, `H_0 = 0`, built from independent increments.
pub fn brownian_path<R: Rng + ?Sized>(profile: &VarianceProfile, times: &[f64], rng: &mut R) -> Result<Vec<Mat<Complex64>>> {
    let n = profile.size;
    let mut h = Mat::<Complex64>::zeros(n, n);
    let mut now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if t > now {
            h += sample_mbm_increment(profile, t - now, rng)?;
            now = t;
        }
        out.push(h.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub energy: f64,
    pub z: Complex64,
    pub h: Mat<Complex64>,
    pub resolvent: Resolvent,
}

impl FlowState {
    pub fn eta(&self) -> f64 {
        self.z.im
    }

    pub fn ward(&self, profile: &VarianceProfile) -> WardResiduals {
        ward_residuals(&self.resolvent, profile)
    }
}

#[derive(Debug, Clone)]
pub struct FlowRun {
    pub seed: RngStream,
    pub states: Vec<FlowState>,
}

/// Samples `H_t` at the checkpoints and the resolvent `G_t(z_t(E))` of each.
pub fn simulate_flow(profile: &VarianceProfile, energy: f64, times: &[f64], seed: RngStream) -> Result<FlowRun> {
    check_bulk(energy)?;
    check_times(times)?;
    let path = brownian_path(profile, times, &mut seed.rng())?;
    let states = times
        .iter()
        .zip(path)
        .map(|(&t, h)| {
            let z = z_flow(energy, t)?;
            let resolvent = Resolvent::from_matrix(&h, z)?;
            Ok(FlowState { t, energy, z, h, resolvent })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FlowRun { seed, states })
}

/// Quadratic observable tracked along a flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObservableSpec {
    /// `L_xy` against `K_t`.
    Loop { x: usize, y: usize, sigma: (Charge, Charge) },
    /// `T_{x,yy'}` against `Theta_t δ_yy'`.
    T { x: usize, y: usize, y2: usize, sigma: (Charge, Charge) },
}

impl ObservableSpec {
    pub fn id(&self) -> String {
        let c = |s: (Charge, Charge)| format!("{}{}", s.0.symbol(), s.1.symbol());
        match *self {
            ObservableSpec::Loop { x, y, sigma } => format!("L{}:{x}:{y}", c(sigma)),
            ObservableSpec::T { x, y, y2, sigma } => format!("T{}:{x}:{y}:{y2}", c(sigma)),
        }
    }
}

/// Loops at distances `0, 1, 2, 4, ...` from site 0 and T-variables with `y' = y` and
/// `y' = x`, for all four charge pairs.
pub fn default_specs(n: usize) -> Vec<ObservableSpec> {
    let mut ds = vec![0];
    let mut d = 1;
    while d <= n / 2 {
        ds.push(d);
        d *= 2;
    }
    let mut out = Vec::new();
    for s1 in Charge::BOTH {
        for s2 in Charge::BOTH {
            for &y in &ds {
                out.push(ObservableSpec::Loop { x: 0, y, sigma: (s1, s2) });
                out.push(ObservableSpec::T { x: 0, y, y2: y, sigma: (s1, s2) });
                out.push(ObservableSpec::T { x: 0, y, y2: 0, sigma: (s1, s2) });
            }
        }
    }
    out
}

/// `residual` is the raw `|L - K|` or `|T - Theta|`; `normalizer` is the error size it is
/// compared against, so `residual / normalizer` is the normalized trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrackRow {
    pub seed: u64,
    pub t: f64,
    pub spec_id: String,
    pub residual: f64,
    pub normalizer: f64,
}

impl FlowTrackRow {
    pub fn normalized(&self) -> f64 {
        self.residual / self.normalizer
    }
}

/// Regime of the flow normalizers at time `t`: flat once `1 - t <= W/N` for `alpha < 1`.
fn flow_normalizer(profile: &VarianceProfile, t: f64, t_variable: bool) -> NormalizerId {
    let flat = profile.alpha < 1.0 && 1.0 - t <= profile.bandwidth / profile.size as f64;
    NormalizerId::select(profile.alpha, t_variable, flat)
}

pub fn track_observables(run: &FlowRun, profile: &VarianceProfile, specs: &[ObservableSpec]) -> Result<Vec<FlowTrackRow>> {
    let n = profile.size;
    let shape = ShapeParams::from_profile(profile);
    let per_state = run
        .states
        .par_iter()
        .map(|state| {
            let t = state.t;
            let eta = 1.0 - t;
            let mut rows = Vec::with_capacity(specs.len());
            for spec in specs {
                let (residual, id, r, r2) = match *spec {
                    ObservableSpec::Loop { x, y, sigma } => {
                        let k = k_loop_propagator(profile, t, sigma, state.energy)?.entry(x, y);
                        let l = l_loop_2(&state.resolvent, profile, x, y, sigma);
                        let r = periodic_distance(x, y, n) as f64;
                        ((l - k).norm(), flow_normalizer(profile, t, false), r, r)
                    }
                    ObservableSpec::T { x, y, y2, sigma } => {
                        let theta = if y == y2 {
                            theta_propagator(profile, t, sigma, state.energy)?.entry(x, y)
                        } else {
                            Complex64::new(0.0, 0.0)
                        };
                        let tv = t_variable(&state.resolvent, profile, x, y, y2, sigma);
                        let r = periodic_distance(x, y, n) as f64;
                        let r2 = periodic_distance(x, y2, n) as f64;
                        ((tv - theta).norm(), flow_normalizer(profile, t, true), r, r2)
                    }
                };
                let normalizer = normalizer_value(id, &shape, eta, eta, r, r2)?;
                rows.push(FlowTrackRow { seed: run.seed.stream, t, spec_id: spec.id(), residual, normalizer });
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_state.into_iter().flatten().collect())
}

pub fn write_track_csv<W: Write>(rows: &[FlowTrackRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionalOptions {
    pub replicas: usize,
    pub root_seed: u64,
    /// Brownian increments used to reach `t_f` in the flow arm.
    pub increments: usize,
}

impl Default for DistributionalOptions {
    fn default() -> Self {
        Self { replicas: 1000, root_seed: 0, increments: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticComparison {
    pub name: String,
    pub mean_direct: f64,
    pub mean_flow: f64,
    pub var_direct: f64,
    pub var_flow: f64,
    /// `(mean_direct - mean_flow) / sqrt(var_direct/n + var_flow/n)`.
    pub standardized_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionalReport {
    pub z_re: f64,
    pub z_im: f64,
    pub t_f: f64,
    pub energy: f64,
    pub replicas: usize,
    pub statistics: Vec<StatisticComparison>,
    pub max_abs_standardized_diff: f64,
}

impl DistributionalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

const STAT_NAMES: [&str; 5] = ["re_tr_g_over_n", "im_tr_g_over_n", "re_g_00", "im_g_00", "im_g_mid_mid"];

fn statistics(g: &Mat<Complex64>) -> [f64; 5] {
    let n = g.nrows();
    let tr: Complex64 = (0..n).map(|i| g[(i, i)]).sum::<Complex64>() / n as f64;
    let mid = g[(n / 2, n / 2)];
    [tr.re, tr.im, g[(0, 0)].re, g[(0, 0)].im, mid.im]
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Compares `F(G(z))` for direct samples against `F(sqrt(t_f) G_{t_f}(z_{t_f}(E)))` for
/// flow samples. The direct arm uses streams `(0, i)` and the flow arm `(1, i)`.
pub fn distributional_check(profile: &VarianceProfile, z: Complex64, opts: &DistributionalOptions) -> Result<DistributionalReport> {
    if opts.replicas < 100 {
        return invalid(format!("distributional check needs at least 100 replicas, got {}", opts.replicas));
    }
    if opts.increments == 0 {
        return invalid("flow arm needs at least one increment");
    }
    let params = flow_params_for_target(z)?;
    let z_f = z_flow(params.energy, params.t_f)?;
    let scale = params.t_f.sqrt();
    let times: Vec<f64> = (1..=opts.increments).map(|k| params.t_f * k as f64 / opts.increments as f64).collect();
    let replicas = u32::try_from(opts.replicas).map_err(|_| PrbmError::InvalidParameter("too many replicas".into()))?;

    let direct = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let h = sample_matrix(profile, &mut RngStream::for_cell(opts.root_seed, 0, i).rng());
            Ok(statistics(&Resolvent::from_matrix(&h, z)?.plus))
        })
        .collect::<Result<Vec<_>>>()?;
    let flow = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let path = brownian_path(profile, &times, &mut RngStream::for_cell(opts.root_seed, 1, i).rng())?;
            let g = Resolvent::from_matrix(path.last().expect("non-empty path"), z_f)?.plus;
            Ok(statistics(&g).map(|v| v * scale))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = opts.replicas as f64;
    let statistics: Vec<StatisticComparison> = STAT_NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let (md, vd) = mean_var(&direct.iter().map(|s| s[k]).collect::<Vec<_>>());
            let (mf, vf) = mean_var(&flow.iter().map(|s| s[k]).collect::<Vec<_>>());
            let se = (vd / n + vf / n).sqrt();
            let standardized_diff = if se > 0.0 { (md - mf) / se } else { 0.0 };
            StatisticComparison { name: (*name).into(), mean_direct: md, mean_flow: mf, var_direct: vd, var_flow: vf, standardized_diff }
        })
        .collect();
    let max_abs_standardized_diff = statistics.iter().map(|s| s.standardized_diff.abs()).fold(0.0, f64::max);
    Ok(DistributionalReport {
        z_re: z.re,
        z_im: z.im,
        t_f: params.t_f,
        energy: params.energy,
        replicas: opts.replicas,
        statistics,
        max_abs_standardized_diff,
    })
}
