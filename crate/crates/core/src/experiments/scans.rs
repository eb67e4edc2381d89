use super::config::{ExperimentConfig, ScanKind};
use crate::deterministic::{m_sc, ShapeParams};
use crate::ensemble::{sample_gue, sample_prbm, RngStream};
use crate::error::{PrbmError, Result};
use crate::resolvent_observables::{
    averaged_local_law_residual, diffusion_residual, entrywise_local_law_residual, Resolvent, SamplingPlan,
};
use crate::spectral::{eigendecompose, eigenvalues_only, localization_length, mean_spacing_ratio, median, sup_norm_sq};
use crate::VarianceProfile;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

pub const LOCALIZATION_COLUMNS: [&str; 8] =
    ["alpha", "W", "N", "seed", "median_loc_len", "median_sup_norm_sq", "max_sup_norm_sq", "bulk_count"];
pub const LOCALLAW_COLUMNS: [&str; 8] = ["alpha", "W", "N", "seed", "E", "eta", "entrywise", "averaged"];
pub const DIFFUSION_COLUMNS: [&str; 14] = [
    "alpha", "W", "N", "seed", "E", "eta", "loop_max", "loop_mean", "loop_p99", "loop_normalizer", "t_max", "t_mean", "t_p99",
    "t_normalizer",
];
pub const UNIVERSALITY_COLUMNS: [&str; 7] = ["ensemble", "alpha", "W", "N", "seed", "mean_r", "count"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationScanRow {
    pub alpha: f64,
    #[serde(rename = "W")]
    pub w: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub median_loc_len: f64,
    pub median_sup_norm_sq: f64,
    pub max_sup_norm_sq: f64,
    pub bulk_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalLawRow {
    pub alpha: f64,
    #[serde(rename = "W")]
    pub w: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    #[serde(rename = "E")]
    pub energy: f64,
    pub eta: f64,
    /// `max |G_xy - m delta_xy|^2 / B(eta, |x-y|)`.
    pub entrywise: f64,
    /// `max_x |<(G - m) S^(x)>| / B(eta, 0)`.
    pub averaged: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionRow {
    pub alpha: f64,
    #[serde(rename = "W")]
    pub w: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    #[serde(rename = "E")]
    pub energy: f64,
    pub eta: f64,
    pub loop_max: f64,
    pub loop_mean: f64,
    pub loop_p99: f64,
    pub loop_normalizer: String,
    pub t_max: f64,
    pub t_mean: f64,
    pub t_p99: f64,
    pub t_normalizer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversalityRow {
    /// `prbm` or `gue`; GUE rows leave `alpha` and `W` empty.
    pub ensemble: String,
    pub alpha: Option<f64>,
    #[serde(rename = "W")]
    pub w: Option<f64>,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub mean_r: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: u32,
    /// Empty for the GUE reference.
    pub alpha: Option<f64>,
    #[serde(rename = "W")]
    pub w: Option<f64>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanOutcome<R> {
    pub rows: Vec<R>,
    pub failures: Vec<CellFailure>,
}

/// Runs `replica` for every `(cell, replica)` pair; a cell fails as a whole when its profile
/// or any replica errors, and its rows are dropped.
fn run_cells<R, F>(config: &ExperimentConfig, replica: F) -> ScanOutcome<R>
where
    R: Send,
    F: Fn(&VarianceProfile, f64, f64, RngStream) -> Result<Vec<R>> + Sync,
{
    let cells = config.cells();
    let profiles: Vec<Result<VarianceProfile>> = cells.iter().map(|&(a, w)| config.profile_for(a, w)).collect();
    let jobs: Vec<(usize, u32)> = (0..cells.len()).flat_map(|c| (0..config.replicas).map(move |r| (c, r))).collect();
    let results: Vec<Result<Vec<R>>> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let profile = profiles[c].as_ref().map_err(|e| PrbmError::Config(e.to_string()))?;
            let (alpha, w) = cells[c];
            replica(profile, alpha, w, RngStream::for_cell(config.root_seed, c as u32, r))
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut it = results.into_iter();
    for (c, &(alpha, w)) in cells.iter().enumerate() {
        let mut cell_rows = Vec::new();
        let mut error = None;
        for res in it.by_ref().take(config.replicas as usize) {
            match res {
                Ok(v) => cell_rows.extend(v),
                Err(e) => {
                    error.get_or_insert(e.to_string());
                }
            }
        }
        match error {
            None => rows.extend(cell_rows),
            Some(error) => failures.push(CellFailure { cell: c as u32, alpha: Some(alpha), w: Some(w), error }),
        }
    }
    ScanOutcome { rows, failures }
}

pub fn run_localization_scan(config: &ExperimentConfig) -> ScanOutcome<LocalizationScanRow> {
    run_cells(config, |profile, alpha, w, seed| {
        let h = sample_prbm(profile, seed);
        let decomp = eigendecompose(&h.matrix)?;
        let bulk = decomp.bulk_indices(config.kappa);
        if bulk.is_empty() {
            return Err(PrbmError::TooFewEigenvalues { got: 0, need: 1 });
        }
        let mut lens = Vec::with_capacity(bulk.len());
        let mut sups = Vec::with_capacity(bulk.len());
        for &k in &bulk {
            let psi = decomp.eigenvector(k);
            lens.push(localization_length(&psi, config.mass)? as f64);
            sups.push(sup_norm_sq(&psi));
        }
        let max_sup = sups.iter().cloned().fold(0.0, f64::max);
        Ok(vec![LocalizationScanRow {
            alpha,
            w,
            n: profile.size,
            seed: seed.stream,
            median_loc_len: median(&mut lens),
            median_sup_norm_sq: median(&mut sups),
            max_sup_norm_sq: max_sup,
            bulk_count: bulk.len(),
        }])
    })
}

pub fn run_local_law_scan(config: &ExperimentConfig) -> ScanOutcome<LocalLawRow> {
    let grid = config.z_grid();
    run_cells(config, |profile, alpha, w, seed| {
        let h = sample_prbm(profile, seed);
        let decomp = eigendecompose(&h.matrix)?;
        let shape = ShapeParams::from_profile(profile);
        grid.iter()
            .map(|&(e, eta)| {
                let z = Complex64::new(e, eta);
                let res = Resolvent::from_decomposition(&decomp, z)?;
                let m = m_sc(z);
                Ok(LocalLawRow {
                    alpha,
                    w,
                    n: profile.size,
                    seed: seed.stream,
                    energy: e,
                    eta,
                    entrywise: entrywise_local_law_residual(&res, m, &shape, eta)?.value,
                    averaged: averaged_local_law_residual(&res, profile, m, &shape, eta)?.value,
                })
            })
            .collect()
    })
}

pub fn run_diffusion_scan(config: &ExperimentConfig) -> ScanOutcome<DiffusionRow> {
    let grid = config.z_grid();
    run_cells(config, |profile, alpha, w, seed| {
        let h = sample_prbm(profile, seed);
        let decomp = eigendecompose(&h.matrix)?;
        grid.iter()
            .enumerate()
            .map(|(i, &(e, eta))| {
                let res = Resolvent::from_decomposition(&decomp, Complex64::new(e, eta))?;
                let plan = SamplingPlan { random_points: config.sample_points, lattice_step: None, seed: seed.stream ^ ((i as u64) << 48) };
                let rep = diffusion_residual(&res, profile, &plan, false)?;
                Ok(DiffusionRow {
                    alpha,
                    w,
                    n: profile.size,
                    seed: seed.stream,
                    energy: e,
                    eta,
                    loop_max: rep.loop_stats.max,
                    loop_mean: rep.loop_stats.mean,
                    loop_p99: rep.loop_stats.p99,
                    loop_normalizer: rep.loop_normalizer.as_str().into(),
                    t_max: rep.t_stats.max,
                    t_mean: rep.t_stats.mean,
                    t_p99: rep.t_stats.p99,
                    t_normalizer: rep.t_normalizer.as_str().into(),
                })
            })
            .collect()
    })
}

/// PRBM rows for every cell followed by GUE reference rows at the same `N`. The GUE
/// replicas use cell index `cells.len()`, so their streams are disjoint from the cells.
pub fn run_universality_scan(config: &ExperimentConfig) -> ScanOutcome<UniversalityRow> {
    let mut out = run_cells(config, |profile, alpha, w, seed| {
        let eig = eigenvalues_only(&sample_prbm(profile, seed).matrix)?;
        let bulk = eig.iter().filter(|l| l.abs() <= 2.0 - config.kappa).count();
        Ok(vec![UniversalityRow {
            ensemble: "prbm".into(),
            alpha: Some(alpha),
            w: Some(w),
            n: profile.size,
            seed: seed.stream,
            mean_r: mean_spacing_ratio(&eig, config.kappa)?,
            count: bulk.saturating_sub(2),
        }])
    });
    let gue_cell = config.cells().len() as u32;
    let gue: Result<Vec<UniversalityRow>> = (0..config.replicas)
        .into_par_iter()
        .map(|r| {
            let seed = RngStream::for_cell(config.root_seed, gue_cell, r);
            let eig = eigenvalues_only(&sample_gue(config.n, seed)?.matrix)?;
            let bulk = eig.iter().filter(|l| l.abs() <= 2.0 - config.kappa).count();
            Ok(UniversalityRow {
                ensemble: "gue".into(),
                alpha: None,
                w: None,
                n: config.n,
                seed: seed.stream,
                mean_r: mean_spacing_ratio(&eig, config.kappa)?,
                count: bulk.saturating_sub(2),
            })
        })
        .collect();
    match gue {
        Ok(rows) => out.rows.extend(rows),
        Err(e) => out.failures.push(CellFailure { cell: gue_cell, alpha: None, w: None, error: e.to_string() }),
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversalitySummary {
    pub alpha: f64,
    #[serde(rename = "W")]
    pub w: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub mean_r: f64,
    pub gue_mean_r: f64,
    pub delta: f64,
}

/// Mean over replicas of the per-replica mean ratio, per cell, against the GUE rows.
pub fn universality_summary(rows: &[UniversalityRow]) -> Vec<UniversalitySummary> {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let gue: Vec<f64> = rows.iter().filter(|r| r.ensemble == "gue").map(|r| r.mean_r).collect();
    let gue_mean = if gue.is_empty() { f64::NAN } else { mean(&gue) };
    let mut cells: Vec<(f64, f64, usize)> = Vec::new();
    for r in rows.iter().filter(|r| r.ensemble == "prbm") {
        let key = (r.alpha.unwrap_or(f64::NAN), r.w.unwrap_or(f64::NAN), r.n);
        if !cells.contains(&key) {
            cells.push(key);
        }
    }
    cells
        .into_iter()
        .map(|(alpha, w, n)| {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.ensemble == "prbm" && r.alpha == Some(alpha) && r.w == Some(w))
                .map(|r| r.mean_r)
                .collect();
            let m = mean(&v);
            UniversalitySummary { alpha, w, n, mean_r: m, gue_mean_r: gue_mean, delta: m - gue_mean }
        })
        .collect()
}

pub fn write_rows<R: Serialize, W: Write>(rows: &[R], columns: &[&str], w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(columns)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_rows<R: for<'de> Deserialize<'de>, Rd: std::io::Read>(r: Rd) -> Result<Vec<R>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize().map(|row| row.map_err(PrbmError::from)).collect()
}

/// Name of the scan CSV and its column contract.
pub fn scan_output(kind: ScanKind) -> (&'static str, &'static [&'static str]) {
    match kind {
        ScanKind::Localization => ("localization.csv", &LOCALIZATION_COLUMNS),
        ScanKind::Locallaw => ("locallaw.csv", &LOCALLAW_COLUMNS),
        ScanKind::Diffusion => ("diffusion.csv", &DIFFUSION_COLUMNS),
        ScanKind::Universality => ("universality.csv", &UNIVERSALITY_COLUMNS),
    }
}
