//! Batch scans over `(alpha, W)` cells, exponent fits and the command line.

mod cli;
mod config;
mod fit;
mod scans;

pub use cli::cli_main;
pub use config::{ExperimentConfig, ScanKind};
pub use fit::{fit_exponent, ols, ExponentFit, BOOTSTRAP_RESAMPLES};
pub use scans::{
    read_rows, run_diffusion_scan, run_local_law_scan, run_localization_scan, run_universality_scan, scan_output,
    universality_summary, write_rows, CellFailure, DiffusionRow, LocalLawRow, LocalizationScanRow, ScanOutcome,
    UniversalityRow, UniversalitySummary, DIFFUSION_COLUMNS, LOCALIZATION_COLUMNS, LOCALLAW_COLUMNS, UNIVERSALITY_COLUMNS,
};

use crate::ensemble::RNG_ALGORITHM;
use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment_id: String,
    pub kind: ScanKind,
    pub config_hash: String,
    pub code_version: String,
    pub rng: String,
    pub started: String,
    pub finished: String,
    pub cells_failed: Vec<CellFailure>,
    /// Column contract of every CSV written by the scan.
    pub columns: BTreeMap<String, Vec<String>>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn write_csv<R: Serialize>(dir: &Path, name: &str, columns: &[&str], rows: &[R]) -> Result<()> {
    write_rows(rows, columns, BufWriter::new(File::create(dir.join(name))?))
}

/// Runs the scan described by `config`, writes its CSV files and `manifest.json` into
/// `out_dir` and returns the manifest.
pub fn run_scan_to_dir(config: &ExperimentConfig, out_dir: &Path) -> Result<Manifest> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let started = now();
    let (name, cols) = scan_output(config.kind);
    let mut columns = BTreeMap::from([(name.to_string(), cols.iter().map(|c| c.to_string()).collect())]);
    let failures = match config.kind {
        ScanKind::Localization => {
            let out = run_localization_scan(config);
            write_csv(out_dir, name, cols, &out.rows)?;
            out.failures
        }
        ScanKind::Locallaw => {
            let out = run_local_law_scan(config);
            write_csv(out_dir, name, cols, &out.rows)?;
            out.failures
        }
        ScanKind::Diffusion => {
            let out = run_diffusion_scan(config);
            write_csv(out_dir, name, cols, &out.rows)?;
            out.failures
        }
        ScanKind::Universality => {
            let out = run_universality_scan(config);
            write_csv(out_dir, name, cols, &out.rows)?;
            let summary_cols = ["alpha", "W", "N", "mean_r", "gue_mean_r", "delta"];
            write_csv(out_dir, "universality_summary.csv", &summary_cols, &universality_summary(&out.rows))?;
            columns.insert("universality_summary.csv".into(), summary_cols.iter().map(|c| c.to_string()).collect());
            out.failures
        }
    };
    let manifest = Manifest {
        experiment_id: config.experiment_id.clone(),
        kind: config.kind,
        config_hash: config.hash()?,
        code_version: CODE_VERSION.into(),
        rng: RNG_ALGORITHM.into(),
        started,
        finished: now(),
        cells_failed: failures,
        columns,
    };
    std::fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}
