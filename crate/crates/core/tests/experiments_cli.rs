use prbm::ensemble::RngStream;
use prbm::experiments::*;
use rand::Rng;
use rand_distr::StandardNormal;
use std::collections::HashSet;
use std::process::Command;

fn base_config(kind: &str) -> serde_json::Value {
    serde_json::json!({
        "experiment_id": "t",
        "kind": kind,
        "alpha": [2.0],
        "W": [2.0, 4.0],
        "N": 64,
        "replicas": 2,
        "root_seed": 5,
        "E": [0.0, 0.5],
        "eta": [0.5]
    })
}

fn config(v: serde_json::Value) -> prbm::Result<ExperimentConfig> {
    ExperimentConfig::from_json(&v.to_string())
}

#[test]
fn config_rejections() {
    assert!(config(base_config("localization")).is_ok());
    let mut v = base_config("localization");
    v["W"] = serde_json::json!([40.0]);
    assert!(config(v).is_err());
    let mut v = base_config("locallaw");
    v["eta"] = serde_json::json!([]);
    assert!(config(v).is_err());
    let mut v = base_config("diffusion");
    v.as_object_mut().unwrap().remove("E");
    assert!(config(v).is_err());
    let mut v = base_config("localization");
    v["replicas"] = serde_json::json!(0);
    assert!(config(v).is_err());
    let mut v = base_config("localization");
    v["extra"] = serde_json::json!(1);
    assert!(config(v).is_err());
    let mut v = base_config("localization");
    v["alpha"] = serde_json::json!([]);
    assert!(config(v).is_err());
    let mut v = base_config("localization");
    v["kind"] = serde_json::json!("nonsense");
    assert!(config(v).is_err());
    let cfg = config(base_config("localization")).unwrap();
    assert_eq!(cfg.kappa, 0.1);
    assert_eq!(cfg.mass, 0.5);
    assert_eq!(cfg.hash().unwrap(), config(base_config("localization")).unwrap().hash().unwrap());
    assert_eq!(cfg.hash().unwrap().len(), 64);
}

fn synthetic_rows(exponent: f64, noise: f64, reps: u64, ws: &[f64], n: usize) -> Vec<LocalizationScanRow> {
    let mut rng = RngStream::new(99, 0).rng();
    let mut rows = Vec::new();
    for &w in ws {
        for r in 0..reps {
            let g: f64 = rng.sample(StandardNormal);
            rows.push(LocalizationScanRow {
                alpha: 3.0,
                w,
                n,
                seed: r,
                median_loc_len: 0.7 * w.powf(exponent) * (noise * g).exp(),
                median_sup_norm_sq: 0.0,
                max_sup_norm_sq: 0.0,
                bulk_count: 1,
            });
        }
    }
    rows
}

#[test]
fn noiseless_fit_recovers_exponent() {
    let rows = synthetic_rows(2.0, 0.0, 5, &[4.0, 6.0, 8.0, 12.0], 1 << 20);
    let fit = fit_exponent(&rows, 3.0, 0).unwrap();
    assert!((fit.slope - 2.0).abs() < 1e-3);
    assert!((fit.intercept - 0.7f64.ln()).abs() < 1e-9);
    assert!((fit.r_squared - 1.0).abs() < 1e-12);
    assert!(fit.ci_low <= fit.slope && fit.slope <= fit.ci_high);
    assert_eq!(fit.points_used, 4);
}

#[test]
fn noisy_fit_interval_covers_exponent() {
    let rows = synthetic_rows(3.0, 0.1, 20, &[4.0, 6.0, 8.0, 10.0, 12.0], 1 << 20);
    let fit = fit_exponent(&rows, 3.0, 1).unwrap();
    assert!(fit.ci_low <= 3.0 && 3.0 <= fit.ci_high, "{fit:?}");
    assert!(fit.ci_high - fit.ci_low < 0.5);
}

#[test]
fn saturated_cells_are_dropped() {
    // 0.7 W^2 >= N/4 = 64 from W = 10 on
    let rows = synthetic_rows(2.0, 0.0, 3, &[4.0, 6.0, 8.0, 10.0, 12.0], 256);
    let fit = fit_exponent(&rows, 3.0, 0).unwrap();
    assert_eq!(fit.w, vec![4.0, 6.0, 8.0]);
    assert_eq!(fit.saturated, vec![10.0, 12.0]);
    let rows = synthetic_rows(2.0, 0.0, 3, &[4.0, 6.0, 10.0, 12.0], 256);
    assert!(fit_exponent(&rows, 3.0, 0).is_err());
    assert!(fit_exponent(&rows, 2.0, 0).is_err());
}

fn header(path: &std::path::Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn localization_scan_is_reproducible() {
    let cfg = config(base_config("localization")).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run_scan_to_dir(&cfg, a.path()).unwrap();
    let mb = run_scan_to_dir(&cfg, b.path()).unwrap();
    let body_a = std::fs::read(a.path().join("localization.csv")).unwrap();
    assert_eq!(body_a, std::fs::read(b.path().join("localization.csv")).unwrap());
    assert_eq!(ma.config_hash, mb.config_hash);
    assert!(ma.cells_failed.is_empty());
    assert_eq!(header(&a.path().join("localization.csv")), LOCALIZATION_COLUMNS.join(","));

    let rows: Vec<LocalizationScanRow> = read_rows(&body_a[..]).unwrap();
    assert_eq!(rows.len(), 4);
    let seeds: HashSet<u64> = rows.iter().map(|r| r.seed).collect();
    assert_eq!(seeds.len(), 4);
    assert!(rows.iter().all(|r| r.median_loc_len >= 0.0 && r.bulk_count > 0));

    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.path().join("manifest.json")).unwrap()).unwrap();
    for key in ["config_hash", "code_version", "started", "finished", "cells_failed", "columns"] {
        assert!(manifest.get(key).is_some(), "{key}");
    }
}

#[test]
fn local_law_and_diffusion_scans() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(base_config("locallaw")).unwrap();
    let out = run_local_law_scan(&cfg);
    assert!(out.failures.is_empty());
    assert_eq!(out.rows.len(), 2 * 2 * 2);
    run_scan_to_dir(&cfg, dir.path()).unwrap();
    assert_eq!(header(&dir.path().join("locallaw.csv")), LOCALLAW_COLUMNS.join(","));

    let mut v = base_config("diffusion");
    v["sample_points"] = serde_json::json!(16);
    let cfg = config(v).unwrap();
    let out = run_diffusion_scan(&cfg);
    assert_eq!(out.rows.len(), 8);
    assert!(out.rows.iter().all(|r| r.loop_normalizer == "loop_supercritical" && r.loop_max.is_finite()));
    run_scan_to_dir(&cfg, dir.path()).unwrap();
    assert_eq!(header(&dir.path().join("diffusion.csv")), DIFFUSION_COLUMNS.join(","));
}

#[test]
fn universality_scan_has_reference() {
    let mut v = base_config("universality");
    v["N"] = serde_json::json!(128);
    v["replicas"] = serde_json::json!(3);
    let cfg = config(v).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_scan_to_dir(&cfg, dir.path()).unwrap();
    assert_eq!(header(&dir.path().join("universality.csv")), UNIVERSALITY_COLUMNS.join(","));
    let rows: Vec<UniversalityRow> = read_rows(std::fs::File::open(dir.path().join("universality.csv")).unwrap()).unwrap();
    assert_eq!(rows.iter().filter(|r| r.ensemble == "gue").count(), 3);
    assert!(rows.iter().filter(|r| r.ensemble == "gue").all(|r| r.alpha.is_none()));
    let seeds: HashSet<u64> = rows.iter().map(|r| r.seed).collect();
    assert_eq!(seeds.len(), rows.len());
    let summary = universality_summary(&rows);
    assert_eq!(summary.len(), 2);
    assert!(summary.iter().all(|s| (s.delta - (s.mean_r - s.gue_mean_r)).abs() < 1e-15));
    assert_eq!(header(&dir.path().join("universality_summary.csv")), "alpha,W,N,mean_r,gue_mean_r,delta");
}

#[test]
fn failing_cell_is_reported() {
    // alpha < 0 is rejected when the profile is built, after validation
    let mut v = base_config("localization");
    v["alpha"] = serde_json::json!([-2.0, 2.0]);
    let cfg = config(v).unwrap();
    let out = run_localization_scan(&cfg);
    assert_eq!(out.failures.len(), 2);
    assert_eq!(out.rows.len(), 4);
}

fn prbm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_prbm"))
}

#[test]
fn cli_exit_codes() {
    let st = prbm().arg("nonsense").output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stderr).contains("Usage"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let mut v = base_config("localization");
    v["W"] = serde_json::json!([100.0]);
    std::fs::write(&bad, v.to_string()).unwrap();
    let st = prbm().args(["scan", "--config"]).arg(&bad).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(st.status.code(), Some(2));

    let mut v = base_config("localization");
    v["alpha"] = serde_json::json!([-2.0, 2.0]);
    let partial = dir.path().join("partial.json");
    std::fs::write(&partial, v.to_string()).unwrap();
    let st = prbm().args(["scan", "--config"]).arg(&partial).arg("--out").arg(dir.path().join("p")).output().unwrap();
    assert_eq!(st.status.code(), Some(1));

    let good = dir.path().join("good.json");
    std::fs::write(&good, base_config("localization").to_string()).unwrap();
    let out = dir.path().join("res");
    let st = prbm().args(["scan", "--threads", "1", "--seed", "9", "--config"]).arg(&good).arg("--out").arg(&out).output().unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(out.join("localization.csv").exists() && out.join("manifest.json").exists());

    // too few bandwidths for a fit
    let st = prbm().args(["fit", "--alpha", "2", "--in"]).arg(out.join("localization.csv")).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
}

#[test]
fn cli_fit_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scan.csv");
    let rows = synthetic_rows(2.0, 0.0, 3, &[4.0, 6.0, 8.0], 1 << 20);
    write_rows(&rows, &LOCALIZATION_COLUMNS, std::fs::File::create(&path).unwrap()).unwrap();
    let st = prbm().args(["fit", "--alpha", "3", "--in"]).arg(&path).output().unwrap();
    assert_eq!(st.status.code(), Some(0));
    let fit: ExponentFit = serde_json::from_slice(&st.stdout).unwrap();
    assert!((fit.slope - 2.0).abs() < 1e-3);
}

#[test]
fn cli_certify_and_profile() {
    let st = prbm().args(["certify", "--alpha", "1.5", "--W", "8", "--N", "64"]).output().unwrap();
    assert_eq!(st.status.code(), Some(0));
    let text = String::from_utf8(st.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "bound_id,t,fitted_C,N,stable_flag");

    let st = prbm().args(["profile", "--alpha", "2", "--W", "4", "--N", "32"]).output().unwrap();
    let p = prbm::VarianceProfile::from_json(std::str::from_utf8(&st.stdout).unwrap()).unwrap();
    assert_eq!(p, prbm::VarianceProfile::power_law(2.0, 4.0, 32).unwrap());

    let st = prbm().args(["profile", "--alpha", "2", "--W", "40", "--N", "32"]).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    let st = prbm().args(["kloops", "--alpha", "2", "--W", "2", "--N", "8", "--E", "0.1", "--t", "0.5", "--sigma", "+-"]).output().unwrap();
    assert_eq!(st.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&st.stdout).unwrap();
    assert!(v["ward_residual"].as_f64().unwrap() < 1e-9);
}
