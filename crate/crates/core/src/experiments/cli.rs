use super::config::ExperimentConfig;
use super::fit::fit_exponent;
use super::run_scan_to_dir;
use super::scans::{read_rows, LocalizationScanRow};
use crate::deterministic::{certify_doubling, m_sc, Charge, CertifyOptions, ShapeParams};
use crate::ensemble::{sample_gue, sample_prbm, write_dump, RngStream};
use crate::error::{PrbmError, Result};
use crate::flow_sim::{
    default_checkpoints, default_specs, distributional_check, simulate_flow, track_observables, write_track_csv,
    DistributionalOptions,
};
use crate::kloop_calculus::{kloop_ward_check, tree_bound_doubling, write_k_report};
use crate::profile::ProfileKind;
use crate::resolvent_observables::{
    averaged_local_law_residual, diffusion_residual, entrywise_local_law_residual, Resolvent, SamplingPlan,
};
use crate::spectral::{
    eigendecompose, eigenvalues_only, ks_distance_semicircle, localization_report, mean_spacing_ratio,
    write_localization_csv,
};
use crate::VarianceProfile;
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(name = "prbm", version, about = "Power-law random band matrix experiments")]
struct Cli {
    /// Experiment config (JSON), used by `scan`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file, or output directory for `scan`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct ProfileArgs {
    #[arg(long, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long = "W")]
    w: f64,
    #[arg(long = "N")]
    n: usize,
    /// `power_law`, `student_t(nu)` or `cauchy`.
    #[arg(long, default_value = "power_law")]
    kind: String,
}

impl ProfileArgs {
    fn build(&self) -> Result<VarianceProfile> {
        match ProfileKind::parse(&self.kind)? {
            ProfileKind::PowerLaw => VarianceProfile::power_law(self.alpha, self.w, self.n),
            ProfileKind::ProfileFunction(d) => VarianceProfile::profile_function(d, self.w, self.n),
            ProfileKind::Custom => Err(PrbmError::InvalidParameter("custom profiles need a kernel file".into())),
        }
    }
}

#[derive(Args, Debug, Clone)]
struct SpectralPoint {
    #[arg(long = "E", allow_hyphen_values = true)]
    energy: f64,
    #[arg(long)]
    eta: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Variance profile as JSON.
    Profile(ProfileArgs),
    /// One sample written as a binary dump (`--out` required).
    Sample {
        #[command(flatten)]
        p: ProfileArgs,
        #[arg(long)]
        gue: bool,
    },
    /// Eigenvalues of one sample as CSV.
    Spectrum {
        #[command(flatten)]
        p: ProfileArgs,
        #[arg(long, default_value_t = 0.1)]
        kappa: f64,
    },
    /// Per-eigenvector localization lengths of one sample as CSV.
    Localization {
        #[command(flatten)]
        p: ProfileArgs,
        #[arg(long, default_value_t = 0.1)]
        kappa: f64,
        #[arg(long, default_value_t = 0.5)]
        mass: f64,
    },
    /// Normalized local law residuals of one sample as JSON.
    Locallaw {
        #[command(flatten)]
        p: ProfileArgs,
        #[command(flatten)]
        z: SpectralPoint,
    },
    /// Normalized quantum diffusion residuals of one sample as JSON.
    Diffusion {
        #[command(flatten)]
        p: ProfileArgs,
        #[command(flatten)]
        z: SpectralPoint,
        #[arg(long, default_value_t = 512)]
        points: usize,
    },
    /// Loop Ward residual (JSON) and tree-bound report at N and 2N (CSV to `--out`).
    Kloops {
        #[command(flatten)]
        p: ProfileArgs,
        #[arg(long = "E", allow_hyphen_values = true)]
        energy: f64,
        #[arg(long)]
        t: f64,
        /// Charges, e.g. `+-+`.
        #[arg(long, allow_hyphen_values = true)]
        sigma: String,
    },
    /// Flow observables as CSV, or the distributional check as JSON when a target is given.
    Flow {
        #[command(flatten)]
        p: ProfileArgs,
        #[arg(long = "E", allow_hyphen_values = true, default_value_t = 0.0)]
        energy: f64,
        #[arg(long, default_value_t = 6)]
        levels: usize,
        #[arg(long, default_value_t = 0.99)]
        t_max: f64,
        #[arg(long, allow_hyphen_values = true, requires = "target_im")]
        target_re: Option<f64>,
        #[arg(long, requires = "target_re")]
        target_im: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        replicas: usize,
    },
    /// Scan described by `--config`, written into `--out`.
    Scan,
    /// Exponent fit of a localization scan CSV as JSON.
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
    },
    /// Assumption bound certification at N and 2N as CSV.
    Certify(ProfileArgs),
}

fn output(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn parse_charges(s: &str) -> Result<Vec<Charge>> {
    s.chars()
        .map(|c| match c {
            '+' => Ok(Charge::Plus),
            '-' | '−' => Ok(Charge::Minus),
            other => Err(PrbmError::InvalidParameter(format!("charge {other:?} is not + or -"))),
        })
        .collect()
}

fn run(cli: Cli) -> Result<i32> {
    if let Some(k) = cli.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    if cli.config.is_some() && !matches!(cli.command, Command::Scan) {
        return Err(PrbmError::Config("--config is only read by `scan`".into()));
    }
    let seed = RngStream::new(cli.seed.unwrap_or(0), 0);
    match cli.command {
        Command::Profile(p) => {
            let text = p.build()?.to_json()?;
            let mut w = output(&cli.out)?;
            writeln!(w, "{text}")?;
        }
        Command::Sample { p, gue } => {
            let path = cli.out.ok_or_else(|| PrbmError::Config("`sample` needs --out".into()))?;
            let h = if gue { sample_gue(p.n, seed)? } else { sample_prbm(&p.build()?, seed) };
            write_dump(&h.matrix, BufWriter::new(File::create(&path)?))?;
            print_json(&serde_json::json!({ "N": p.n, "profile": h.profile_id, "root_seed": seed.root_seed, "stream": seed.stream }))?;
        }
        Command::Spectrum { p, kappa } => {
            let eig = eigenvalues_only(&sample_prbm(&p.build()?, seed).matrix)?;
            let mut w = csv::Writer::from_writer(output(&cli.out)?);
            w.write_record(["k", "lambda"])?;
            for (k, l) in eig.iter().enumerate() {
                w.serialize((k, l))?;
            }
            w.flush()?;
            let summary = serde_json::json!({ "ks_distance": ks_distance_semicircle(&eig), "mean_spacing_ratio": mean_spacing_ratio(&eig, kappa).ok() });
            eprintln!("{summary}");
        }
        Command::Localization { p, kappa, mass } => {
            let decomp = eigendecompose(&sample_prbm(&p.build()?, seed).matrix)?;
            let rows = localization_report(&decomp, seed.stream, kappa, mass)?;
            write_localization_csv(&rows, output(&cli.out)?)?;
        }
        Command::Locallaw { p, z } => {
            let profile = p.build()?;
            let zc = Complex64::new(z.energy, z.eta);
            let res = Resolvent::from_matrix(&sample_prbm(&profile, seed).matrix, zc)?;
            let shape = ShapeParams::from_profile(&profile);
            let m = m_sc(zc);
            let e = entrywise_local_law_residual(&res, m, &shape, z.eta)?;
            let a = averaged_local_law_residual(&res, &profile, m, &shape, z.eta)?;
            print_json(&serde_json::json!({ "entrywise": e.value, "entrywise_at": [e.x, e.y], "averaged": a.value, "averaged_at": a.x }))?;
        }
        Command::Diffusion { p, z, points } => {
            let profile = p.build()?;
            let res = Resolvent::from_matrix(&sample_prbm(&profile, seed).matrix, Complex64::new(z.energy, z.eta))?;
            let plan = SamplingPlan { random_points: points, lattice_step: None, seed: seed.root_seed };
            print_json(&diffusion_residual(&res, &profile, &plan, false)?)?;
        }
        Command::Kloops { p, energy, t, sigma } => {
            let sigma = parse_charges(&sigma)?;
            let profile = p.build()?;
            let ward = if sigma.len() >= 2 && sigma[0] != sigma[sigma.len() - 1] {
                Some(kloop_ward_check(&profile, energy, t, &sigma)?)
            } else {
                None
            };
            let doubled = ProfileArgs { n: 2 * p.n, ..p.clone() }.build()?;
            let rows = tree_bound_doubling(&profile, &doubled, energy, t, &sigma)?;
            if let Some(path) = &cli.out {
                write_k_report(&rows, BufWriter::new(File::create(path)?))?;
            }
            print_json(&serde_json::json!({ "ward_residual": ward, "tree_bound": rows }))?;
        }
        Command::Flow { p, energy, levels, t_max, target_re, target_im, replicas } => {
            let profile = p.build()?;
            match (target_re, target_im) {
                (Some(re), Some(im)) => {
                    let opts = DistributionalOptions { replicas, root_seed: seed.root_seed, ..Default::default() };
                    let report = distributional_check(&profile, Complex64::new(re, im), &opts)?;
                    let mut w = output(&cli.out)?;
                    writeln!(w, "{}", report.to_json()?)?;
                }
                _ => {
                    let run = simulate_flow(&profile, energy, &default_checkpoints(t_max, levels), seed)?;
                    let rows = track_observables(&run, &profile, &default_specs(profile.size))?;
                    write_track_csv(&rows, output(&cli.out)?)?;
                }
            }
        }
        Command::Scan => {
            let path = cli.config.ok_or_else(|| PrbmError::Config("`scan` needs --config".into()))?;
            let mut cfg = ExperimentConfig::load(&path)?;
            if let Some(s) = cli.seed {
                cfg.root_seed = s;
            }
            if let Some(o) = cli.out {
                cfg.output = Some(o);
            }
            let dir = cfg.output.clone().ok_or_else(|| PrbmError::Config("no output directory (--out or \"output\")".into()))?;
            let manifest = run_scan_to_dir(&cfg, Path::new(&dir))?;
            if !manifest.cells_failed.is_empty() {
                eprintln!("{} cell(s) failed", manifest.cells_failed.len());
                return Ok(1);
            }
        }
        Command::Fit { input, alpha } => {
            let rows: Vec<LocalizationScanRow> = read_rows(File::open(&input).map_err(|e| PrbmError::Config(format!("{}: {e}", input.display())))?)?;
            print_json(&fit_exponent(&rows, alpha, seed.root_seed)?)?;
        }
        Command::Certify(p) => {
            let small = p.build()?;
            let large = ProfileArgs { n: 2 * p.n, ..p }.build()?;
            certify_doubling(&small, &large, &CertifyOptions::default())?.write_csv(output(&cli.out)?)?;
        }
    }
    Ok(0)
}

/// Entry point of the `prbm` binary: 0 on success, 1 on runtime or partial cell failure,
/// 2 on usage or configuration errors.
pub fn cli_main(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                PrbmError::Config(_) | PrbmError::InvalidParameter(_) => 2,
                _ => 1,
            }
        }
    }
}
