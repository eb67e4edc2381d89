use crate::error::{PrbmError, Result};
use crate::profile::ProfileKind;
use crate::VarianceProfile;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanKind {
    Localization,
    Locallaw,
    Diffusion,
    Universality,
}

impl ScanKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScanKind::Localization => "localization",
            ScanKind::Locallaw => "locallaw",
            ScanKind::Diffusion => "diffusion",
            ScanKind::Universality => "universality",
        }
    }

    fn needs_z_grid(self) -> bool {
        matches!(self, ScanKind::Locallaw | ScanKind::Diffusion)
    }
}

fn default_kappa() -> f64 {
    0.1
}

fn default_mass() -> f64 {
    0.5
}

fn default_profile() -> String {
    "power_law".into()
}

fn default_sample_points() -> usize {
    512
}

/// Scan description read from JSON. Cells are the pairs `(alpha, W)` in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub kind: ScanKind,
    pub alpha: Vec<f64>,
    #[serde(rename = "W")]
    pub w: Vec<f64>,
    #[serde(rename = "N")]
    pub n: usize,
    pub replicas: u32,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Spectral scales; used by `locallaw` and `diffusion`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<f64>>,
    /// Real parts of the spectral parameters; used by `locallaw` and `diffusion`.
    #[serde(default, rename = "E", skip_serializing_if = "Option::is_none")]
    pub energy: Option<Vec<f64>>,
    #[serde(default = "default_mass")]
    pub mass: f64,
    pub root_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Profile kind label, `power_law`, `student_t(nu)` or `cauchy`. The `alpha` list is
    /// ignored by the profile-function kinds except as a row label.
    #[serde(default = "default_profile")]
    pub profile: String,
    /// Random `(x, y, sigma)` points per spectral parameter in the diffusion scan.
    #[serde(default = "default_sample_points")]
    pub sample_points: usize,
}

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(PrbmError::Config(msg.into()))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| PrbmError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PrbmError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiment_id.is_empty() {
            return config_err("experiment_id is empty");
        }
        if self.alpha.is_empty() || self.w.is_empty() {
            return config_err("alpha and W lists must be non-empty");
        }
        if self.n < 4 {
            return config_err(format!("N = {} is too small", self.n));
        }
        if let Some(w) = self.w.iter().find(|&&w| !(w > 0.0 && w <= self.n as f64 / 2.0)) {
            return config_err(format!("W = {w} must lie in (0, N/2] with N = {}", self.n));
        }
        if self.alpha.iter().any(|a| !a.is_finite()) {
            return config_err("alpha values must be finite");
        }
        if self.replicas < 1 {
            return config_err("replicas must be at least 1");
        }
        if !(self.kappa > 0.0 && self.kappa < 2.0) {
            return config_err(format!("kappa = {} must lie in (0, 2)", self.kappa));
        }
        if !(self.mass > 0.0 && self.mass <= 1.0) {
            return config_err(format!("mass = {} must lie in (0, 1]", self.mass));
        }
        for (name, grid) in [("eta", &self.eta), ("E", &self.energy)] {
            match grid {
                Some(g) if g.is_empty() => return config_err(format!("{name} grid is empty")),
                None if self.kind.needs_z_grid() => {
                    return config_err(format!("{} scan needs a {name} grid", self.kind.as_str()))
                }
                _ => {}
            }
        }
        if let Some(eta) = &self.eta {
            if eta.iter().any(|&e| !(e > 0.0)) {
                return config_err("eta values must be positive");
            }
        }
        if let Some(es) = &self.energy {
            if es.iter().any(|e| !(e.abs() < 2.0)) {
                return config_err("E values must lie in the bulk (-2, 2)");
            }
        }
        if self.kind == ScanKind::Diffusion && self.sample_points == 0 {
            return config_err("sample_points must be positive");
        }
        ProfileKind::parse(&self.profile).map_err(|e| PrbmError::Config(e.to_string()))?;
        if self.cells().len() > u32::MAX as usize {
            return config_err("too many cells");
        }
        Ok(())
    }

    /// `(alpha, W)` in deterministic order.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.alpha.iter().flat_map(|&a| self.w.iter().map(move |&w| (a, w))).collect()
    }

    pub fn profile_for(&self, alpha: f64, w: f64) -> Result<VarianceProfile> {
        match ProfileKind::parse(&self.profile)? {
            ProfileKind::PowerLaw => VarianceProfile::power_law(alpha, w, self.n),
            ProfileKind::ProfileFunction(d) => VarianceProfile::profile_function(d, w, self.n),
            ProfileKind::Custom => config_err("custom profiles cannot be scanned"),
        }
    }

    /// `(E, eta)` pairs, energies outermost.
    pub fn z_grid(&self) -> Vec<(f64, f64)> {
        let es = self.energy.clone().unwrap_or_default();
        let etas = self.eta.clone().unwrap_or_default();
        es.iter().flat_map(|&e| etas.iter().map(move |&eta| (e, eta))).collect()
    }

    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.canonical_json()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}
