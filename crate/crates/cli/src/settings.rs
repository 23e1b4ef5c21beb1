//! Resolved run parameters: command-line flags over an optional JSON config file over defaults.

use std::path::{Path, PathBuf};

use rmp_core::io::read_text;
use rmp_core::{AdmmConfig, IsingSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every field a config file may set. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub n: Option<usize>,
    pub delta: Option<f64>,
    pub h: Option<f64>,
    pub seed: Option<u64>,
    pub edge_sign_prob: Option<f64>,
    pub rho: Option<f64>,
    pub max_iter: Option<usize>,
    pub primal_tol: Option<f64>,
    pub objective_tol: Option<f64>,
    pub delta_grid: Option<Vec<f64>>,
    pub alpha_grid: Option<Vec<f64>>,
    pub samples: Option<usize>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read_text(path).map_err(|e| CliError::Usage(e.to_string()))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Fields set in `over` win.
    pub fn overlay(self, over: FileConfig) -> FileConfig {
        FileConfig {
            n: over.n.or(self.n),
            delta: over.delta.or(self.delta),
            h: over.h.or(self.h),
            seed: over.seed.or(self.seed),
            edge_sign_prob: over.edge_sign_prob.or(self.edge_sign_prob),
            rho: over.rho.or(self.rho),
            max_iter: over.max_iter.or(self.max_iter),
            primal_tol: over.primal_tol.or(self.primal_tol),
            objective_tol: over.objective_tol.or(self.objective_tol),
            delta_grid: over.delta_grid.or(self.delta_grid),
            alpha_grid: over.alpha_grid.or(self.alpha_grid),
            samples: over.samples.or(self.samples),
            out: over.out.or(self.out),
        }
    }
}

/// Defaults that differ between commands.
#[derive(Debug, Clone, Copy)]
pub struct Defaults {
    pub n: usize,
    pub delta: f64,
    pub h: f64,
    pub seed: u64,
    pub admm: AdmmParams,
}

/// Plain-data ADMM settings as written to metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmParams {
    pub rho: f64,
    pub max_iter: usize,
    pub primal_tol: f64,
    pub objective_tol: f64,
}

impl AdmmParams {
    pub fn config(&self) -> AdmmConfig<f64> {
        AdmmConfig {
            rho: self.rho,
            max_iter: self.max_iter,
            primal_tol: self.primal_tol,
            objective_tol: self.objective_tol,
            ..AdmmConfig::default()
        }
    }
}

impl Default for AdmmParams {
    fn default() -> Self {
        let c = AdmmConfig::<f64>::default();
        Self {
            rho: c.rho,
            max_iter: c.max_iter,
            primal_tol: c.primal_tol,
            objective_tol: c.objective_tol,
        }
    }
}

/// Sweeps need converged strategies, so they iterate longer and tighter.
pub const SWEEP_ADMM: AdmmParams = AdmmParams {
    rho: 1.0,
    max_iter: 5000,
    primal_tol: 1e-9,
    objective_tol: 1e-10,
};

pub const GEN_DEFAULTS: Defaults = Defaults {
    n: 93,
    delta: 1.0,
    h: 1.0,
    seed: 0,
    admm: AdmmParams {
        rho: 1.0,
        max_iter: 100,
        primal_tol: 1e-6,
        objective_tol: 1e-8,
    },
};

pub const SWEEP_DEFAULTS: Defaults = Defaults {
    admm: SWEEP_ADMM,
    ..GEN_DEFAULTS
};

impl FileConfig {
    pub fn ising(&self, d: &Defaults) -> Result<IsingSpec, CliError> {
        let mut spec = IsingSpec::new(
            self.n.unwrap_or(d.n),
            self.delta.unwrap_or(d.delta),
            self.h.unwrap_or(d.h),
            self.seed.unwrap_or(d.seed),
        );
        if let Some(p) = self.edge_sign_prob {
            spec.edge_sign_prob = p;
        }
        spec.check().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(spec)
    }

    pub fn admm(&self, d: &Defaults) -> Result<AdmmParams, CliError> {
        let p = AdmmParams {
            rho: self.rho.unwrap_or(d.admm.rho),
            max_iter: self.max_iter.unwrap_or(d.admm.max_iter),
            primal_tol: self.primal_tol.unwrap_or(d.admm.primal_tol),
            objective_tol: self.objective_tol.unwrap_or(d.admm.objective_tol),
        };
        p.config().check().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(p)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

/// Evenly spaced grid `start, start + step, ..., stop` with rounding noise removed.
pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| {
            let v = start + (stop - start) * k as f64 / (count - 1) as f64;
            (v * 1e12).round() / 1e12
        })
        .collect()
}

pub fn default_delta_grid() -> Vec<f64> {
    linspace(0.0, 2.0, 9)
}

pub fn default_alpha_grid() -> Vec<f64> {
    linspace(0.0, 1.0, 11)
}

pub const DEFAULT_SAMPLES: usize = 50;

/// Nonempty, finite, strictly ascending.
pub fn check_grid(name: &str, grid: &[f64], lo: f64, hi: f64) -> Result<(), CliError> {
    if grid.is_empty() {
        return Err(CliError::Usage(format!("{name} is empty")));
    }
    if grid.iter().any(|v| !(v.is_finite() && *v >= lo && *v <= hi)) {
        return Err(CliError::Usage(format!("{name} values must lie in [{lo}, {hi}]")));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Usage(format!("{name} must be strictly ascending")));
    }
    Ok(())
}

/// Everything an experiment run needs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub spec: IsingSpec,
    pub grid: Vec<f64>,
    pub samples_per_point: usize,
    pub admm: AdmmParams,
    pub output_dir: PathBuf,
}
