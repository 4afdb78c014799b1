//! Run configuration: an optional JSON file whose values are overridden by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use youla_lqg::lqg::example_controller;
use youla_lqg::{DynController, LqgPlant};

use crate::error::{CliError, CliResult};

/// Every parameter a command may read from the config file. Unknown keys are rejected.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub plant: Option<PathBuf>,
    pub controller: Option<PathBuf>,
    pub order: Option<usize>,
    pub eta: Option<f64>,
    pub pg_eta: Option<f64>,
    pub iters: Option<usize>,
    pub trunc_tol: Option<f64>,
    pub tol_markov: Option<f64>,
    pub save_controller: Option<PathBuf>,
    pub mode: Option<String>,
    pub grid_lo: Option<f64>,
    pub grid_hi: Option<f64>,
    pub points: Option<usize>,
    pub log_grid: Option<bool>,
    pub max_den: Option<usize>,
    pub laguerre_order: Option<usize>,
    pub pole: Option<f64>,
    pub c_step: Option<f64>,
    pub samples: Option<usize>,
    pub sample_sizes: Option<Vec<usize>>,
    pub seeds: Option<usize>,
    pub radius: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => read_json(p),
        }
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

/// Flag first, then file, then default.
pub fn pick<T: Clone>(flag: Option<T>, file: &Option<T>, default: T) -> T {
    flag.or_else(|| file.clone()).unwrap_or(default)
}

pub fn pick_opt<T: Clone>(flag: Option<T>, file: &Option<T>) -> Option<T> {
    flag.or_else(|| file.clone())
}

pub fn load_plant(path: Option<&Path>) -> CliResult<LqgPlant> {
    match path {
        None => Ok(LqgPlant::example1()),
        Some(p) => read_json(p),
    }
}

pub fn load_controller(path: &Path) -> CliResult<DynController> {
    read_json(path)
}

/// Controller from `path`, or the two-state starting point `A_K = −0.5I`, `B_K = [0; 1]`,
/// `C_K = [0, −1]` used by the estimation experiments.
pub fn load_controller_or_default(path: Option<&Path>) -> CliResult<DynController> {
    match path {
        None => Ok(example_controller(-0.5, 1.0, -1.0)),
        Some(p) => load_controller(p),
    }
}

pub fn positive(name: &'static str, v: f64) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::param(name, format!("must be positive and finite, got {v}")))
    }
}

pub fn in_range<T: PartialOrd + std::fmt::Display + Copy>(name: &'static str, v: T, lo: T, hi: T) -> CliResult<T> {
    if v >= lo && v <= hi {
        Ok(v)
    } else {
        Err(CliError::param(name, format!("must lie in [{lo}, {hi}], got {v}")))
    }
}

/// Frequency grid bounds and size.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub log: bool,
}

impl GridSpec {
    pub fn validate(self) -> CliResult<Self> {
        positive("grid-lo", self.lo)?;
        positive("grid-hi", self.hi)?;
        if self.hi <= self.lo {
            return Err(CliError::param("grid-hi", format!("must exceed grid-lo ({} ≤ {})", self.hi, self.lo)));
        }
        in_range("points", self.points, 2, 100_000)?;
        Ok(self)
    }

    pub fn build(&self) -> CliResult<Vec<f64>> {
        Ok(youla_lqg::sysid::frequency_grid(self.lo, self.hi, self.points, self.log)?)
    }
}
