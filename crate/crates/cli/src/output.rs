//! Staged file emission and the experiment report.
//!
//! Commands stage every file in memory and write them only after all computation succeeded, so
//! a failing command leaves no partial output behind.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stage `bytes` at `path`; relative paths resolve against the output directory.
    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    pub fn json<T: Serialize>(&mut self, path: impl Into<PathBuf>, value: &T) -> CliResult<()> {
        let path = path.into();
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Write {
            path: path.clone(),
            detail: e.to_string(),
        })?;
        bytes.push(b'\n');
        self.add(path, bytes);
        Ok(())
    }

    pub fn csv<T: Serialize>(&mut self, path: impl Into<PathBuf>, rows: &[T]) -> CliResult<()> {
        let path = path.into();
        let err = |e: &dyn std::fmt::Display| CliError::Write {
            path: path.clone(),
            detail: e.to_string(),
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| err(&e))?;
        }
        let bytes = w.into_inner().map_err(|e| err(&e))?;
        self.add(path, bytes);
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(p, _)| p.display().to_string()).collect()
    }

    /// Write everything under `dir`, returning the paths written.
    pub fn commit(self, dir: &Path) -> CliResult<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| CliError::Write {
            path: dir.to_path_buf(),
            detail: e.to_string(),
        })?;
        let mut written = Vec::with_capacity(self.files.len());
        for (rel, bytes) in self.files {
            let path = if rel.is_absolute() { rel } else { dir.join(rel) };
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| CliError::Write {
                    path: parent.to_path_buf(),
                    detail: e.to_string(),
                })?;
            }
            fs::write(&path, bytes).map_err(|e| CliError::Write {
                path: path.clone(),
                detail: e.to_string(),
            })?;
            written.push(path);
        }
        Ok(written)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TableInfo {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Metadata, table schemas and pass/fail verdicts of one command run.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub wall_ms: f64,
    pub parameters: serde_json::Value,
    pub tables: Vec<TableInfo>,
    pub verdicts: Vec<Check>,
}

impl ExperimentReport {
    pub fn new(command: &str, seed: u64, parameters: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            wall_ms: 0.0,
            parameters,
            tables: Vec::new(),
            verdicts: Vec::new(),
        }
    }

    pub fn table(&mut self, name: &str, columns: &[&str], rows: usize) {
        self.tables.push(TableInfo {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows,
        });
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.verdicts.push(Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        });
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|c| c.pass)
    }
}
