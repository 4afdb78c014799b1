#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_youla-lqg");

/// Runs the binary with `dir` as working directory.
pub fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("spawn youla-lqg")
}

pub fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn json(path: impl AsRef<Path>) -> serde_json::Value {
    let text = std::fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()));
    serde_json::from_str(&text).unwrap()
}

pub fn matrix(v: &serde_json::Value) -> Vec<Vec<f64>> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|row| row.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect())
        .collect()
}

pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Vec<String> {
        let k = self.headers.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
        self.rows.iter().map(|r| r[k].clone()).collect()
    }

    pub fn floats(&self, name: &str) -> Vec<f64> {
        self.column(name).iter().map(|v| v.parse().unwrap()).collect()
    }

    /// Rows where `key` equals `value`.
    pub fn filter(&self, key: &str, value: &str) -> Table {
        let k = self.headers.iter().position(|h| h == key).unwrap();
        Table {
            headers: self.headers.clone(),
            rows: self.rows.iter().filter(|r| r[k] == value).cloned().collect(),
        }
    }
}

pub fn table(path: impl AsRef<Path>) -> Table {
    let mut r = csv::Reader::from_path(path.as_ref()).unwrap();
    let headers = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    Table { headers, rows }
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

pub const STATIONARY: &str = r#"{"A_K": [[-0.5, 0.0], [0.0, -0.5]], "B_K": [[0.0], [0.0]], "C_K": [[0.0, 0.0]]}"#;
pub const EXAMPLE2_CTRL: &str = r#"{"A_K": [[-0.5, 0.0], [0.0, -0.5]], "B_K": [[0.0], [1.0]], "C_K": [[0.0, -1.0]]}"#;
