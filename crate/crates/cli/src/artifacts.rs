//! Tab-separated tables and the per-run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bpre_core::stats::CheckStatus;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// One cell of a table. Floats print in `{:.12e}` so reruns compare byte for byte.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.12e}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(v) => v.replace(['\t', '\n'], " "),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_columns(name: &str, columns: Vec<String>) -> Self {
        Self {
            name: name.to_string(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width mismatch in table {}",
            self.name
        );
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = self.columns.join("\t");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            let _ = writeln!(out, "{}", cells.join("\t"));
        }
        out
    }
}

/// Builds a row from heterogeneous values.
#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => {
        vec![$($crate::artifacts::Cell::from($x)),*]
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Relative to the run directory.
    pub path: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub status: CheckStatus,
    pub wall_seconds: f64,
    pub artifacts: Vec<ArtifactRecord>,
    #[serde(default)]
    pub values: BTreeMap<String, toml::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub digest: String,
    pub seed: u64,
    /// The resolved config, relative to the run directory.
    pub config: String,
    #[serde(default)]
    pub stages: BTreeMap<String, StageRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const CONFIG_FILE: &str = "config.toml";

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `table` to `<run_dir>/<stage>/<name>.tsv`.
pub fn write_table(run_dir: &Path, stage: &str, table: &Table) -> Result<ArtifactRecord> {
    let rel = format!("{stage}/{}.tsv", table.name);
    write_file(&run_dir.join(&rel), &table.render())?;
    Ok(ArtifactRecord {
        path: rel,
        rows: table.rows.len(),
    })
}

impl Manifest {
    pub fn path(run_dir: &Path) -> PathBuf {
        run_dir.join(MANIFEST_FILE)
    }

    /// The existing manifest for this run directory, or a fresh one.
    pub fn load_or_new(run_dir: &Path, digest: &str, seed: u64) -> Result<Self> {
        let path = Self::path(run_dir);
        if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|source| CliError::Read {
                path: path.clone(),
                source,
            })?;
            if let Ok(m) = toml::from_str::<Manifest>(&text) {
                if m.digest == digest {
                    return Ok(m);
                }
            }
        }
        Ok(Self {
            digest: digest.to_string(),
            seed,
            config: CONFIG_FILE.to_string(),
            stages: BTreeMap::new(),
        })
    }

    pub fn save(&self, run_dir: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| CliError::Encode {
            what: "manifest",
            message: e.to_string(),
        })?;
        write_file(&Self::path(run_dir), &text)
    }
}

pub fn save_config(run_dir: &Path, text: &str) -> Result<()> {
    write_file(&run_dir.join(CONFIG_FILE), text)
}
