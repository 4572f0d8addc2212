//! File emission. Floats are written in shortest round-trip form.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-3..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub enum Cell {
    Num(f64),
    Bool(bool),
}

pub fn csv(header: &[&str], rows: &[Vec<Cell>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .map(|c| match c {
                Cell::Num(x) => fmt_f64(*x),
                Cell::Bool(b) => b.to_string(),
            })
            .collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

pub fn json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Config(format!("serializing output: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub struct OutDir {
    dir: PathBuf,
}

impl OutDir {
    pub fn new(dir: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
        Ok(OutDir { dir })
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }
}
