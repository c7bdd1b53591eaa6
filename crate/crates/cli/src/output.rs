use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cnnsense::diagnostics::format_float;
use serde::Serialize;

/// Collects output files in memory; nothing touches disk until `commit`.
pub struct RunDir {
    root: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl RunDir {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.files.push((name.into(), text.into_bytes()));
        Ok(())
    }

    pub fn text(&mut self, name: &str, text: String) {
        self.files.push((name.into(), text.into_bytes()));
    }

    pub fn bytes(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn commit(self) -> Result<()> {
        fs::create_dir_all(&self.root)
            .with_context(|| format!("creating {}", self.root.display()))?;
        for (name, bytes) in self.files {
            let path = self.root.join(name);
            fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

/// A CSV cell: integers verbatim, floats with 17 significant digits.
pub enum Cell {
    Int(u64),
    Float(f64),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

pub struct Csv(String);

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv(format!("{}\n", header.join(",")))
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        let parts: Vec<String> = cells
            .into_iter()
            .map(|c| match c {
                Cell::Int(v) => v.to_string(),
                Cell::Float(v) => format_float(v),
            })
            .collect();
        let _ = writeln!(self.0, "{}", parts.join(","));
    }

    pub fn finish(self) -> String {
        self.0
    }
}
