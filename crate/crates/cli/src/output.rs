use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use homeadam::numkit::fmt_f64;
use serde::Serialize;

use crate::error::CliError;

/// A run directory. All files are written whole, one call per file.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
    csv: bool,
    json: bool,
}

impl RunDir {
    pub fn create(root: &Path, csv: bool, json: bool) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            csv,
            json,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_text(&self, rel: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn write_csv(&self, rel: &str, table: &Csv) -> Result<(), CliError> {
        if self.csv {
            self.write_text(rel, &table.render())?;
        }
        Ok(())
    }

    pub fn write_json(&self, rel: &str, value: &impl Serialize) -> Result<(), CliError> {
        if self.json {
            let mut text = serde_json::to_string_pretty(value)
                .map_err(|e| CliError::io(&self.root.join(rel), e))?;
            text.push('\n');
            self.write_text(rel, &text)?;
        }
        Ok(())
    }
}

/// A CSV table with fixed columns. Floats use 17 significant digits.
#[derive(Debug, Clone, Default)]
pub struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

pub enum Cell {
    F(f64),
    I(u64),
    S(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::I(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::I(x as u64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::I(x as u64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::S(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::S(x)
    }
}

impl Csv {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|h| h.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(
            row.into_iter()
                .map(|c| match c {
                    Cell::F(x) => fmt_f64(x),
                    Cell::I(x) => x.to_string(),
                    Cell::S(s) => s,
                })
                .collect(),
        );
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.join(","));
        }
        s
    }
}
