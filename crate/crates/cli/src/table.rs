use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use injflow::geometry::fmt_f64;
use serde::Serialize;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => fmt_f64(*v),
        }
    }
}

/// Column-named numeric table written as CSV or as `{columns, rows}` JSON.
#[derive(Clone, Debug, Serialize)]
pub struct Table {
    #[serde(skip)]
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self { name: name.into(), columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Points as `x0..x{d-1}` columns.
    pub fn points(name: impl Into<String>, points: &[nalgebra::DVector<f64>]) -> Self {
        let dim = points.first().map_or(0, |p| p.len());
        let mut t = Table::new(name, (0..dim).map(|i| format!("x{i}")));
        for p in points {
            t.push(p.iter().map(|&v| Cell::Num(v)).collect());
        }
        t
    }

    pub fn write(&self, dir: &Path, format: Format) -> Result<PathBuf, CliError> {
        let (path, text) = match format {
            Format::Csv => {
                let mut s = self.columns.join(",");
                s.push('\n');
                for row in &self.rows {
                    let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                    s.push_str(&cells.join(","));
                    s.push('\n');
                }
                (dir.join(format!("{}.csv", self.name)), s)
            }
            Format::Json => {
                let mut s = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
                s.push('\n');
                (dir.join(format!("{}.json", self.name)), s)
            }
        };
        fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}
