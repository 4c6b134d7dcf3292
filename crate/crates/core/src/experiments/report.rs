use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;

/// A plain text table for terminal output.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub title: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(title: impl Into<String>, headers: &[&str]) -> Self {
        Self {
            title: title.into(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.len()).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        writeln!(f, "{}", self.title)?;
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        writeln!(f, "{}", line(&self.headers))?;
        for r in &self.rows {
            writeln!(f, "{}", line(r))?;
        }
        Ok(())
    }
}

/// Common output surface of the experiment reports.
pub trait Report {
    fn id(&self) -> u8;
    /// Per-trial rows as CSV text.
    fn csv(&self) -> Result<String>;
    /// Aggregates as JSON.
    fn summary(&self) -> serde_json::Value;
    fn table(&self) -> Table;
}

pub(crate) fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Writes `expN_results.csv` and `expN_summary.json` into `dir`.
pub fn write_report(report: &dyn Report, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let id = report.id();
    let csv_path = dir.join(format!("exp{id}_results.csv"));
    fs::write(&csv_path, report.csv()?)?;
    let json_path = dir.join(format!("exp{id}_summary.json"));
    fs::write(&json_path, serde_json::to_string_pretty(&report.summary())? + "\n")?;
    Ok(vec![csv_path, json_path])
}

/// Fraction of `ranks` at or below each order `1..=k`.
pub(crate) fn cumulative(ranks: &[Option<usize>], k: usize) -> Vec<f64> {
    (1..=k)
        .map(|o| ranks.iter().filter(|r| r.is_some_and(|r| r <= o)).count() as f64 / ranks.len().max(1) as f64)
        .collect()
}

pub(crate) fn fmt3(x: f64) -> String {
    format!("{x:.3}")
}
