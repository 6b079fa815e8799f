//! Reports: metadata, a fixed-column table and asserted properties.

use std::io::Write;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, Format, RunConfig};

/// Name of the field left out of byte-for-byte comparisons.
pub const TIMESTAMP_FIELD: &str = "timestamp";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Num(x as f64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Text(if b { "pass" } else { "fail" }.to_string())
    }
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            Cell::Text(_) => None,
        }
    }

    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => format_float(*x),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Reported for reference, not asserted.
    Info,
}

/// One property with its measured value and threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub property: String,
    pub measured: f64,
    /// Absent for informational rows.
    pub threshold: Option<f64>,
    pub verdict: Verdict,
}

impl Assertion {
    /// Passes when `measured ≤ threshold`.
    pub fn at_most(property: impl Into<String>, measured: f64, threshold: f64) -> Self {
        let ok = measured <= threshold;
        Assertion { property: property.into(), measured, threshold: Some(threshold), verdict: verdict(ok) }
    }

    /// Passes when `measured ≥ threshold`.
    pub fn at_least(property: impl Into<String>, measured: f64, threshold: f64) -> Self {
        let ok = measured >= threshold;
        Assertion { property: property.into(), measured, threshold: Some(threshold), verdict: verdict(ok) }
    }

    pub fn info(property: impl Into<String>, measured: f64) -> Self {
        Assertion { property: property.into(), measured, threshold: None, verdict: Verdict::Info }
    }
}

fn verdict(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub timestamp: String,
    pub experiment: Experiment,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metadata: Metadata,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub summary: Vec<Assertion>,
}

impl Report {
    pub fn new(config: &RunConfig, columns: &[&str]) -> Self {
        Report {
            metadata: Metadata {
                tool: env!("CARGO_PKG_NAME").to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                experiment: config.experiment,
                config: config.clone(),
            },
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            summary: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn assert(&mut self, a: Assertion) {
        self.summary.push(a);
    }

    pub fn passed(&self) -> bool {
        self.summary.iter().all(|a| a.verdict != Verdict::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Assertion> {
        self.summary.iter().filter(|a| a.verdict == Verdict::Fail)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Comment header, the table, a blank line and the summary table.
    pub fn to_csv(&self) -> Result<String> {
        let mut out = Vec::new();
        writeln!(out, "# tool: {} {}", self.metadata.tool, self.metadata.version)?;
        writeln!(out, "# {TIMESTAMP_FIELD}: {}", self.metadata.timestamp)?;
        writeln!(out, "# experiment: {}", self.metadata.experiment)?;
        writeln!(out, "# config: {}", serde_json::to_string(&self.metadata.config)?)?;
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&self.columns)?;
            for row in &self.rows {
                w.write_record(row.iter().map(Cell::csv))?;
            }
            w.flush()?;
        }
        writeln!(out)?;
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["property", "measured", "threshold", "verdict"])?;
            for a in &self.summary {
                let v = match a.verdict {
                    Verdict::Pass => "pass",
                    Verdict::Fail => "fail",
                    Verdict::Info => "info",
                };
                let threshold = a.threshold.map(format_float).unwrap_or_default();
                w.write_record([a.property.clone(), format_float(a.measured), threshold, v.to_string()])?;
            }
            w.flush()?;
        }
        Ok(String::from_utf8(out)?)
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
        }
    }

    /// Long-format `(x, y, series)` rows for plotting.
    pub fn plot_data(&self) -> Result<String> {
        if self.rows.is_empty() {
            bail!("the report has no rows to plot");
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["x", "y", "series"])?;
        for (x, y, series) in self.series() {
            w.write_record([format_float(x), format_float(y), series])?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }

    fn series(&self) -> Vec<(f64, f64, String)> {
        let num = |row: &[Cell], name: &str| self.column(name).and_then(|i| row[i].as_f64());
        let text = |row: &[Cell], name: &str| match self.column(name).map(|i| &row[i]) {
            Some(Cell::Text(s)) => s.clone(),
            _ => String::new(),
        };
        let mut out = Vec::new();
        match self.metadata.experiment {
            Experiment::LimitCheck => {
                for row in &self.rows {
                    if let (Some(x), Some(y)) = (num(row, "eps"), num(row, "abs_err")) {
                        out.push((x, y, format!("abs_err vs eps [{}]", text(row, "psi"))));
                    }
                }
            }
            Experiment::DissipationStudy => {
                for row in &self.rows {
                    if let (Some(x), Some(y)) = (num(row, "eps"), num(row, "D_B_eps")) {
                        out.push((x, y, "D_B_eps vs eps".to_string()));
                    }
                }
                for row in &self.rows {
                    if let (Some(x), Some(y)) = (num(row, "eps"), num(row, "D_L")) {
                        out.push((x, y, "D_L".to_string()));
                    }
                }
            }
            Experiment::Compactness => {
                for row in &self.rows {
                    if text(row, "quantity") == "s_eps" {
                        if let (Some(x), Some(y)) = (num(row, "eps"), num(row, "value")) {
                            out.push((x, y, format!("S_eps vs eps [|z| = {}]", text(row, "at"))));
                        }
                    }
                }
            }
            Experiment::Identities | Experiment::MetricAffine | Experiment::Projection => {}
        }
        out
    }
}

/// Report text with the timestamp removed, for reproducibility checks.
pub fn body_without_timestamp(text: &str) -> String {
    text.lines()
        .filter(|l| {
            let t = l.trim_start();
            !(t.starts_with(&format!("\"{TIMESTAMP_FIELD}\"")) || t.starts_with(&format!("# {TIMESTAMP_FIELD}:")))
        })
        .collect::<Vec<_>>()
        .join("\n")
}
