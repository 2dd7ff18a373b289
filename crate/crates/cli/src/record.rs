//! Result records, numeric tables and check outcomes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    UInt(u64),
    Int(i64),
    Real(f64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::UInt(v) => v.to_string(),
            Cell::Int(v) => v.to_string(),
            Cell::Real(v) => format_real(*v),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::UInt(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::UInt(v)
    }
}

impl From<i8> for Cell {
    fn from(v: i8) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Real)
    }
}

/// Shortest representation that parses back to the same bits.
pub fn format_real(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn check_finite(&self) -> Result<(), CliError> {
        for (i, row) in self.rows.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                if let Cell::Real(v) = cell {
                    if !v.is_finite() {
                        return Err(CliError::NonFinite {
                            table: self.name.clone(),
                            row: i,
                            column: self.columns[j].clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Header row plus one line per row, `,`-separated, LF line endings.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Human-readable subject the check probes, used as report section title.
    pub topic: String,
    pub passed: bool,
    /// Exploratory checks are reported but never affect the exit status.
    pub exploratory: bool,
    pub enabled: bool,
    pub measured: Option<f64>,
    pub reference: Option<f64>,
    /// Distance to the failure threshold; positive means passing.
    pub margin: Option<f64>,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, topic: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            topic: topic.into(),
            passed,
            exploratory: false,
            enabled: true,
            measured: None,
            reference: None,
            margin: None,
            detail: detail.into(),
        }
    }

    pub fn measured(mut self, measured: f64, reference: f64, margin: f64) -> Self {
        self.measured = measured.is_finite().then_some(measured);
        self.reference = reference.is_finite().then_some(reference);
        self.margin = margin.is_finite().then_some(margin);
        self
    }

    /// Upper-bound style check: passes when `measured <= limit`.
    pub fn at_most(name: &str, topic: &str, measured: f64, limit: f64, detail: impl Into<String>) -> Self {
        Self::new(name, topic, measured <= limit, detail).measured(measured, limit, limit - measured)
    }

    /// Lower-bound style check: passes when `measured >= limit`.
    pub fn at_least(name: &str, topic: &str, measured: f64, limit: f64, detail: impl Into<String>) -> Self {
        Self::new(name, topic, measured >= limit, detail).measured(measured, limit, measured - limit)
    }

    pub fn exploratory(mut self) -> Self {
        self.exploratory = true;
        self
    }

    pub fn counts(&self) -> bool {
        self.enabled && !self.exploratory
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub wall_time_seconds: f64,
    pub passed: bool,
    pub scalars: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub outputs: Vec<Table>,
}

impl ResultRecord {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            tool: "pinlab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: config.command.name().into(),
            config: config.clone(),
            wall_time_seconds: 0.0,
            passed: true,
            scalars: BTreeMap::new(),
            checks: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn scalar(&mut self, name: &str, value: f64) {
        self.scalars.insert(name.into(), value);
    }

    pub fn finish(&mut self) {
        self.passed = self.checks.iter().filter(|c| c.counts()).all(|c| c.passed);
    }

    /// Keeps only the named checks enabled; an empty selection enables all.
    pub fn select_checks(&mut self, names: &[String]) {
        if names.is_empty() {
            return;
        }
        for c in &mut self.checks {
            c.enabled = names.contains(&c.name);
        }
    }

    pub fn check_finite(&self) -> Result<(), CliError> {
        for t in &self.outputs {
            t.check_finite()?;
        }
        for (name, v) in &self.scalars {
            if !v.is_finite() {
                return Err(CliError::NonFinite {
                    table: "scalars".into(),
                    row: 0,
                    column: name.clone(),
                });
            }
        }
        Ok(())
    }
}
