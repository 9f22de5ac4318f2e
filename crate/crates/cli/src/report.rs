//! Run artifacts: `series.csv`, `report.json` and `field_*.csv`.

use std::path::Path;

use qsd_core::io::{field_csv, series_csv};
use qsd_core::PhaseSpaceField;
use serde::Serialize;
use serde_json::Value;

/// One checked relation with its measured value and tolerance.
#[derive(Clone, Debug, Serialize)]
pub struct Assertion {
    pub name: String,
    /// The relation under test, written out.
    pub relation: String,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Assertion {
    /// |measured − expected| ≤ tolerance.
    pub fn close(name: &str, relation: &str, measured: f64, expected: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            relation: relation.into(),
            measured,
            expected,
            tolerance,
            passed: (measured - expected).abs() <= tolerance,
        }
    }

    /// measured ≤ bound.
    pub fn at_most(name: &str, relation: &str, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            relation: relation.into(),
            measured,
            expected: bound,
            tolerance: 0.0,
            passed: measured <= bound,
        }
    }

    /// measured < bound.
    pub fn below(name: &str, relation: &str, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            relation: relation.into(),
            measured,
            expected: bound,
            tolerance: 0.0,
            passed: measured < bound,
        }
    }

    /// A boolean check; measured is 1 when the condition holds.
    pub fn holds(name: &str, relation: &str, ok: bool) -> Self {
        Self {
            name: name.into(),
            relation: relation.into(),
            measured: if ok { 1.0 } else { 0.0 },
            expected: 1.0,
            tolerance: 0.0,
            passed: ok,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema: u32,
    pub experiment: String,
    pub base_seed: u64,
    pub passed: bool,
    pub assertions: Vec<Assertion>,
    pub details: Value,
}

/// Everything an experiment produces, written in one place after the run.
#[derive(Debug)]
pub struct Artifacts {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub assertions: Vec<Assertion>,
    pub details: Value,
    pub fields: Vec<(String, PhaseSpaceField)>,
}

impl Artifacts {
    pub fn new() -> Self {
        Self {
            headers: Vec::new(),
            columns: Vec::new(),
            assertions: Vec::new(),
            details: Value::Null,
            fields: Vec::new(),
        }
    }

    pub fn column(&mut self, name: &str, values: Vec<f64>) {
        self.headers.push(name.to_string());
        self.columns.push(values);
    }

    pub fn assert(&mut self, a: Assertion) {
        self.assertions.push(a);
    }

    pub fn field(&mut self, name: &str, f: PhaseSpaceField) {
        self.fields.push((name.to_string(), f));
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn write(self, dir: &Path, experiment: &str, base_seed: u64) -> std::io::Result<Report> {
        std::fs::create_dir_all(dir)?;
        let headers: Vec<&str> = self.headers.iter().map(String::as_str).collect();
        std::fs::write(dir.join("series.csv"), series_csv(&headers, &self.columns))?;
        for (name, f) in &self.fields {
            std::fs::write(dir.join(format!("field_{name}.csv")), field_csv(f))?;
        }
        let report = Report {
            schema: qsd_core::io::CSV_SCHEMA,
            experiment: experiment.to_string(),
            base_seed,
            passed: self.assertions.iter().all(|a| a.passed),
            assertions: self.assertions,
            details: self.details,
        };
        let mut json = serde_json::to_string_pretty(&report).map_err(std::io::Error::other)?;
        json.push('\n');
        std::fs::write(dir.join("report.json"), json)?;
        Ok(report)
    }
}

impl Default for Artifacts {
    fn default() -> Self {
        Self::new()
    }
}
