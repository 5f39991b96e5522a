//! Report assembly and output files.
//!
//! `report.json` is a pure function of the resolved configuration; run
//! metadata that varies between invocations goes to `meta.json`.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ScenarioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

/// One declared tolerance and the measured value it constrains.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub bound: f64,
    pub passed: bool,
    /// CSV file and column whose extremum reproduces `value`, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Check {
    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, relation: Relation::AtMost, bound, passed: value <= bound, source: None }
    }

    pub fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, relation: Relation::AtLeast, bound, passed: value >= bound, source: None }
    }

    /// A yes/no property, recorded as `value >= 1`.
    pub fn holds(name: &str, ok: bool) -> Self {
        Self::at_least(name, if ok { 1.0 } else { 0.0 }, 1.0)
    }

    pub fn from_curve(mut self, file: &str, column: &str) -> Self {
        self.source = Some(format!("curves/{file}:{column}"));
        self
    }
}

/// A numeric table written to `curves/<name>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Curve {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column_max(&self, column: &str) -> f64 {
        let j = self.header.iter().position(|h| h == column).expect("known column");
        self.rows.iter().map(|r| r[j]).fold(0.0, f64::max)
    }

    fn write<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "{}", self.header.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub results: Value,
    pub checks: Vec<Check>,
    pub curves: Vec<Curve>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn report_json(cfg: &ScenarioConfig, outcome: &Outcome) -> Value {
    let curves: Vec<String> = outcome.curves.iter().map(|c| format!("curves/{}", c.name)).collect();
    json!({
        "scenario": cfg.scenario,
        "seed": cfg.seed,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "checks": outcome.checks,
        "passed": outcome.passed(),
        "results": outcome.results,
        "curves": if cfg.report_format.csv() { curves } else { Vec::new() },
    })
}

/// Writes `report.json` and/or `curves/*.csv` per the report format, and
/// always `meta.json`.
pub fn write_outputs(dir: &Path, cfg: &ScenarioConfig, outcome: &Outcome, meta: &Value) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    if cfg.report_format.json() {
        let mut text = serde_json::to_string_pretty(&report_json(cfg, outcome)).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(dir.join("report.json"), text)?;
    }
    if cfg.report_format.csv() {
        let curves = dir.join("curves");
        fs::create_dir_all(&curves)?;
        for c in &outcome.curves {
            let mut out = BufWriter::new(fs::File::create(curves.join(&c.name))?);
            c.write(&mut out)?;
            out.flush()?;
        }
    }
    let mut text = serde_json::to_string_pretty(meta).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(dir.join("meta.json"), text)
}
