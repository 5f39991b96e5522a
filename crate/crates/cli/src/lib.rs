//! Scenario runner for the `hclab` binary.

pub mod config;
pub mod report;
pub mod scenarios;

use scenarios::ScenarioKind;
use serde_json::json;

/// One `name  description` line per scenario, in listing order.
pub fn list_text() -> String {
    let width = ScenarioKind::ALL.iter().map(|k| k.name().len()).max().unwrap_or(0);
    ScenarioKind::ALL.iter().map(|k| format!("{:width$}  {}\n", k.name(), k.description())).collect()
}

pub fn list_json() -> String {
    let rows: Vec<_> =
        ScenarioKind::ALL.iter().map(|k| json!({"name": k.name(), "description": k.description()})).collect();
    serde_json::to_string_pretty(&rows).expect("static listing serializes") + "\n"
}
