use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::run::MANIFEST_FILE;
use crate::error::{Error, Result};
use crate::rates::{Verdict, VerdictKind};

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub theorem_id: String,
    pub experiment: String,
    pub kind: String,
    pub problem: String,
    pub theory_exponent: f64,
    pub fitted_slope: f64,
    pub slack: f64,
    pub r_squared: f64,
    pub points: usize,
    pub verdict: VerdictKind,
    pub diagnostics: String,
}

/// An experiment that produced no verdict, with the reason when it failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unjudged {
    pub experiment: String,
    pub kind: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hashes: Vec<String>,
    /// Sorted by theorem id, then experiment id.
    pub rows: Vec<ReportRow>,
    pub unjudged: Vec<Unjudged>,
}

fn text(v: &Value, key: &str) -> Result<String> {
    v.get(key)
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| Error::Parse(format!("result file lacks string field '{key}'")))
}

/// Aggregates every result file in `dir` into `report.json`.
///
/// Refuses results written under different config hashes unless `force` is set.
pub fn emit_report(dir: &Path, force: bool) -> Result<Report> {
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|name| name.ends_with(".json") && name != MANIFEST_FILE && name != super::REPORT_FILE)
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::config(format!("no result files in {}", dir.display())));
    }

    let mut hashes = BTreeSet::new();
    let mut rows = Vec::new();
    let mut unjudged = Vec::new();
    for name in &names {
        let value: Value = serde_json::from_str(&fs::read_to_string(dir.join(name))?)
            .map_err(|e| Error::Parse(format!("{name}: {e}")))?;
        hashes.insert(text(&value, "config_hash")?);
        let experiment = text(&value, "experiment")?;
        let kind = text(&value, "kind")?;
        match value.get("verdict").filter(|v| !v.is_null()) {
            Some(v) => {
                let verdict: Verdict =
                    serde_json::from_value(v.clone()).map_err(|e| Error::Parse(format!("{name}: {e}")))?;
                rows.push(ReportRow {
                    theorem_id: verdict.theorem_id,
                    experiment,
                    kind,
                    problem: text(&value, "problem")?,
                    theory_exponent: verdict.theory_exponent,
                    fitted_slope: verdict.fitted_slope,
                    slack: verdict.slack,
                    r_squared: verdict.fit.r_squared,
                    points: verdict.fit.points,
                    verdict: verdict.verdict,
                    diagnostics: verdict.diagnostics,
                });
            }
            None => unjudged.push(Unjudged {
                experiment,
                kind,
                error: value.get("error").and_then(Value::as_str).map(str::to_owned),
            }),
        }
    }
    if hashes.len() > 1 && !force {
        return Err(Error::config(format!(
            "result files come from {} different configs; pass --force to aggregate anyway",
            hashes.len()
        )));
    }
    rows.sort_by(|a, b| (&a.theorem_id, &a.experiment).cmp(&(&b.theorem_id, &b.experiment)));
    let report = Report {
        config_hashes: hashes.into_iter().collect(),
        rows,
        unjudged,
    };
    let mut out = serde_json::to_string_pretty(&report)?;
    out.push('\n');
    fs::write(dir.join(REPORT_FILE), out)?;
    Ok(report)
}
