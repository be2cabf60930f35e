//! File input: audit tables and JSON documents.

use std::fs::File;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{EquityError, Result};
use crate::metrics::{eo_violation, utilization, EvaluationRecord, OutcomeReport, UtilizationReport, DEFAULT_EPSILON};
use crate::obstacle::Group;

/// One row of an audit table.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub pred: bool,
    pub label: bool,
    pub grp: Group,
    /// Intended-model outcome, when known.
    pub y_tt: Option<bool>,
    /// Whether the individual had full access, when known.
    pub accessed: Option<bool>,
}

fn parse_bool(value: &str, row: usize, column: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        _ => Err(EquityError::BadCell { row, column: column.to_string(), value: value.to_string() }),
    }
}

fn parse_group(value: &str, row: usize) -> Result<Group> {
    match value.trim() {
        "0" => Ok(Group::Zero),
        "1" => Ok(Group::One),
        _ => Err(EquityError::BadCell { row, column: "group".into(), value: value.to_string() }),
    }
}

/// Reads a comma-delimited table with columns `pred`, `label`, `group` and
/// optional `y_tt` and `accessed`. Empty optional cells are treated as unknown.
pub fn read_audit_csv<R: std::io::Read>(input: R) -> Result<Vec<AuditRow>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| find(name).ok_or_else(|| EquityError::MissingColumn(name.into()));
    let (pred, label, group) = (required("pred")?, required("label")?, required("group")?);
    let (y_tt, accessed) = (find("y_tt"), find("accessed"));

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let optional = |col: Option<usize>, name: &str| -> Result<Option<bool>> {
            match col.and_then(|c| record.get(c)).filter(|v| !v.is_empty()) {
                Some(v) => parse_bool(v, row, name).map(Some),
                None => Ok(None),
            }
        };
        rows.push(AuditRow {
            pred: parse_bool(&record[pred], row, "pred")?,
            label: parse_bool(&record[label], row, "label")?,
            grp: parse_group(&record[group], row)?,
            y_tt: optional(y_tt, "y_tt")?,
            accessed: optional(accessed, "accessed")?,
        });
    }
    Ok(rows)
}

pub fn read_audit_file(path: &Path) -> Result<Vec<AuditRow>> {
    read_audit_csv(File::open(path).map_err(|e| EquityError::io(path, e))?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub n: usize,
    /// Present when every row carries `accessed`.
    pub psi: Option<f64>,
    pub outcome: OutcomeReport,
    /// Present when every predicted positive carries `y_tt`.
    pub utilization: Option<UtilizationReport>,
}

pub fn audit(rows: &[AuditRow], epsilon: f64) -> Result<AuditReport> {
    if rows.is_empty() {
        return Err(EquityError::EmptyInput("audit rows"));
    }
    let preds: Vec<bool> = rows.iter().map(|r| r.pred).collect();
    let labels: Vec<bool> = rows.iter().map(|r| r.label).collect();
    let groups: Vec<Group> = rows.iter().map(|r| r.grp).collect();
    let outcome = eo_violation(&preds, &labels, &groups, epsilon)?;

    let psi = rows
        .iter()
        .map(|r| r.accessed)
        .collect::<Option<Vec<bool>>>()
        .map(|a| a.iter().filter(|&&v| v).count() as f64 / a.len() as f64);

    let positives: Vec<&AuditRow> = rows.iter().filter(|r| r.pred).collect();
    let utilization = if !positives.is_empty() && positives.iter().all(|r| r.y_tt.is_some()) {
        let records: Vec<EvaluationRecord> = positives
            .iter()
            .enumerate()
            .map(|(i, r)| EvaluationRecord { id: i.to_string(), grp: r.grp, y_pt: true, y_tt: r.y_tt.unwrap_or(false) })
            .collect();
        Some(utilization(&records)?)
    } else {
        None
    };
    Ok(AuditReport { n: rows.len(), psi, outcome, utilization })
}

pub fn audit_default(rows: &[AuditRow]) -> Result<AuditReport> {
    audit(rows, DEFAULT_EPSILON)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| EquityError::io(path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| EquityError::io(path, e))
}
