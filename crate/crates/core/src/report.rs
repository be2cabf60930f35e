//! Writing equity reports to disk as JSON or long-format CSV.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::casestudy::{CaseStudyResult, ReportFormat};
use crate::error::{EquityError, Result};
use crate::metrics::EquityReport;

/// A report plus any extra long-format cells that belong with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedReport {
    pub name: String,
    pub report: EquityReport,
    #[serde(default)]
    pub extra: Vec<LongRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub regime: String,
    pub metric: String,
    /// `all`, a group index, or a feature index for gap vectors.
    pub group: String,
    pub value: f64,
}

fn row(regime: &str, metric: &str, group: impl ToString, value: f64) -> LongRow {
    LongRow { regime: regime.into(), metric: metric.into(), group: group.to_string(), value }
}

pub fn long_rows(named: &NamedReport) -> Vec<LongRow> {
    let r = &named.report;
    let n = named.name.as_str();
    let mut rows = vec![row(n, "psi", "all", r.access.psi)];
    rows.extend(r.access.per_group.iter().map(|(g, v)| row(n, "psi", g, *v)));
    rows.push(row(n, "eo_violation", "all", r.outcome.eo_violation));
    rows.extend(r.outcome.tpr_by_group.iter().map(|(g, v)| row(n, "tpr", g, *v)));
    rows.extend(r.outcome.fpr_by_group.iter().map(|(g, v)| row(n, "fpr", g, *v)));
    let u = &r.utilization;
    rows.push(row(n, "zeta", "all", u.zeta));
    rows.push(row(n, "proxy_positives", "all", u.m as f64));
    rows.push(row(n, "tp_share", "all", u.true_positive_share));
    rows.push(row(n, "fp_share", "all", u.false_positive_share));
    rows.extend(u.per_group_fp_share.iter().map(|(g, v)| row(n, "fp_share", g, *v)));
    rows.extend(u.per_group_fp_rate.iter().map(|(g, v)| row(n, "fp_rate", g, *v)));
    if let Some(gaps) = &r.gaps {
        rows.extend(gaps.gamma_x.iter().enumerate().map(|(i, v)| row(n, "gamma_x", i, f64::from(*v))));
        rows.extend(gaps.gamma_l.iter().enumerate().map(|(i, v)| row(n, "gamma_l", i, *v)));
        rows.push(row(n, "obstacle_gap_unmatched", "all", gaps.obstacle_gap.unmatched_affected_features as f64));
        rows.push(row(n, "obstacle_gap_alpha_l1", "all", gaps.obstacle_gap.alpha_l1_distance_on_matched));
    }
    rows.push(row(n, "score", "all", r.score));
    rows.extend(named.extra.iter().cloned());
    rows
}

pub fn write_long_csv<W: std::io::Write>(rows: &[LongRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["regime", "metric", "group", "value"])?;
    }
    w.flush().map_err(|e| EquityError::io("<csv>", e))?;
    Ok(())
}

/// Writes one file per report into `out_dir` and returns their paths.
pub fn emit_report(reports: &[NamedReport], format: ReportFormat, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(out_dir).map_err(|e| EquityError::io(out_dir, e))?;
    let mut written = Vec::with_capacity(reports.len());
    for named in reports {
        let path = match format {
            ReportFormat::Json => {
                let path = out_dir.join(format!("{}.json", named.name));
                crate::io::write_json(&path, named)?;
                path
            }
            ReportFormat::Csv => {
                let path = out_dir.join(format!("{}.csv", named.name));
                let file = std::fs::File::create(&path).map_err(|e| EquityError::io(&path, e))?;
                write_long_csv(&long_rows(named), file)?;
                path
            }
        };
        written.push(path);
    }
    Ok(written)
}

/// Case-study regimes that produced a full report, with admissibility rates attached.
pub fn case_study_reports(result: &CaseStudyResult) -> Vec<NamedReport> {
    result
        .regimes
        .iter()
        .filter_map(|r| {
            let report = r.report.clone()?;
            let extra = r
                .positive_rate_by_group
                .iter()
                .map(|(g, v)| row(&r.name, "positive_rate", g, *v))
                .collect();
            Some(NamedReport { name: r.name.clone(), report, extra })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{eo_violation, model_access, utilization, EvaluationRecord};
    use crate::obstacle::{Group, Individual, ObstacleModel, Policy, Population};

    fn sample() -> NamedReport {
        let pop = Population::new(
            vec![
                Individual::unobstructed("a", vec![1.0], true, Group::Zero),
                Individual::unobstructed("b", vec![2.0], false, Group::One),
            ],
            vec!["f".into()],
            "g",
        )
        .unwrap();
        let access = model_access(&pop, &ObstacleModel::none(1), Policy::none()).unwrap();
        let groups = [Group::Zero, Group::Zero, Group::One, Group::One];
        let outcome = eo_violation(&[true, false, true, false], &[true, false, true, false], &groups, 1e-9).unwrap();
        let util = utilization(&[
            EvaluationRecord { id: "a".into(), grp: Group::Zero, y_pt: true, y_tt: true },
            EvaluationRecord { id: "b".into(), grp: Group::One, y_pt: true, y_tt: false },
        ])
        .unwrap();
        NamedReport { name: "demo".into(), report: EquityReport::new(access, outcome, util, None), extra: vec![] }
    }

    #[test]
    fn row_count_matches_cells() {
        // psi: all + 2 groups; omega: all + 2 tpr + 2 fpr; zeta, m, tp, fp: 4;
        // fp share 2, fp rate 2; score 1
        assert_eq!(long_rows(&sample()).len(), 3 + 5 + 4 + 2 + 2 + 1);
    }

    #[test]
    fn empty_list_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("nested");
        assert!(emit_report(&[], ReportFormat::Json, &out).unwrap().is_empty());
        assert!(!out.exists());
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_report(&[sample()], ReportFormat::Json, dir.path()).unwrap();
        let back: NamedReport = crate::io::read_json(&paths[0]).unwrap();
        assert_eq!(back, sample());
        let csv = emit_report(&[sample()], ReportFormat::Csv, dir.path()).unwrap();
        let text = std::fs::read_to_string(&csv[0]).unwrap();
        assert!(text.starts_with("regime,metric,group,value\n"));
    }
}
