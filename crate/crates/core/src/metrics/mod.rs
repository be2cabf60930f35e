//! Access, outcome and utilization metrics, proxy gaps and the composite score.

mod access;
mod gaps;
mod outcome;
mod utilization;

pub use access::{model_access, AccessReport};
pub use gaps::{
    feature_matching, feature_proxy_gap, label_proxy_gap, normalize_feature_name, obstacle_gap, proxy_gaps,
    GapReport, ModelProfile, ObstacleGap,
};
pub use outcome::{eo_violation, equalize_cutoff, GroupCutoffs, OutcomeReport, DEFAULT_EPSILON};
pub use utilization::{utilization, EvaluationRecord, UtilizationReport};

use serde::{Deserialize, Serialize};

/// Composite score in `[0, 3]`: `psi + (1 - min(omega, 1)) + zeta`.
///
/// Raw violation is folded in as `1 - min(omega, 1)` so that the perfect
/// point (full access, zero violation, full utilization) scores exactly 3.
pub fn composite_score(psi: f64, omega: f64, zeta: f64) -> f64 {
    psi + (1.0 - omega.min(1.0)) + zeta
}

pub fn equity_score(access: &AccessReport, outcome: &OutcomeReport, util: &UtilizationReport) -> f64 {
    composite_score(access.psi, outcome.eo_violation, util.zeta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityReport {
    pub access: AccessReport,
    pub outcome: OutcomeReport,
    pub utilization: UtilizationReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaps: Option<GapReport>,
    pub score: f64,
}

impl EquityReport {
    pub fn new(access: AccessReport, outcome: OutcomeReport, utilization: UtilizationReport, gaps: Option<GapReport>) -> Self {
        let score = equity_score(&access, &outcome, &utilization);
        EquityReport { access, outcome, utilization, gaps, score }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_examples() {
        assert_eq!(composite_score(1.0, 0.0, 1.0), 3.0);
        assert_eq!(composite_score(0.0, 1.0, 0.0), 0.0);
        assert_eq!(composite_score(0.0, 1.7, 0.0), 0.0);
        assert!((composite_score(0.75, 0.1, 0.8) - 2.45).abs() < 1e-12);
    }
}
