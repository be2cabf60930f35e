use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{EquityError, Result};
use crate::obstacle::Group;

/// One proxy-positive individual after evaluation by the intended model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub id: String,
    pub grp: Group,
    /// Proxy decision.
    pub y_pt: bool,
    /// Intended-model outcome.
    pub y_tt: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilizationReport {
    pub zeta: f64,
    /// Number of proxy positives evaluated.
    pub m: usize,
    pub true_positive_share: f64,
    pub false_positive_share: f64,
    /// How the false positives split across groups (sums to 1 when any exist).
    pub per_group_fp_share: BTreeMap<Group, f64>,
    /// Within each group, the share of its proxy positives that turned out false.
    pub per_group_fp_rate: BTreeMap<Group, f64>,
}

pub fn utilization(records: &[EvaluationRecord]) -> Result<UtilizationReport> {
    if let Some(r) = records.iter().find(|r| !r.y_pt) {
        return Err(EquityError::NotProxyPositive { id: r.id.clone() });
    }
    let m = records.len();
    if m == 0 {
        return Err(EquityError::NoPositives);
    }
    let mut fp = [0usize; 2];
    let mut total = [0usize; 2];
    for r in records {
        total[r.grp.index()] += 1;
        if !r.y_tt {
            fp[r.grp.index()] += 1;
        }
    }
    let fp_all = fp[0] + fp[1];
    let zeta = (m - fp_all) as f64 / m as f64;

    let mut per_group_fp_share = BTreeMap::new();
    let mut per_group_fp_rate = BTreeMap::new();
    for g in Group::BOTH {
        let i = g.index();
        if total[i] > 0 {
            per_group_fp_rate.insert(g, fp[i] as f64 / total[i] as f64);
        }
        if fp_all > 0 {
            per_group_fp_share.insert(g, fp[i] as f64 / fp_all as f64);
        }
    }
    Ok(UtilizationReport {
        zeta,
        m,
        true_positive_share: zeta,
        false_positive_share: fp_all as f64 / m as f64,
        per_group_fp_share,
        per_group_fp_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recs(outcomes: &[(bool, Group)]) -> Vec<EvaluationRecord> {
        outcomes
            .iter()
            .enumerate()
            .map(|(i, &(y_tt, grp))| EvaluationRecord { id: format!("r{i}"), grp, y_pt: true, y_tt })
            .collect()
    }

    #[test]
    fn examples() {
        let all = recs(&[(true, Group::Zero), (true, Group::One)]);
        assert_eq!(utilization(&all).unwrap().zeta, 1.0);

        let r = utilization(&recs(&[
            (true, Group::Zero),
            (true, Group::One),
            (false, Group::One),
            (true, Group::Zero),
        ]))
        .unwrap();
        assert_eq!(r.zeta, 0.75);
        assert_eq!(r.m, 4);
        assert_eq!(r.true_positive_share + r.false_positive_share, 1.0);
        assert_eq!(r.per_group_fp_share[&Group::One], 1.0);
        assert_eq!(r.per_group_fp_share[&Group::Zero], 0.0);
        assert_eq!(r.per_group_fp_rate[&Group::One], 0.5);
    }

    #[test]
    fn loan_default_band() {
        for defaults in [15usize, 18, 20] {
            let mut outcomes = vec![(true, Group::Zero); 100 - defaults];
            outcomes.extend(std::iter::repeat_n((false, Group::One), defaults));
            let z = utilization(&recs(&outcomes)).unwrap().zeta;
            assert!((0.80..=0.85).contains(&z), "{z}");
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(utilization(&[]), Err(EquityError::NoPositives)));
        let mut r = recs(&[(true, Group::Zero)]);
        r[0].y_pt = false;
        assert!(matches!(utilization(&r), Err(EquityError::NotProxyPositive { .. })));
    }
}
