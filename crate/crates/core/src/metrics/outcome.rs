use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{EquityError, RateKind, Result};
use crate::obstacle::Group;

pub const DEFAULT_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeReport {
    /// `|TPR_0 - TPR_1| + |FPR_0 - FPR_1|`; zero is best.
    pub eo_violation: f64,
    pub tpr_by_group: BTreeMap<Group, f64>,
    pub fpr_by_group: BTreeMap<Group, f64>,
    pub equal_outcomes: bool,
}

#[derive(Debug, Default, Clone, Copy)]
struct Confusion {
    tp: usize,
    fn_: usize,
    fp: usize,
    tn: usize,
}

/// Equalized-odds violation between groups 0 and 1 by exact counting.
/// `epsilon` is the tolerance for calling the outcomes equal.
pub fn eo_violation(preds: &[bool], labels: &[bool], groups: &[Group], epsilon: f64) -> Result<OutcomeReport> {
    if preds.len() != labels.len() {
        return Err(EquityError::DimensionMismatch { expected: preds.len(), found: labels.len() });
    }
    if preds.len() != groups.len() {
        return Err(EquityError::DimensionMismatch { expected: preds.len(), found: groups.len() });
    }
    let mut cells = [Confusion::default(); 2];
    let mut present = [false; 2];
    for ((&p, &l), &g) in preds.iter().zip(labels).zip(groups) {
        present[g.index()] = true;
        let c = &mut cells[g.index()];
        match (l, p) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    let mut tpr_by_group = BTreeMap::new();
    let mut fpr_by_group = BTreeMap::new();
    for g in Group::BOTH {
        if !present[g.index()] {
            return Err(EquityError::MissingGroup(g.into()));
        }
        let c = cells[g.index()];
        if c.tp + c.fn_ == 0 {
            return Err(EquityError::UndefinedRate { group: g.into(), rate: RateKind::TruePositive });
        }
        if c.fp + c.tn == 0 {
            return Err(EquityError::UndefinedRate { group: g.into(), rate: RateKind::FalsePositive });
        }
        tpr_by_group.insert(g, c.tp as f64 / (c.tp + c.fn_) as f64);
        fpr_by_group.insert(g, c.fp as f64 / (c.fp + c.tn) as f64);
    }
    let violation = (tpr_by_group[&Group::Zero] - tpr_by_group[&Group::One]).abs()
        + (fpr_by_group[&Group::Zero] - fpr_by_group[&Group::One]).abs();
    Ok(OutcomeReport {
        eo_violation: violation,
        tpr_by_group,
        fpr_by_group,
        equal_outcomes: violation <= epsilon,
    })
}

/// Per-group score cut-offs chosen by post-processing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupCutoffs {
    pub cutoffs: [f64; 2],
    pub eo_violation: f64,
}

impl GroupCutoffs {
    pub fn predict(&self, score: f64, grp: Group) -> bool {
        score >= self.cutoffs[grp.index()]
    }
}

/// Keep `base` as group 0's cut-off and pick group 1's cut-off (score >= cut-off
/// is positive) that minimizes the EO violation. Every distinct decision set
/// for group 1 is tried; ties go to the cut-off nearest `base`.
pub fn equalize_cutoff(scores: &[f64], labels: &[bool], groups: &[Group], base: f64) -> Result<GroupCutoffs> {
    if scores.len() != labels.len() || scores.len() != groups.len() {
        return Err(EquityError::DimensionMismatch { expected: scores.len(), found: labels.len().min(groups.len()) });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(EquityError::NonFinite("scores"));
    }
    let preds: Vec<bool> = scores.iter().map(|&s| s >= base).collect();
    let reference = eo_violation(&preds, labels, groups, DEFAULT_EPSILON)?;
    let tpr0 = reference.tpr_by_group[&Group::Zero];
    let fpr0 = reference.fpr_by_group[&Group::Zero];

    let mut ones: Vec<(f64, bool)> = scores
        .iter()
        .zip(labels)
        .zip(groups)
        .filter(|(_, &g)| g == Group::One)
        .map(|((&s, &l), _)| (s, l))
        .collect();
    ones.sort_by(|a, b| b.0.total_cmp(&a.0));
    let pos = ones.iter().filter(|(_, l)| *l).count() as f64;
    let neg = ones.len() as f64 - pos;

    // Cut-off above every score: nobody in group 1 is positive.
    let mut best_cut = ones.first().map_or(base, |(s, _)| s.next_up()).max(base);
    let mut best = tpr0 + fpr0;
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < ones.len() {
        let cut = ones[i].0;
        while i < ones.len() && ones[i].0 == cut {
            if ones[i].1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let omega = (tpr0 - tp / pos).abs() + (fpr0 - fp / neg).abs();
        if omega < best - 1e-15 || ((omega - best).abs() <= 1e-15 && (cut - base).abs() < (best_cut - base).abs()) {
            best = omega;
            best_cut = cut;
        }
    }
    Ok(GroupCutoffs { cutoffs: [base, best_cut], eo_violation: best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Group::{One, Zero};

    #[test]
    fn hand_counted_example() {
        let labels = [true, true, false, false, true, false];
        let preds = [true, false, true, false, true, false];
        let groups = [Zero, Zero, Zero, Zero, One, One];
        let r = eo_violation(&preds, &labels, &groups, DEFAULT_EPSILON).unwrap();
        assert_eq!(r.tpr_by_group[&Zero], 0.5);
        assert_eq!(r.tpr_by_group[&One], 1.0);
        assert_eq!(r.fpr_by_group[&Zero], 0.5);
        assert_eq!(r.fpr_by_group[&One], 0.0);
        assert_eq!(r.eo_violation, 1.0);
        assert!(!r.equal_outcomes);
    }

    #[test]
    fn identical_behaviour_gives_zero() {
        let labels = [true, false, true, false];
        let preds = [true, false, true, false];
        let r = eo_violation(&preds, &labels, &[Zero, Zero, One, One], DEFAULT_EPSILON).unwrap();
        assert_eq!(r.eo_violation, 0.0);
        assert!(r.equal_outcomes);
    }

    #[test]
    fn signed_terms_do_not_cancel() {
        // TPR gap +0.5, FPR gap -0.5: a signed sum would report zero.
        let labels = [true, true, false, false, true, true, false, false];
        let preds = [true, true, false, false, true, false, true, false];
        let g = [Zero, Zero, Zero, Zero, One, One, One, One];
        let r = eo_violation(&preds, &labels, &g, DEFAULT_EPSILON).unwrap();
        assert_eq!(r.eo_violation, 1.0);
    }

    #[test]
    fn undefined_rates_are_errors() {
        let r = eo_violation(&[true, false, true], &[true, false, true], &[Zero, Zero, One], DEFAULT_EPSILON);
        assert!(matches!(r, Err(EquityError::UndefinedRate { group: 1, rate: RateKind::FalsePositive })));
        let r = eo_violation(&[true, false, false], &[true, false, false], &[Zero, Zero, One], DEFAULT_EPSILON);
        assert!(matches!(r, Err(EquityError::UndefinedRate { group: 1, rate: RateKind::TruePositive })));
        let r = eo_violation(&[true, false], &[true, false], &[Zero, Zero], DEFAULT_EPSILON);
        assert!(matches!(r, Err(EquityError::MissingGroup(1))));
        assert!(eo_violation(&[true], &[true, false], &[Zero], DEFAULT_EPSILON).is_err());
    }

    #[test]
    fn equalized_cutoff_matches_brute_force() {
        let scores = [0.9, 0.8, 0.3, 0.2, 0.7, 0.6, 0.55, 0.1, 0.4, 0.35];
        let labels = [true, false, true, false, true, true, false, false, true, false];
        let groups = [Zero, Zero, Zero, Zero, One, One, One, One, One, One];
        let fitted = equalize_cutoff(&scores, &labels, &groups, 0.5).unwrap();
        let mut brute = f64::INFINITY;
        for &c in scores.iter().chain([&2.0]) {
            let preds: Vec<bool> =
                scores.iter().zip(&groups).map(|(&s, &g)| if g == One { s >= c } else { s >= 0.5 }).collect();
            brute = brute.min(eo_violation(&preds, &labels, &groups, 0.0).unwrap().eo_violation);
        }
        assert!((fitted.eo_violation - brute).abs() < 1e-12);
        let preds: Vec<bool> = scores.iter().zip(&groups).map(|(&s, &g)| fitted.predict(s, g)).collect();
        let check = eo_violation(&preds, &labels, &groups, 0.0).unwrap().eo_violation;
        assert!((check - fitted.eo_violation).abs() < 1e-12);
    }
}
