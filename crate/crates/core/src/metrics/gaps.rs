//! Feature, label and obstacle gaps between a proxy and an intended model.
//!
//! Two feature names are equivalent when they agree after trimming,
//! lower-casing, and collapsing runs of whitespace and underscores.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{EquityError, Result};
use crate::obstacle::ObstacleModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleGap {
    /// Intended affected features with no equivalent among proxy affected features.
    pub unmatched_affected_features: usize,
    /// Sum of `|alpha_T - alpha_P|` over matched affected features.
    pub alpha_l1_distance_on_matched: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub gamma_x: Vec<u8>,
    pub gamma_l: Vec<f64>,
    pub obstacle_gap: ObstacleGap,
}

pub fn normalize_feature_name(name: &str) -> String {
    name.split(|c: char| c.is_whitespace() || c == '_')
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

fn check_unique(names: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(normalize_feature_name(n)) {
            return Err(EquityError::DuplicateName(n.clone()));
        }
    }
    Ok(())
}

/// For each intended feature, the index of the first equivalent proxy feature.
pub fn feature_matching(proxy_features: &[String], intended_features: &[String]) -> Vec<Option<usize>> {
    let proxy: Vec<String> = proxy_features.iter().map(|n| normalize_feature_name(n)).collect();
    intended_features
        .iter()
        .map(|t| {
            let t = normalize_feature_name(t);
            proxy.iter().position(|p| *p == t)
        })
        .collect()
}

/// 0 where the intended feature has an equivalent proxy feature, 1 otherwise.
pub fn feature_proxy_gap(proxy_features: &[String], intended_features: &[String]) -> Result<Vec<u8>> {
    if intended_features.is_empty() {
        return Err(EquityError::EmptyInput("intended feature list"));
    }
    check_unique(intended_features)?;
    Ok(feature_matching(proxy_features, intended_features)
        .into_iter()
        .map(|m| if m.is_some() { 0 } else { 1 })
        .collect())
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// `omega_T[i] - omega_P[j]` where intended feature `i` matches proxy feature
/// `j` with the same importance sign, `omega_T[i]` everywhere else.
pub fn label_proxy_gap(omega_p: &[f64], omega_t: &[f64], matching: &[Option<usize>]) -> Result<Vec<f64>> {
    if matching.len() != omega_t.len() {
        return Err(EquityError::DimensionMismatch { expected: omega_t.len(), found: matching.len() });
    }
    omega_t
        .iter()
        .zip(matching)
        .map(|(&wt, m)| match *m {
            Some(j) => {
                let wp = *omega_p.get(j).ok_or(EquityError::IndexOutOfRange { index: j, len: omega_p.len() })?;
                Ok(if sign(wt) == sign(wp) { wt - wp } else { wt })
            }
            None => Ok(wt),
        })
        .collect()
}

pub fn obstacle_gap(
    proxy: (&ObstacleModel, &[String]),
    intended: (&ObstacleModel, &[String]),
) -> Result<ObstacleGap> {
    let (om_p, names_p) = proxy;
    let (om_t, names_t) = intended;
    for (om, names) in [(om_p, names_p), (om_t, names_t)] {
        if om.dim() != names.len() {
            return Err(EquityError::DimensionMismatch { expected: names.len(), found: om.dim() });
        }
    }
    let proxy_affected: Vec<(String, f64)> = om_p
        .affected_features()
        .iter()
        .map(|&j| (normalize_feature_name(&names_p[j]), om_p.alpha()[j]))
        .collect();
    let mut unmatched = 0;
    let mut distance = 0.0;
    for &i in om_t.affected_features() {
        let name = normalize_feature_name(&names_t[i]);
        match proxy_affected.iter().find(|(n, _)| *n == name) {
            Some((_, alpha_p)) => distance += (om_t.alpha()[i] - alpha_p).abs(),
            None => unmatched += 1,
        }
    }
    Ok(ObstacleGap { unmatched_affected_features: unmatched, alpha_l1_distance_on_matched: distance })
}

/// Everything needed to compare a proxy and an intended model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub feature_names: Vec<String>,
    pub importance: Vec<f64>,
    pub obstacles: ObstacleModel,
}

pub fn proxy_gaps(proxy: &ModelProfile, intended: &ModelProfile) -> Result<GapReport> {
    for p in [proxy, intended] {
        if p.importance.len() != p.feature_names.len() {
            return Err(EquityError::DimensionMismatch { expected: p.feature_names.len(), found: p.importance.len() });
        }
    }
    let gamma_x = feature_proxy_gap(&proxy.feature_names, &intended.feature_names)?;
    let matching = feature_matching(&proxy.feature_names, &intended.feature_names);
    let gamma_l = label_proxy_gap(&proxy.importance, &intended.importance, &matching)?;
    let obstacle_gap = obstacle_gap(
        (&proxy.obstacles, &proxy.feature_names),
        (&intended.obstacles, &intended.feature_names),
    )?;
    Ok(GapReport { gamma_x, gamma_l, obstacle_gap })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn name_equivalence() {
        assert_eq!(normalize_feature_name("  Team__Player "), "team player");
        assert_eq!(normalize_feature_name("team   player"), "team player");
    }

    #[test]
    fn bail_features_share_nothing() {
        let proxy = names(&["criminal history", "current crime", "age at arrest"]);
        let intended = names(&["job", "support system", "financial stability"]);
        assert_eq!(feature_proxy_gap(&proxy, &intended).unwrap(), vec![1, 1, 1]);
        assert_eq!(feature_proxy_gap(&intended, &intended).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn feature_gap_errors() {
        assert!(feature_proxy_gap(&names(&["a"]), &[]).is_err());
        assert!(matches!(
            feature_proxy_gap(&names(&["a"]), &names(&["b", "B "])),
            Err(EquityError::DuplicateName(_))
        ));
    }

    #[test]
    fn label_gap_branches() {
        let same = [0.5, -0.3, 0.2];
        let matching = vec![Some(0), Some(1), Some(2)];
        assert_eq!(label_proxy_gap(&same, &same, &matching).unwrap(), vec![0.0, 0.0, 0.0]);

        let gap = label_proxy_gap(&[0.6], &[0.4, 0.6], &[None, Some(0)]).unwrap();
        assert_eq!(gap, vec![0.4, 0.6 - 0.6]);

        // opposite sign: copy branch
        let gap = label_proxy_gap(&[-0.5], &[0.5], &[Some(0)]).unwrap();
        assert_eq!(gap, vec![0.5]);

        assert!(label_proxy_gap(&[0.1], &[0.5], &[Some(3)]).is_err());
        assert!(label_proxy_gap(&[0.1], &[0.5], &[]).is_err());
    }

    #[test]
    fn obstacle_gap_examples() {
        let f = names(&["a", "b"]);
        let om = ObstacleModel::uniform(2, [0, 1], 1.0).unwrap();
        let g = obstacle_gap((&om, &f), (&om, &f)).unwrap();
        assert_eq!(g, ObstacleGap { unmatched_affected_features: 0, alpha_l1_distance_on_matched: 0.0 });

        let proxy = names(&["p1", "p2", "p3"]);
        let intended = names(&["t1", "t2", "t3", "t4"]);
        let om_p = ObstacleModel::uniform(3, [0, 1, 2], 1.0).unwrap();
        let om_t = ObstacleModel::uniform(4, [0, 1, 2, 3], 1.0).unwrap();
        let g = obstacle_gap((&om_p, &proxy), (&om_t, &intended)).unwrap();
        assert_eq!(g.unmatched_affected_features, 4);
        assert_eq!(g.alpha_l1_distance_on_matched, 0.0);

        let om_p = ObstacleModel::new(vec![1.0, 2.0], [0, 1].into()).unwrap();
        let om_t = ObstacleModel::new(vec![2.0, 2.0], [0, 1].into()).unwrap();
        let g = obstacle_gap((&om_p, &f), (&om_t, &f)).unwrap();
        assert_eq!(g.unmatched_affected_features, 0);
        assert_eq!(g.alpha_l1_distance_on_matched, 1.0);
    }
}
