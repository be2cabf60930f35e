use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{EquityError, Result};
use crate::obstacle::{apply_policy, obstacle_magnitude, Group, ObstacleModel, Policy, Population};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessReport {
    /// Share of individuals with zero residual obstacle.
    pub psi: f64,
    pub per_individual: Vec<bool>,
    /// Access rate within each group present.
    pub per_group: BTreeMap<Group, f64>,
}

pub fn model_access(pop: &Population, om: &ObstacleModel, policy: Policy) -> Result<AccessReport> {
    if pop.is_empty() {
        return Err(EquityError::EmptyInput("population"));
    }
    let per_individual = pop
        .individuals
        .iter()
        .map(|ind| Ok(apply_policy(obstacle_magnitude(om, ind)?, policy)? == 0.0))
        .collect::<Result<Vec<bool>>>()?;

    let mut counts: BTreeMap<Group, (usize, usize)> = BTreeMap::new();
    for (ind, &ok) in pop.individuals.iter().zip(&per_individual) {
        let c = counts.entry(ind.grp).or_default();
        c.0 += ok as usize;
        c.1 += 1;
    }
    let accessed = per_individual.iter().filter(|&&b| b).count();
    Ok(AccessReport {
        psi: accessed as f64 / per_individual.len() as f64,
        per_group: counts.into_iter().map(|(g, (a, n))| (g, a as f64 / n as f64)).collect(),
        per_individual,
    })
}
