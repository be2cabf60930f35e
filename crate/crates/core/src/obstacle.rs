//! Individuals, obstacles, alleviation policies and the reveal rule.
//!
//! An individual carries two feature vectors: `z`, what they would present
//! with no obstacles, and `x`, what they present while obstacles are in
//! place. The obstacle magnitude is the weighted shortfall `<alpha, z - x>`.
//! A policy with per-individual budget `delta` reduces that magnitude to
//! `max(O - delta, 0)`; an individual whose reduced magnitude is zero reveals
//! `(z, y')`, everyone else reveals `(x, y)`.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{EquityError, Result};

/// Protected-group membership. Serialized as `0` / `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Group {
    Zero,
    One,
}

impl Group {
    pub const BOTH: [Group; 2] = [Group::Zero, Group::One];

    pub fn index(self) -> usize {
        match self {
            Group::Zero => 0,
            Group::One => 1,
        }
    }

    pub fn other(self) -> Group {
        match self {
            Group::Zero => Group::One,
            Group::One => Group::Zero,
        }
    }
}

impl From<Group> for u8 {
    fn from(g: Group) -> u8 {
        g.index() as u8
    }
}

impl TryFrom<u8> for Group {
    type Error = EquityError;

    fn try_from(v: u8) -> Result<Group> {
        match v {
            0 => Ok(Group::Zero),
            1 => Ok(Group::One),
            other => Err(EquityError::InvalidParameter(format!("group must be 0 or 1, got {other}"))),
        }
    }
}

impl std::fmt::Display for Group {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.index())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: String,
    /// Obstacle-free feature values.
    pub z: Vec<f64>,
    /// Obstacle-refrained feature values.
    pub x: Vec<f64>,
    /// Obstacle-free label.
    pub y_prime: bool,
    /// Obstacle-refrained label.
    pub y: bool,
    pub grp: Group,
}

impl Individual {
    /// An individual who faces no obstacles: `x == z` and `y == y'`.
    pub fn unobstructed(id: impl Into<String>, features: Vec<f64>, label: bool, grp: Group) -> Self {
        Individual {
            id: id.into(),
            x: features.clone(),
            z: features,
            y_prime: label,
            y: label,
            grp,
        }
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub individuals: Vec<Individual>,
    pub feature_names: Vec<String>,
    pub group_name: String,
}

impl Population {
    pub fn new(individuals: Vec<Individual>, feature_names: Vec<String>, group_name: impl Into<String>) -> Result<Self> {
        let d = feature_names.len();
        let mut ids = HashSet::with_capacity(individuals.len());
        for ind in &individuals {
            if ind.z.len() != d {
                return Err(EquityError::DimensionMismatch { expected: d, found: ind.z.len() });
            }
            if ind.x.len() != d {
                return Err(EquityError::DimensionMismatch { expected: d, found: ind.x.len() });
            }
            if !ind.z.iter().chain(&ind.x).all(|v| v.is_finite()) {
                return Err(EquityError::NonFinite("individual features"));
            }
            if !ids.insert(ind.id.as_str()) {
                return Err(EquityError::DuplicateName(ind.id.clone()));
            }
        }
        Ok(Population { individuals, feature_names, group_name: group_name.into() })
    }

    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Index of each requested feature name in this population's feature list.
    pub fn feature_indices(&self, names: &[String]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|f| f == n)
                    .ok_or_else(|| EquityError::MissingColumn(n.clone()))
            })
            .collect()
    }

    /// Restrict every individual to the given feature columns, in order.
    pub fn project(&self, indices: &[usize]) -> Result<Population> {
        let d = self.dim();
        if let Some(&bad) = indices.iter().find(|&&i| i >= d) {
            return Err(EquityError::IndexOutOfRange { index: bad, len: d });
        }
        let pick = |v: &[f64]| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let individuals = self
            .individuals
            .iter()
            .map(|ind| Individual { z: pick(&ind.z), x: pick(&ind.x), ..ind.clone() })
            .collect();
        Ok(Population {
            individuals,
            feature_names: indices.iter().map(|&i| self.feature_names[i].clone()).collect(),
            group_name: self.group_name.clone(),
        })
    }

    /// Keep the individuals at the given row positions, in order.
    pub fn subset(&self, rows: &[usize]) -> Population {
        Population {
            individuals: rows.iter().map(|&r| self.individuals[r].clone()).collect(),
            feature_names: self.feature_names.clone(),
            group_name: self.group_name.clone(),
        }
    }
}

/// Per-feature obstacle weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ObstacleModelRepr")]
pub struct ObstacleModel {
    alpha: Vec<f64>,
    affected_features: BTreeSet<usize>,
}

#[derive(Deserialize)]
struct ObstacleModelRepr {
    alpha: Vec<f64>,
    affected_features: BTreeSet<usize>,
}

impl TryFrom<ObstacleModelRepr> for ObstacleModel {
    type Error = EquityError;

    fn try_from(r: ObstacleModelRepr) -> Result<Self> {
        ObstacleModel::new(r.alpha, r.affected_features)
    }
}

impl ObstacleModel {
    pub fn new(alpha: Vec<f64>, affected_features: BTreeSet<usize>) -> Result<Self> {
        let d = alpha.len();
        for (i, &a) in alpha.iter().enumerate() {
            if !a.is_finite() || a < 0.0 {
                return Err(EquityError::InvalidParameter(format!("alpha[{i}] = {a} must be finite and >= 0")));
            }
            if a != 0.0 && !affected_features.contains(&i) {
                return Err(EquityError::InvalidParameter(format!(
                    "alpha[{i}] = {a} is nonzero but feature {i} is not affected"
                )));
            }
        }
        if let Some(&i) = affected_features.iter().find(|&&i| i >= d) {
            return Err(EquityError::IndexOutOfRange { index: i, len: d });
        }
        Ok(ObstacleModel { alpha, affected_features })
    }

    /// Weight `weight` on every listed feature, zero elsewhere.
    pub fn uniform(dim: usize, affected: impl IntoIterator<Item = usize>, weight: f64) -> Result<Self> {
        let affected: BTreeSet<usize> = affected.into_iter().collect();
        let mut alpha = vec![0.0; dim];
        for &i in &affected {
            if i >= dim {
                return Err(EquityError::IndexOutOfRange { index: i, len: dim });
            }
            alpha[i] = weight;
        }
        ObstacleModel::new(alpha, affected)
    }

    /// No feature is affected.
    pub fn none(dim: usize) -> Self {
        ObstacleModel { alpha: vec![0.0; dim], affected_features: BTreeSet::new() }
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn affected_features(&self) -> &BTreeSet<usize> {
        &self.affected_features
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// The same model restricted to a subset of feature columns.
    pub fn project(&self, indices: &[usize]) -> Result<ObstacleModel> {
        let d = self.dim();
        let mut alpha = Vec::with_capacity(indices.len());
        let mut affected = BTreeSet::new();
        for (new, &old) in indices.iter().enumerate() {
            if old >= d {
                return Err(EquityError::IndexOutOfRange { index: old, len: d });
            }
            alpha.push(self.alpha[old]);
            if self.affected_features.contains(&old) {
                affected.insert(new);
            }
        }
        ObstacleModel::new(alpha, affected)
    }
}

/// Alleviation policy with a per-individual budget.
///
/// Serialized as `{"delta": <number>}`, or `{"delta": "inf"}` for an unbounded budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "PolicyRepr", try_from = "PolicyRepr")]
pub struct Policy {
    delta: f64,
}

#[derive(Serialize, Deserialize)]
struct PolicyRepr {
    delta: Budget,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Budget {
    Finite(f64),
    Named(String),
}

impl From<Policy> for PolicyRepr {
    fn from(p: Policy) -> Self {
        let delta = if p.delta.is_infinite() { Budget::Named("inf".into()) } else { Budget::Finite(p.delta) };
        PolicyRepr { delta }
    }
}

impl TryFrom<PolicyRepr> for Policy {
    type Error = EquityError;

    fn try_from(r: PolicyRepr) -> Result<Self> {
        match r.delta {
            Budget::Finite(d) => Policy::new(d),
            Budget::Named(s) if s.eq_ignore_ascii_case("inf") => Ok(Policy::full()),
            Budget::Named(s) => Err(EquityError::InvalidParameter(format!("policy budget {s:?} is not a number or \"inf\""))),
        }
    }
}

impl Policy {
    pub fn new(delta: f64) -> Result<Self> {
        if delta.is_nan() || delta < 0.0 {
            return Err(EquityError::InvalidParameter(format!("policy budget must be >= 0, got {delta}")));
        }
        Ok(Policy { delta })
    }

    /// A policy that alleviates nothing.
    pub fn none() -> Self {
        Policy { delta: 0.0 }
    }

    /// A policy that alleviates every obstacle, however large.
    pub fn full() -> Self {
        Policy { delta: f64::INFINITY }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevealedPair {
    pub x_rev: Vec<f64>,
    pub y_rev: bool,
    pub fully_accessed: bool,
}

/// True iff `z_i >= x_i` everywhere and `z_i > x_i` somewhere.
pub fn dominates(z: &[f64], x: &[f64]) -> Result<bool> {
    if z.len() != x.len() {
        return Err(EquityError::DimensionMismatch { expected: z.len(), found: x.len() });
    }
    let mut strict = false;
    for (zi, xi) in z.iter().zip(x) {
        if zi < xi {
            return Ok(false);
        }
        strict |= zi > xi;
    }
    Ok(strict)
}

/// `<alpha, z - x>`. Any coordinate with `z_i < x_i` is a domain error.
pub fn obstacle_magnitude(model: &ObstacleModel, ind: &Individual) -> Result<f64> {
    let d = model.dim();
    for len in [ind.z.len(), ind.x.len()] {
        if len != d {
            return Err(EquityError::DimensionMismatch { expected: d, found: len });
        }
    }
    let mut total = 0.0;
    for (i, ((a, z), x)) in model.alpha.iter().zip(&ind.z).zip(&ind.x).enumerate() {
        if z < x {
            return Err(EquityError::DominanceViolated { index: i, z: *z, x: *x });
        }
        total += a * (z - x);
    }
    Ok(total)
}

/// `max(obstacle - delta, 0)`.
pub fn apply_policy(obstacle: f64, policy: Policy) -> Result<f64> {
    if obstacle.is_nan() || obstacle < 0.0 {
        return Err(EquityError::NegativeObstacle(obstacle));
    }
    Ok((obstacle - policy.delta).max(0.0))
}

pub fn reveal(ind: &Individual, model: &ObstacleModel, policy: Policy) -> Result<RevealedPair> {
    let magnitude = obstacle_magnitude(model, ind)?;
    let fully_accessed = magnitude == 0.0 || apply_policy(magnitude, policy)? == 0.0;
    Ok(if fully_accessed {
        RevealedPair { x_rev: ind.z.clone(), y_rev: ind.y_prime, fully_accessed }
    } else {
        RevealedPair { x_rev: ind.x.clone(), y_rev: ind.y, fully_accessed }
    })
}

/// Reveal every individual of a population.
pub fn reveal_all(pop: &Population, model: &ObstacleModel, policy: Policy) -> Result<Vec<RevealedPair>> {
    pop.individuals.iter().map(|ind| reveal(ind, model, policy)).collect()
}
