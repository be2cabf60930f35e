//! Iterative equity scoring over proxy and intended model spaces.
//!
//! Each outer iteration draws a proxy candidate (feature set + model
//! function, and an access policy) and gates it on access. An accepted
//! candidate is trained and retrained until its equalized-odds violation is
//! within tolerance. The proxy positives on the held-out split are then
//! evaluated by intended-model candidates until utilization clears its
//! threshold. Every evaluation is recorded in the trace.
//!
//! Models learn from history as it was observed (nothing alleviated);
//! arriving individuals reveal themselves under the policy being evaluated.

use std::collections::{HashMap, HashSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EquityError, Result};
use crate::learner::{predict, train, ModelSpec, TrainedModel};
use crate::metrics::{composite_score, eo_violation, model_access, utilization, EvaluationRecord};
use crate::obstacle::{reveal, Group, ObstacleModel, Policy, Population};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpace {
    pub candidate_specs: Vec<ModelSpec>,
    pub dataset: Population,
    /// Obstacle weights over `dataset`'s full feature list.
    pub obstacle_model: ObstacleModel,
    pub candidate_policies: Vec<Policy>,
}

impl ModelSpace {
    pub fn validate(&self) -> Result<()> {
        if self.candidate_specs.is_empty() {
            return Err(EquityError::EmptyInput("candidate model specs"));
        }
        if self.candidate_policies.is_empty() {
            return Err(EquityError::EmptyInput("candidate policies"));
        }
        if self.obstacle_model.dim() != self.dataset.dim() {
            return Err(EquityError::DimensionMismatch {
                expected: self.dataset.dim(),
                found: self.obstacle_model.dim(),
            });
        }
        for spec in &self.candidate_specs {
            spec.validate()?;
            self.dataset.feature_indices(&spec.feature_names)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    /// Access and utilization threshold.
    pub tau: f64,
    /// Outcome (EO violation) threshold.
    pub tau_o: f64,
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    pub epsilon_outcomes: f64,
    pub seed: u64,
    pub train_fraction: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            tau: 0.85,
            tau_o: 0.15,
            max_outer_iters: 100,
            max_inner_iters: 25,
            epsilon_outcomes: crate::metrics::DEFAULT_EPSILON,
            seed: 0,
            train_fraction: 0.7,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(EquityError::InvalidParameter(format!("tau {} not in (0, 1]", self.tau)));
        }
        if !(self.tau_o >= 0.0 && self.tau_o < 1.0) {
            return Err(EquityError::InvalidParameter(format!("tau_o {} not in [0, 1)", self.tau_o)));
        }
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 {
            return Err(EquityError::InvalidParameter("iteration caps must be positive".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(EquityError::InvalidParameter(format!("train_fraction {}", self.train_fraction)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Access,
    Outcome,
    Utilization,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Access => "access",
            Phase::Outcome => "outcome",
            Phase::Utilization => "utilization",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    AccessGate,
    OutcomeGate,
    UtilizationGate,
    DegenerateMetric,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::AccessGate => "access_gate",
            RejectReason::OutcomeGate => "outcome_gate",
            RejectReason::UtilizationGate => "utilization_gate",
            RejectReason::DegenerateMetric => "degenerate_metric",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub inner: usize,
    pub phase: Phase,
    /// Proxy spec/policy for access and outcome records, intended ones for utilization records.
    pub spec_id: usize,
    pub policy_id: usize,
    pub psi: f64,
    pub omega: Option<f64>,
    pub zeta: Option<f64>,
    pub accepted: bool,
    pub reason: Option<RejectReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringTrace {
    pub records: Vec<TraceRecord>,
    pub score: Option<f64>,
    pub psi: Option<f64>,
    pub omega: Option<f64>,
    pub zeta: Option<f64>,
    pub terminated_reason: Termination,
}

impl ScoringTrace {
    pub const CSV_HEADER: [&'static str; 9] =
        ["iter", "spec_id", "policy_id", "psi", "omega", "zeta", "phase", "accepted", "reason"];

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            w.write_record([
                r.iter.to_string(),
                r.spec_id.to_string(),
                r.policy_id.to_string(),
                r.psi.to_string(),
                opt(r.omega),
                opt(r.zeta),
                r.phase.as_str().to_string(),
                r.accepted.to_string(),
                r.reason.map(|x| x.as_str().to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| EquityError::io("<trace csv>", e))?;
        Ok(())
    }
}

/// True when, within every outer iteration, outcome records only follow an
/// accepted access record and utilization records only follow an accepted
/// outcome record.
pub fn phases_well_ordered(trace: &ScoringTrace) -> bool {
    let mut current_iter = usize::MAX;
    let mut access_ok = false;
    let mut outcome_ok = false;
    for r in &trace.records {
        if r.iter != current_iter {
            current_iter = r.iter;
            access_ok = false;
            outcome_ok = false;
        }
        match r.phase {
            Phase::Access => {
                if access_ok || outcome_ok {
                    return false;
                }
                access_ok = r.accepted;
            }
            Phase::Outcome => {
                if !access_ok || outcome_ok || r.omega.is_none() && r.reason != Some(RejectReason::DegenerateMetric) {
                    return false;
                }
                outcome_ok = r.accepted;
            }
            Phase::Utilization => {
                if !outcome_ok {
                    return false;
                }
            }
        }
    }
    true
}

/// Shuffled decks of candidate indices, reshuffled when exhausted.
#[derive(Debug, Clone)]
pub struct CandidateSampler {
    rng: ChaCha8Rng,
    n_specs: usize,
    n_policies: usize,
    spec_deck: Vec<usize>,
    policy_deck: Vec<usize>,
}

impl CandidateSampler {
    pub fn new(n_specs: usize, n_policies: usize, seed: u64) -> Result<Self> {
        if n_specs == 0 || n_policies == 0 {
            return Err(EquityError::EmptyInput("model space"));
        }
        Ok(CandidateSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            n_specs,
            n_policies,
            spec_deck: Vec::new(),
            policy_deck: Vec::new(),
        })
    }

    pub fn for_space(space: &ModelSpace, seed: u64) -> Result<Self> {
        CandidateSampler::new(space.candidate_specs.len(), space.candidate_policies.len(), seed)
    }

    fn draw(deck: &mut Vec<usize>, n: usize, rng: &mut ChaCha8Rng) -> usize {
        if deck.is_empty() {
            deck.extend(0..n);
            deck.shuffle(rng);
        }
        deck.pop().expect("deck refilled")
    }

    pub fn next_spec(&mut self) -> usize {
        Self::draw(&mut self.spec_deck, self.n_specs, &mut self.rng)
    }

    pub fn next_policy(&mut self) -> usize {
        Self::draw(&mut self.policy_deck, self.n_policies, &mut self.rng)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub spec_id: usize,
    pub policy_id: usize,
    pub spec: &'a ModelSpec,
    pub policy: Policy,
}

pub fn sample_candidate<'a>(space: &'a ModelSpace, sampler: &mut CandidateSampler) -> Result<Candidate<'a>> {
    if space.candidate_specs.is_empty() || space.candidate_policies.is_empty() {
        return Err(EquityError::EmptyInput("model space"));
    }
    let spec_id = sampler.next_spec() % space.candidate_specs.len();
    let policy_id = sampler.next_policy() % space.candidate_policies.len();
    Ok(Candidate { spec_id, policy_id, spec: &space.candidate_specs[spec_id], policy: space.candidate_policies[policy_id] })
}

/// Deterministic `train_fraction` / rest split of `0..n` by seeded shuffle.
pub fn train_test_split(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((n as f64) * train_fraction).round() as usize;
    let cut = cut.clamp(usize::from(n > 1), n.saturating_sub(1).max(1).min(n));
    let test = idx.split_off(cut);
    (idx, test)
}

/// Per-spec projection of a space's data.
struct Projected {
    pop: Population,
    om: ObstacleModel,
}

fn project(space: &ModelSpace, spec: &ModelSpec) -> Result<Projected> {
    let idx = space.dataset.feature_indices(&spec.feature_names)?;
    Ok(Projected { pop: space.dataset.project(&idx)?, om: space.obstacle_model.project(&idx)? })
}

/// Historical rows exactly as observed: obstacle-refrained features and labels.
fn history(pop: &Population, rows: &[usize]) -> (Vec<Vec<f64>>, Vec<bool>) {
    rows.iter().map(|&r| (pop.individuals[r].x.clone(), pop.individuals[r].y)).unzip()
}

/// Projections and fitted models per spec. Training rows are fixed for a
/// run, so each spec is fitted once.
struct SpecCache<'a> {
    space: &'a ModelSpace,
    train_rows: Vec<usize>,
    seed: u64,
    projected: HashMap<usize, Projected>,
    fitted: HashMap<usize, TrainedModel>,
}

impl<'a> SpecCache<'a> {
    fn new(space: &'a ModelSpace, train_rows: Vec<usize>, seed: u64) -> Self {
        SpecCache { space, train_rows, seed, projected: HashMap::new(), fitted: HashMap::new() }
    }

    fn projection(&mut self, spec_id: usize) -> Result<&Projected> {
        if !self.projected.contains_key(&spec_id) {
            let proj = project(self.space, &self.space.candidate_specs[spec_id])?;
            self.projected.insert(spec_id, proj);
        }
        Ok(&self.projected[&spec_id])
    }

    fn model(&mut self, spec_id: usize) -> Result<(&Projected, &TrainedModel)> {
        if !self.fitted.contains_key(&spec_id) {
            let seed = mix_seed(self.seed, spec_id, 0);
            let rows = std::mem::take(&mut self.train_rows);
            let fitted = {
                let proj = self.projection(spec_id)?;
                let (x, y) = history(&proj.pop, &rows);
                train(&self.space.candidate_specs[spec_id], &x, &y, seed)
            };
            self.train_rows = rows;
            self.fitted.insert(spec_id, fitted?);
        }
        Ok((&self.projected[&spec_id], &self.fitted[&spec_id]))
    }
}

fn mix_seed(seed: u64, a: usize, b: usize) -> u64 {
    seed ^ (a as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (b as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

struct AcceptedProxy {
    omega: f64,
    positives: Vec<usize>,
}

pub fn run_equity_scoring(proxy_space: &ModelSpace, intended_space: &ModelSpace, cfg: &ScoringConfig) -> Result<ScoringTrace> {
    proxy_space.validate()?;
    intended_space.validate()?;
    cfg.validate()?;

    let (proxy_train, proxy_test) = train_test_split(proxy_space.dataset.len(), cfg.train_fraction, cfg.seed);
    let test_ids: HashSet<&str> = proxy_test.iter().map(|&r| proxy_space.dataset.individuals[r].id.as_str()).collect();
    let intended_rows: HashMap<&str, usize> = intended_space
        .dataset
        .individuals
        .iter()
        .enumerate()
        .map(|(i, ind)| (ind.id.as_str(), i))
        .collect();
    let intended_train: Vec<usize> = (0..intended_space.dataset.len())
        .filter(|&i| !test_ids.contains(intended_space.dataset.individuals[i].id.as_str()))
        .collect();

    let mut proxies = SpecCache::new(proxy_space, proxy_train, cfg.seed);
    let mut intended = SpecCache::new(intended_space, intended_train, cfg.seed.wrapping_add(1));
    let mut proxy_sampler = CandidateSampler::for_space(proxy_space, cfg.seed)?;
    let mut intended_sampler = CandidateSampler::for_space(intended_space, cfg.seed.wrapping_add(1))?;
    let budget = cfg.max_outer_iters.saturating_mul(cfg.max_inner_iters);
    let mut records: Vec<TraceRecord> = Vec::new();

    for iter in 0..cfg.max_outer_iters {
        if records.len() >= budget {
            break;
        }
        let cand = sample_candidate(proxy_space, &mut proxy_sampler)?;
        let proj = proxies.projection(cand.spec_id)?;
        let psi = model_access(&proj.pop, &proj.om, cand.policy)?.psi;
        let access_ok = psi >= cfg.tau;
        records.push(TraceRecord {
            iter,
            inner: 0,
            phase: Phase::Access,
            spec_id: cand.spec_id,
            policy_id: cand.policy_id,
            psi,
            omega: None,
            zeta: None,
            accepted: access_ok,
            reason: (!access_ok).then_some(RejectReason::AccessGate),
            detail: None,
        });
        if !access_ok {
            continue;
        }

        let Some(accepted) = outcome_phase(&mut proxies, cfg, iter, &cand, psi, &proxy_test, budget, &mut records)? else {
            continue;
        };
        if accepted.positives.is_empty() {
            records.push(TraceRecord {
                iter,
                inner: 0,
                phase: Phase::Utilization,
                spec_id: cand.spec_id,
                policy_id: cand.policy_id,
                psi,
                omega: Some(accepted.omega),
                zeta: None,
                accepted: false,
                reason: Some(RejectReason::DegenerateMetric),
                detail: Some(EquityError::NoPositives.to_string()),
            });
            continue;
        }

        for inner in 0..cfg.max_inner_iters {
            if records.len() >= budget {
                break;
            }
            let icand = sample_candidate(intended_space, &mut intended_sampler)?;
            let mut rec = TraceRecord {
                iter,
                inner,
                phase: Phase::Utilization,
                spec_id: icand.spec_id,
                policy_id: icand.policy_id,
                psi,
                omega: Some(accepted.omega),
                zeta: None,
                accepted: false,
                reason: None,
                detail: None,
            };
            match evaluate_utilization(proxy_space, &mut intended, &icand, &accepted.positives, &intended_rows) {
                Ok(zeta) => {
                    rec.zeta = Some(zeta);
                    if zeta >= cfg.tau {
                        rec.accepted = true;
                        records.push(rec);
                        let score = composite_score(psi, accepted.omega, zeta);
                        return Ok(ScoringTrace {
                            records,
                            score: Some(score),
                            psi: Some(psi),
                            omega: Some(accepted.omega),
                            zeta: Some(zeta),
                            terminated_reason: Termination::Converged,
                        });
                    }
                    rec.reason = Some(RejectReason::UtilizationGate);
                }
                Err(e) if e.is_degenerate_metric() => {
                    rec.reason = Some(RejectReason::DegenerateMetric);
                    rec.detail = Some(e.to_string());
                }
                Err(e) => return Err(e),
            }
            records.push(rec);
        }
    }

    Ok(ScoringTrace { records, score: None, psi: None, omega: None, zeta: None, terminated_reason: Termination::IterationCap })
}

#[allow(clippy::too_many_arguments)]
fn outcome_phase(
    proxies: &mut SpecCache<'_>,
    cfg: &ScoringConfig,
    iter: usize,
    first: &Candidate<'_>,
    psi: f64,
    test_rows: &[usize],
    budget: usize,
    records: &mut Vec<TraceRecord>,
) -> Result<Option<AcceptedProxy>> {
    // Re-sampling the model function keeps the accepted feature set, so the
    // access result stays valid.
    let compatible: Vec<usize> = proxies
        .space
        .candidate_specs
        .iter()
        .enumerate()
        .filter(|(_, s)| s.feature_names == first.spec.feature_names)
        .map(|(i, _)| i)
        .collect();
    let mut resampler = CandidateSampler::new(compatible.len(), 1, mix_seed(cfg.seed, iter, 0))?;
    let mut spec_id = first.spec_id;

    for inner in 0..cfg.max_inner_iters {
        if records.len() >= budget {
            return Ok(None);
        }
        if inner > 0 {
            spec_id = compatible[resampler.next_spec()];
        }
        let mut rec = TraceRecord {
            iter,
            inner,
            phase: Phase::Outcome,
            spec_id,
            policy_id: first.policy_id,
            psi,
            omega: None,
            zeta: None,
            accepted: false,
            reason: None,
            detail: None,
        };
        match evaluate_outcome(proxies, spec_id, first.policy, test_rows, cfg.epsilon_outcomes) {
            Ok((omega, positives)) => {
                rec.omega = Some(omega);
                if omega <= cfg.tau_o {
                    rec.accepted = true;
                    records.push(rec);
                    return Ok(Some(AcceptedProxy { omega, positives }));
                }
                rec.reason = Some(RejectReason::OutcomeGate);
            }
            Err(e) if e.is_degenerate_metric() => {
                rec.reason = Some(RejectReason::DegenerateMetric);
                rec.detail = Some(e.to_string());
            }
            Err(e) => return Err(e),
        }
        records.push(rec);
    }
    Ok(None)
}

/// Reveal the test split under `policy`, predict with the spec's fitted
/// proxy model, and return the EO violation plus the rows predicted positive.
fn evaluate_outcome(
    proxies: &mut SpecCache<'_>,
    spec_id: usize,
    policy: Policy,
    test_rows: &[usize],
    epsilon: f64,
) -> Result<(f64, Vec<usize>)> {
    let (proj, model) = proxies.model(spec_id)?;
    let mut preds = Vec::with_capacity(test_rows.len());
    let mut labels = Vec::with_capacity(test_rows.len());
    let mut groups: Vec<Group> = Vec::with_capacity(test_rows.len());
    let mut positives = Vec::new();
    for &r in test_rows {
        let ind = &proj.pop.individuals[r];
        let rev = reveal(ind, &proj.om, policy)?;
        let p = predict(model, &rev.x_rev)?;
        if p {
            positives.push(r);
        }
        preds.push(p);
        labels.push(rev.y_rev);
        groups.push(ind.grp);
    }
    let omega = eo_violation(&preds, &labels, &groups, epsilon)?.eo_violation;
    Ok((omega, positives))
}

fn evaluate_utilization(
    proxy_space: &ModelSpace,
    intended: &mut SpecCache<'_>,
    cand: &Candidate<'_>,
    positives: &[usize],
    intended_rows: &HashMap<&str, usize>,
) -> Result<f64> {
    let (proj, model) = intended.model(cand.spec_id)?;
    let mut records = Vec::with_capacity(positives.len());
    for &r in positives {
        let source = &proxy_space.dataset.individuals[r];
        let &row = intended_rows
            .get(source.id.as_str())
            .ok_or_else(|| EquityError::JoinFailure { id: source.id.clone() })?;
        let rev = reveal(&proj.pop.individuals[row], &proj.om, cand.policy)?;
        records.push(EvaluationRecord {
            id: source.id.clone(),
            grp: source.grp,
            y_pt: true,
            y_tt: predict(model, &rev.x_rev)?,
        });
    }
    Ok(utilization(&records)?.zeta)
}
