//! Synthetic cohorts and the multi-round inequity loop.
//!
//! Ability is a single latent factor shared by the proxy and intended views,
//! and its distribution does not depend on group. Groups differ only in how
//! often they face obstacles. Obstacles subtract a positive amount from the
//! affected features, so `z` always dominates `x`.
//!
//! Each round the proxy model is retrained on the curated data, a new cohort
//! arrives and reveals itself under the regime's access policy, and the
//! proxy positives are evaluated by a fixed intended model. Only those
//! positives, labeled by the intended model, are appended to the curated
//! data. When access is left unalleviated, the obstacles come back at
//! evaluation time with extra severity (`resurfacing_severity`).

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{EquityError, Result};
use crate::learner::{train, Hyperparams, ModelSpec, TrainedModel};
use crate::metrics::{equalize_cutoff, eo_violation, model_access, utilization, EvaluationRecord, DEFAULT_EPSILON};
use crate::obstacle::{reveal, Group, Individual, ObstacleModel, Policy, Population};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_per_round: usize,
    pub d_proxy: usize,
    pub d_intended: usize,
    /// Share of individuals in group 1.
    pub group_fraction: f64,
    pub obstacle_prob_by_group: BTreeMap<Group, f64>,
    pub alpha_proxy: Vec<f64>,
    pub alpha_intended: Vec<f64>,
    pub obstacle_severity: f64,
    /// Extra intended-view degradation for obstructed individuals whose access was not alleviated.
    pub resurfacing_severity: f64,
    /// Correlation of each feature with the latent ability factor.
    pub latent_loading: f64,
    pub proxy_coefficients: Vec<f64>,
    pub intended_coefficients: Vec<f64>,
    pub label_threshold: f64,
    pub label_noise: f64,
    pub seed: u64,
    /// Gradient-descent iterations for every model trained in the loop.
    pub train_iterations: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_per_round: 3000,
            d_proxy: 3,
            d_intended: 4,
            group_fraction: 0.4,
            obstacle_prob_by_group: BTreeMap::from([(Group::Zero, 0.1), (Group::One, 0.6)]),
            alpha_proxy: vec![1.0, 1.0, 0.0],
            alpha_intended: vec![1.0, 1.0, 1.0, 0.0],
            obstacle_severity: 1.0,
            resurfacing_severity: 3.0,
            latent_loading: 0.8,
            proxy_coefficients: vec![1.0, 1.0, 1.0],
            intended_coefficients: vec![1.0, 1.0, 1.0, 1.0],
            label_threshold: 0.0,
            label_noise: 0.05,
            seed: 42,
            train_iterations: 500,
        }
    }
}

fn bad(msg: String) -> EquityError {
    EquityError::InvalidParameter(msg)
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_round < 2 {
            return Err(bad("n_per_round must be at least 2".into()));
        }
        if self.d_proxy == 0 || self.d_intended == 0 {
            return Err(bad("feature dimensions must be at least 1".into()));
        }
        if !(self.group_fraction > 0.0 && self.group_fraction < 1.0) {
            return Err(bad(format!("group_fraction {} not in (0, 1)", self.group_fraction)));
        }
        for g in Group::BOTH {
            let p = self.obstacle_prob(g);
            if !(0.0..=1.0).contains(&p) {
                return Err(bad(format!("obstacle probability {p} for group {g}")));
            }
        }
        for (name, v, d) in [
            ("alpha_proxy", &self.alpha_proxy, self.d_proxy),
            ("alpha_intended", &self.alpha_intended, self.d_intended),
            ("proxy_coefficients", &self.proxy_coefficients, self.d_proxy),
            ("intended_coefficients", &self.intended_coefficients, self.d_intended),
        ] {
            if v.len() != d {
                return Err(bad(format!("{name} has length {}, expected {d}", v.len())));
            }
            if v.iter().any(|a| !a.is_finite()) {
                return Err(EquityError::NonFinite("synthetic config vector"));
            }
        }
        if self.alpha_proxy.iter().chain(&self.alpha_intended).any(|&a| a < 0.0) {
            return Err(bad("obstacle weights must be nonnegative".into()));
        }
        if !(self.obstacle_severity >= 0.0 && self.resurfacing_severity >= 0.0) {
            return Err(bad("severities must be nonnegative".into()));
        }
        if !(self.latent_loading >= 0.0 && self.latent_loading <= 1.0) {
            return Err(bad(format!("latent_loading {} not in [0, 1]", self.latent_loading)));
        }
        if !(self.label_noise >= 0.0 && self.label_noise < 0.5) {
            return Err(bad(format!("label_noise {} not in [0, 0.5)", self.label_noise)));
        }
        if !self.label_threshold.is_finite() {
            return Err(EquityError::NonFinite("label_threshold"));
        }
        if self.train_iterations == 0 {
            return Err(bad("train_iterations must be positive".into()));
        }
        Ok(())
    }

    pub fn obstacle_prob(&self, g: Group) -> f64 {
        self.obstacle_prob_by_group.get(&g).copied().unwrap_or(0.0)
    }

    /// The group facing obstacles more often (group 1 on ties).
    pub fn disadvantaged_group(&self) -> Group {
        if self.obstacle_prob(Group::Zero) > self.obstacle_prob(Group::One) {
            Group::Zero
        } else {
            Group::One
        }
    }

    pub fn proxy_obstacles(&self) -> Result<ObstacleModel> {
        affected_model(&self.alpha_proxy)
    }

    pub fn intended_obstacles(&self) -> Result<ObstacleModel> {
        affected_model(&self.alpha_intended)
    }

    pub fn proxy_feature_names(&self) -> Vec<String> {
        (0..self.d_proxy).map(|j| format!("p{j}")).collect()
    }

    pub fn intended_feature_names(&self) -> Vec<String> {
        (0..self.d_intended).map(|j| format!("t{j}")).collect()
    }
}

fn affected_model(alpha: &[f64]) -> Result<ObstacleModel> {
    let affected = alpha.iter().enumerate().filter(|(_, &a)| a > 0.0).map(|(j, _)| j).collect();
    ObstacleModel::new(alpha.to_vec(), affected)
}

/// One round's arrivals seen through both views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCohort {
    pub round: usize,
    pub proxy: Population,
    /// Intended view with the base obstacle degradation.
    pub intended: Population,
    /// Intended view with the resurfacing degradation added on top.
    pub intended_resurfaced: Population,
    pub obstructed: Vec<bool>,
}

fn round_seed(seed: u64, round: usize) -> u64 {
    seed.wrapping_add((round as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn label(coefficients: &[f64], features: &[f64], threshold: f64, flip: bool) -> bool {
    let s: f64 = coefficients.iter().zip(features).map(|(w, v)| w * v).sum();
    (s > threshold) != flip
}

fn latent_features(rng: &mut ChaCha8Rng, ability: f64, loading: f64, d: usize) -> Vec<f64> {
    let noise_scale = (1.0 - loading * loading).sqrt();
    (0..d)
        .map(|_| {
            let e: f64 = StandardNormal.sample(rng);
            loading * ability + noise_scale * e
        })
        .collect()
}

fn degradation(rng: &mut ChaCha8Rng, alpha: &[f64], severity: f64) -> Vec<f64> {
    alpha
        .iter()
        .map(|&a| if a > 0.0 { severity * (0.5 + rng.random::<f64>()) } else { 0.0 })
        .collect()
}

fn degrade(z: &[f64], amount: &[f64]) -> Vec<f64> {
    z.iter().zip(amount).map(|(v, d)| v - d).collect()
}

pub fn generate_cohort(cfg: &SyntheticConfig, round: usize) -> Result<SyntheticCohort> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(round_seed(cfg.seed, round));
    let n = cfg.n_per_round;
    let mut proxy = Vec::with_capacity(n);
    let mut intended = Vec::with_capacity(n);
    let mut resurfaced = Vec::with_capacity(n);
    let mut obstructed = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("r{round}-{i}");
        let grp = if rng.random::<f64>() < cfg.group_fraction { Group::One } else { Group::Zero };
        let ability: f64 = StandardNormal.sample(&mut rng);
        let zp = latent_features(&mut rng, ability, cfg.latent_loading, cfg.d_proxy);
        let zt = latent_features(&mut rng, ability, cfg.latent_loading, cfg.d_intended);
        let hit = rng.random::<f64>() < cfg.obstacle_prob(grp);
        let flip_p = rng.random::<f64>() < cfg.label_noise;
        let flip_t = rng.random::<f64>() < cfg.label_noise;
        let shift_p = degradation(&mut rng, &cfg.alpha_proxy, cfg.obstacle_severity);
        let shift_t = degradation(&mut rng, &cfg.alpha_intended, cfg.obstacle_severity);
        let extra_t = degradation(&mut rng, &cfg.alpha_intended, cfg.resurfacing_severity);

        let (xp, xt, xr) = if hit {
            let xt = degrade(&zt, &shift_t);
            let xr = degrade(&xt, &extra_t);
            (degrade(&zp, &shift_p), xt, xr)
        } else {
            (zp.clone(), zt.clone(), zt.clone())
        };
        let t = cfg.label_threshold;
        proxy.push(Individual {
            id: id.clone(),
            y_prime: label(&cfg.proxy_coefficients, &zp, t, flip_p),
            y: label(&cfg.proxy_coefficients, &xp, t, flip_p),
            z: zp,
            x: xp,
            grp,
        });
        let y_prime_t = label(&cfg.intended_coefficients, &zt, t, flip_t);
        intended.push(Individual {
            id: id.clone(),
            y_prime: y_prime_t,
            y: label(&cfg.intended_coefficients, &xt, t, flip_t),
            z: zt.clone(),
            x: xt,
            grp,
        });
        resurfaced.push(Individual {
            id,
            y_prime: y_prime_t,
            y: label(&cfg.intended_coefficients, &xr, t, flip_t),
            z: zt,
            x: xr,
            grp,
        });
        obstructed.push(hit);
    }
    Ok(SyntheticCohort {
        round,
        proxy: Population::new(proxy, cfg.proxy_feature_names(), "grp")?,
        intended: Population::new(intended, cfg.intended_feature_names(), "grp")?,
        intended_resurfaced: Population::new(resurfaced, cfg.intended_feature_names(), "grp")?,
        obstructed,
    })
}

/// The proxy view of one round's cohort.
pub fn generate_population(cfg: &SyntheticConfig, round: usize) -> Result<Population> {
    Ok(generate_cohort(cfg, round)?.proxy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuratedRow {
    pub features: Vec<f64>,
    pub label: bool,
    pub grp: Group,
    pub round: usize,
    pub source_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CuratedDataset {
    pub rows: Vec<CuratedRow>,
}

/// A proxy-positive individual after intended evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedPositive {
    pub id: String,
    pub grp: Group,
    /// Proxy-view features as revealed.
    pub features: Vec<f64>,
    pub y_tt: bool,
}

pub fn curate_ground_truth(positives: &[EvaluatedPositive], round: usize) -> CuratedDataset {
    CuratedDataset {
        rows: positives
            .iter()
            .map(|p| CuratedRow {
                features: p.features.clone(),
                label: p.y_tt,
                grp: p.grp,
                round,
                source_id: p.id.clone(),
            })
            .collect(),
    }
}

impl CuratedDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn extend(&mut self, other: CuratedDataset) {
        self.rows.extend(other.rows);
    }

    pub fn rows_from_round(&self, round: usize) -> usize {
        self.rows.iter().filter(|r| r.round == round).count()
    }

    /// Features with the group indicator appended, as the proxy model sees them.
    fn training_data(&self) -> (Vec<Vec<f64>>, Vec<bool>) {
        self.rows.iter().map(|r| (with_group(&r.features, r.grp), r.label)).unzip()
    }
}

fn with_group(features: &[f64], grp: Group) -> Vec<f64> {
    let mut v = features.to_vec();
    v.push(grp.index() as f64);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    NoEquity,
    AccessOnly,
    AccessAndOutcome,
    FullEquity,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::NoEquity, Regime::AccessOnly, Regime::AccessAndOutcome, Regime::FullEquity];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::NoEquity => "no_equity",
            Regime::AccessOnly => "access_only",
            Regime::AccessAndOutcome => "access_and_outcome",
            Regime::FullEquity => "full_equity",
        }
    }

    pub fn equal_access(self) -> bool {
        self != Regime::NoEquity
    }

    pub fn equal_outcome(self) -> bool {
        matches!(self, Regime::AccessAndOutcome | Regime::FullEquity)
    }

    pub fn equal_utilization(self) -> bool {
        self == Regime::FullEquity
    }
}

impl std::str::FromStr for Regime {
    type Err = EquityError;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| bad(format!("unknown regime {s:?}")))
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopRecord {
    pub round: usize,
    pub regime: Regime,
    pub psi: f64,
    pub omega: Option<f64>,
    pub zeta: Option<f64>,
    pub pos_rate: [f64; 2],
    /// Within each group, the share of this round's curated rows labeled 0.
    pub fp_share: [Option<f64>; 2],
    /// The disadvantaged group's share of this round's curated rows labeled 1.
    pub disadvantaged_positive_share: Option<f64>,
    pub curated_size: usize,
    /// Proxy positives curated this round.
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<String>,
}

impl LoopRecord {
    pub fn fp_share_gap(&self) -> Option<f64> {
        Some((self.fp_share[0]? - self.fp_share[1]?).abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopTrajectory {
    pub regime: Regime,
    pub seed_size: usize,
    pub disadvantaged_group: Group,
    pub records: Vec<LoopRecord>,
    pub curated: CuratedDataset,
}

impl LoopTrajectory {
    pub const CSV_HEADER: [&'static str; 12] = [
        "round",
        "regime",
        "psi",
        "omega",
        "zeta",
        "pos_rate_g0",
        "pos_rate_g1",
        "fp_share_g0",
        "fp_share_g1",
        "curated_size",
        "disadvantaged_positive_share",
        "event",
    ];

    /// Mean utilization over rounds where it was defined.
    pub fn mean_zeta(&self) -> Option<f64> {
        let z: Vec<f64> = self.records.iter().filter_map(|r| r.zeta).collect();
        (!z.is_empty()).then(|| z.iter().sum::<f64>() / z.len() as f64)
    }

    pub fn write_csv<W: Write>(trajectories: &[LoopTrajectory], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for t in trajectories {
            for r in &t.records {
                w.write_record([
                    r.round.to_string(),
                    r.regime.as_str().to_string(),
                    r.psi.to_string(),
                    opt(r.omega),
                    opt(r.zeta),
                    r.pos_rate[0].to_string(),
                    r.pos_rate[1].to_string(),
                    opt(r.fp_share[0]),
                    opt(r.fp_share[1]),
                    r.curated_size.to_string(),
                    opt(r.disadvantaged_positive_share),
                    r.event.clone().unwrap_or_default(),
                ])?;
            }
        }
        w.flush().map_err(|e| EquityError::io("<trajectory csv>", e))?;
        Ok(())
    }
}

fn loop_spec(names: Vec<String>, iterations: usize) -> Result<ModelSpec> {
    ModelSpec::new(
        names,
        crate::learner::FunctionClass::LogisticRegression,
        Hyperparams { iterations, ..Hyperparams::default() },
    )
}

fn access_policy(regime: Regime) -> Policy {
    if regime.equal_access() {
        Policy::full()
    } else {
        Policy::none()
    }
}

/// Train the fixed intended model on round-0 obstacle-free intended data.
fn intended_model(cfg: &SyntheticConfig, cohort: &SyntheticCohort) -> Result<TrainedModel> {
    let (x, y): (Vec<Vec<f64>>, Vec<bool>) =
        cohort.intended.individuals.iter().map(|ind| (ind.z.clone(), ind.y_prime)).unzip();
    let spec = loop_spec(cfg.intended_feature_names(), cfg.train_iterations)?;
    train(&spec, &x, &y, cfg.seed)
}

pub fn run_inequity_loop(cfg: &SyntheticConfig, rounds: usize, regime: Regime) -> Result<LoopTrajectory> {
    cfg.validate()?;
    if rounds == 0 {
        return Err(bad("rounds must be at least 1".into()));
    }
    let proxy_om = cfg.proxy_obstacles()?;
    let intended_om = cfg.intended_obstacles()?;
    let policy = access_policy(regime);
    let utilization_policy = if regime.equal_utilization() { Policy::full() } else { Policy::none() };
    let disadvantaged = cfg.disadvantaged_group();

    let seed_cohort = generate_cohort(cfg, 0)?;
    let evaluator = intended_model(cfg, &seed_cohort)?;
    let mut curated = CuratedDataset {
        rows: seed_cohort
            .proxy
            .individuals
            .iter()
            .map(|ind| {
                let rev = reveal(ind, &proxy_om, policy)?;
                Ok(CuratedRow { features: rev.x_rev, label: rev.y_rev, grp: ind.grp, round: 0, source_id: ind.id.clone() })
            })
            .collect::<Result<_>>()?,
    };
    let seed_size = curated.len();
    let mut names = cfg.proxy_feature_names();
    names.push("grp".into());
    let proxy_spec = loop_spec(names, cfg.train_iterations)?;

    let mut records = Vec::with_capacity(rounds);
    for round in 1..=rounds {
        let cohort = generate_cohort(cfg, round)?;
        let psi = model_access(&cohort.proxy, &proxy_om, policy)?.psi;
        let (x, y) = curated.training_data();
        let model = match train(&proxy_spec, &x, &y, round_seed(cfg.seed, round)) {
            Ok(m) => m,
            Err(e) if e.is_degenerate_metric() => {
                records.push(LoopRecord {
                    round,
                    regime,
                    psi,
                    omega: None,
                    zeta: None,
                    pos_rate: [0.0; 2],
                    fp_share: [None; 2],
                    disadvantaged_positive_share: None,
                    curated_size: curated.len(),
                    m: 0,
                    event: Some(format!("skipped: {e}")),
                });
                continue;
            }
            Err(e) => return Err(e),
        };

        let evaluation_view = if regime.equal_access() { &cohort.intended } else { &cohort.intended_resurfaced };
        let mut revealed = Vec::with_capacity(cohort.proxy.len());
        let mut scores = Vec::with_capacity(cohort.proxy.len());
        for ind in &cohort.proxy.individuals {
            let rev = reveal(ind, &proxy_om, policy)?;
            scores.push(model.score(&with_group(&rev.x_rev, ind.grp))?);
            revealed.push(rev);
        }
        let labels: Vec<bool> = revealed.iter().map(|r| r.y_rev).collect();
        let groups: Vec<Group> = cohort.proxy.individuals.iter().map(|i| i.grp).collect();
        let mut cutoffs = [model.cutoff(); 2];
        let mut event = None;
        if regime.equal_outcome() {
            match equalize_cutoff(&scores, &labels, &groups, model.cutoff()) {
                Ok(c) => cutoffs = c.cutoffs,
                Err(e) if e.is_degenerate_metric() => event = Some(format!("outcome equalization skipped: {e}")),
                Err(e) => return Err(e),
            }
        }
        let preds: Vec<bool> = scores.iter().zip(&groups).map(|(&s, g)| s >= cutoffs[g.index()]).collect();
        let omega = match eo_violation(&preds, &labels, &groups, DEFAULT_EPSILON) {
            Ok(r) => Some(r.eo_violation),
            Err(e) if e.is_degenerate_metric() => None,
            Err(e) => return Err(e),
        };

        let mut group_total = [0usize; 2];
        let mut group_pos = [0usize; 2];
        let mut positives = Vec::new();
        for (i, ind) in cohort.proxy.individuals.iter().enumerate() {
            group_total[ind.grp.index()] += 1;
            if !preds[i] {
                continue;
            }
            group_pos[ind.grp.index()] += 1;
            let rev_t = reveal(&evaluation_view.individuals[i], &intended_om, utilization_policy)?;
            positives.push(EvaluatedPositive {
                id: ind.id.clone(),
                grp: ind.grp,
                features: revealed[i].x_rev.clone(),
                y_tt: crate::learner::predict(&evaluator, &rev_t.x_rev)?,
            });
        }
        let pos_rate = [0, 1].map(|g| if group_total[g] == 0 { 0.0 } else { group_pos[g] as f64 / group_total[g] as f64 });

        let records_for_util: Vec<EvaluationRecord> = positives
            .iter()
            .map(|p| EvaluationRecord { id: p.id.clone(), grp: p.grp, y_pt: true, y_tt: p.y_tt })
            .collect();
        let (zeta, fp_share) = match utilization(&records_for_util) {
            Ok(u) => (
                Some(u.zeta),
                [Group::Zero, Group::One].map(|g| u.per_group_fp_rate.get(&g).copied()),
            ),
            Err(EquityError::NoPositives) => {
                event.get_or_insert_with(|| "no proxy positives".into());
                (None, [None; 2])
            }
            Err(e) => return Err(e),
        };
        let positive_labels = positives.iter().filter(|p| p.y_tt).count();
        let disadvantaged_positive_share = (positive_labels > 0).then(|| {
            positives.iter().filter(|p| p.y_tt && p.grp == disadvantaged).count() as f64 / positive_labels as f64
        });

        let m = positives.len();
        curated.extend(curate_ground_truth(&positives, round));
        records.push(LoopRecord {
            round,
            regime,
            psi,
            omega,
            zeta,
            pos_rate,
            fp_share,
            disadvantaged_positive_share,
            curated_size: curated.len(),
            m,
            event,
        });
    }
    Ok(LoopTrajectory { regime, seed_size, disadvantaged_group: disadvantaged, records, curated })
}
