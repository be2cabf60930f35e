//! Student-admissions case study: eight access/outcome/utilization regimes.
//!
//! Students are split into a history (train) and an arriving cohort (test).
//! Both models learn from history as observed. Arriving students reveal their
//! proxy features under the regime's access policy. Equal outcomes are
//! enforced by picking a separate score cut-off for one sex. Proxy positives
//! are then judged by the intended model, with intended-view obstacles
//! alleviated only under equal utilization.

pub mod uci;
pub mod views;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use uci::{load_uci_students, synthetic_uci_csv, StudentTable};
pub use views::{build_case_study_views, derive_obstacle_flags, CaseStudyViews};

use crate::error::{EquityError, Result};
use crate::learner::{predict, train, ModelSpec, TrainedModel};
use crate::metrics::{
    equalize_cutoff, eo_violation, model_access, utilization, EquityReport, EvaluationRecord, DEFAULT_EPSILON,
};
use crate::obstacle::{reveal, Group, Policy, Population};
use crate::scoring::train_test_split;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub input: PathBuf,
    /// Field delimiter of the input file.
    pub delimiter: char,
    pub regimes: Vec<RegimeFlags>,
    pub tau: f64,
    pub tau_o: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub formats: Vec<ReportFormat>,
    /// Final grade at or above which a student passes.
    pub pass_mark: i64,
    pub train_fraction: f64,
    /// Alleviation uplift for continuous columns, in population standard deviations.
    pub uplift_sd: f64,
    /// Per-student alleviation budget under the equal regimes; unbounded when absent.
    pub alleviation_budget: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: PathBuf::from("student-mat.csv"),
            delimiter: ';',
            regimes: RegimeFlags::all().to_vec(),
            tau: 0.85,
            tau_o: 0.15,
            epsilon: DEFAULT_EPSILON,
            seed: 7,
            out_dir: None,
            formats: vec![ReportFormat::Json],
            pass_mark: 10,
            train_fraction: 0.7,
            uplift_sd: 0.5,
            alleviation_budget: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EquityError::InvalidParameter(m));
        if self.input.as_os_str().is_empty() {
            return bad("input path is empty".into());
        }
        if !self.delimiter.is_ascii() {
            return bad(format!("delimiter {:?} is not ASCII", self.delimiter));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau {} not in (0, 1]", self.tau));
        }
        if !(0.0..1.0).contains(&self.tau_o) {
            return bad(format!("tau_o {} not in [0, 1)", self.tau_o));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return bad(format!("epsilon {} is negative", self.epsilon));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} not in (0, 1)", self.train_fraction));
        }
        if !(self.uplift_sd > 0.0 && self.uplift_sd.is_finite()) {
            return bad(format!("uplift_sd {} must be positive", self.uplift_sd));
        }
        if !(0..=20).contains(&self.pass_mark) {
            return bad(format!("pass_mark {} not in 0..=20", self.pass_mark));
        }
        if let Some(b) = self.alleviation_budget {
            Policy::new(b)?;
        }
        if self.regimes.is_empty() {
            return bad("no regimes selected".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegimeFlags {
    pub equal_access: bool,
    pub equal_outcome: bool,
    pub equal_utilization: bool,
}

impl RegimeFlags {
    pub const FULL_EQUITY: RegimeFlags = RegimeFlags { equal_access: true, equal_outcome: true, equal_utilization: true };
    pub const NO_EQUITY: RegimeFlags = RegimeFlags { equal_access: false, equal_outcome: false, equal_utilization: false };

    pub fn all() -> [RegimeFlags; 8] {
        std::array::from_fn(|i| RegimeFlags {
            equal_access: i & 4 != 0,
            equal_outcome: i & 2 != 0,
            equal_utilization: i & 1 != 0,
        })
    }

    /// Short name such as `eq_acc-neq_out-eq_util`.
    pub fn name(&self) -> String {
        let part = |on: bool, what: &str| format!("{}_{what}", if on { "eq" } else { "neq" });
        format!(
            "{}-{}-{}",
            part(self.equal_access, "acc"),
            part(self.equal_outcome, "out"),
            part(self.equal_utilization, "util")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeResult {
    pub regime: RegimeFlags,
    pub name: String,
    /// Share of arriving students predicted admissible, by sex (0 = M, 1 = F).
    pub positive_rate_by_group: BTreeMap<Group, f64>,
    pub cutoffs: [f64; 2],
    pub report: Option<EquityReport>,
    /// Whether the outcome gate `omega <= tau_o` held.
    pub outcome_within_tolerance: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RegimeResult {
    pub fn tp_share(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.utilization.true_positive_share)
    }

    pub fn eo_violation(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.outcome.eo_violation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyResult {
    pub n_students: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub flag_rate: f64,
    pub proxy_model: TrainedModel,
    pub intended_model: TrainedModel,
    pub regimes: Vec<RegimeResult>,
}

impl CaseStudyResult {
    pub fn regime(&self, flags: RegimeFlags) -> Option<&RegimeResult> {
        self.regimes.iter().find(|r| r.regime == flags)
    }
}

fn history_model(pop: &Population, rows: &[usize], seed: u64) -> Result<TrainedModel> {
    let spec = ModelSpec::logistic(pop.feature_names.clone())?;
    let (x, y): (Vec<Vec<f64>>, Vec<bool>) =
        rows.iter().map(|&r| (pop.individuals[r].x.clone(), pop.individuals[r].y)).unzip();
    train(&spec, &x, &y, seed)
}

pub fn run_case_study(cfg: &RunConfig) -> Result<CaseStudyResult> {
    cfg.validate()?;
    let table = uci::load_with_delimiter(&cfg.input, cfg.delimiter as u8)?;
    run_on_table(&table, cfg)
}

pub fn run_on_table(table: &StudentTable, cfg: &RunConfig) -> Result<CaseStudyResult> {
    cfg.validate()?;
    let views = build_case_study_views(table, cfg)?;
    run_on_views(&views, cfg)
}

pub fn run_on_views(views: &CaseStudyViews, cfg: &RunConfig) -> Result<CaseStudyResult> {
    let n = views.proxy_view.len();
    if n < 4 {
        return Err(EquityError::EmptyInput("student table (need at least 4 students)"));
    }
    let (train_rows, test_rows) = train_test_split(n, cfg.train_fraction, cfg.seed);
    let proxy_model = history_model(&views.proxy_view, &train_rows, cfg.seed)?;
    let intended_model = history_model(&views.intended_view, &train_rows, cfg.seed)?;
    let test = views.proxy_view.subset(&test_rows);
    let test_intended = views.intended_view.subset(&test_rows);

    let regimes = cfg
        .regimes
        .iter()
        .map(|&flags| run_regime(flags, views, &test, &test_intended, &proxy_model, &intended_model, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(CaseStudyResult {
        n_students: n,
        n_train: train_rows.len(),
        n_test: test_rows.len(),
        flag_rate: views.obstacle_flags.iter().filter(|&&f| f).count() as f64 / n as f64,
        proxy_model,
        intended_model,
        regimes,
    })
}

fn run_regime(
    flags: RegimeFlags,
    views: &CaseStudyViews,
    test: &Population,
    test_intended: &Population,
    proxy_model: &TrainedModel,
    intended_model: &TrainedModel,
    cfg: &RunConfig,
) -> Result<RegimeResult> {
    let equal = cfg.alleviation_budget.map_or(Ok(Policy::full()), Policy::new)?;
    let access_policy = if flags.equal_access { equal } else { Policy::none() };
    let utilization_policy = if flags.equal_utilization { equal } else { Policy::none() };
    let access = model_access(test, &views.proxy_obstacles, access_policy)?;

    let mut scores = Vec::with_capacity(test.len());
    let mut labels = Vec::with_capacity(test.len());
    let groups: Vec<Group> = test.individuals.iter().map(|i| i.grp).collect();
    for ind in &test.individuals {
        let rev = reveal(ind, &views.proxy_obstacles, access_policy)?;
        scores.push(proxy_model.score(&rev.x_rev)?);
        labels.push(rev.y_rev);
    }
    let mut result = RegimeResult {
        regime: flags,
        name: flags.name(),
        positive_rate_by_group: BTreeMap::new(),
        cutoffs: [proxy_model.cutoff(); 2],
        report: None,
        outcome_within_tolerance: None,
        error: None,
    };
    if flags.equal_outcome {
        match equalize_cutoff(&scores, &labels, &groups, proxy_model.cutoff()) {
            Ok(c) => result.cutoffs = c.cutoffs,
            Err(e) if e.is_degenerate_metric() => {
                result.error = Some(e.to_string());
                return Ok(result);
            }
            Err(e) => return Err(e),
        }
    }
    let preds: Vec<bool> = scores.iter().zip(&groups).map(|(&s, g)| s >= result.cutoffs[g.index()]).collect();
    for g in Group::BOTH {
        let (hit, total) = preds
            .iter()
            .zip(&groups)
            .filter(|(_, &gg)| gg == g)
            .fold((0usize, 0usize), |(h, t), (&p, _)| (h + usize::from(p), t + 1));
        if total > 0 {
            result.positive_rate_by_group.insert(g, hit as f64 / total as f64);
        }
    }

    let outcome = match eo_violation(&preds, &labels, &groups, cfg.epsilon) {
        Ok(o) => o,
        Err(e) if e.is_degenerate_metric() => {
            result.error = Some(e.to_string());
            return Ok(result);
        }
        Err(e) => return Err(e),
    };
    result.outcome_within_tolerance = Some(outcome.eo_violation <= cfg.tau_o);

    let mut records = Vec::new();
    for (i, ind) in test.individuals.iter().enumerate().filter(|(i, _)| preds[*i]) {
        let rev = reveal(&test_intended.individuals[i], &views.intended_obstacles, utilization_policy)?;
        records.push(EvaluationRecord {
            id: ind.id.clone(),
            grp: ind.grp,
            y_pt: true,
            y_tt: predict(intended_model, &rev.x_rev)?,
        });
    }
    match utilization(&records) {
        Ok(u) => result.report = Some(EquityReport::new(access, outcome, u, None)),
        Err(e) if e.is_degenerate_metric() => result.error = Some(e.to_string()),
        Err(e) => return Err(e),
    }
    Ok(result)
}
