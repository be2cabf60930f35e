//! Model functions used for both the proxy and the intended model.
//!
//! Two classes are supported: an L2-regularised logistic regression fit by
//! full-batch gradient descent on standardised features, and a Euclidean-norm
//! threshold rule. Feature importance is the L1-normalised vector of the
//! standardised logistic coefficients, so importances are comparable across
//! features and keep their sign.

use std::collections::HashSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{EquityError, Result};

const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionClass {
    LogisticRegression,
    NormThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub iterations: usize,
    pub l2: f64,
    /// Probability cut-off for the logistic class. Scores equal to it are positive.
    pub decision_threshold: f64,
    /// Fixed norm cut-off for the threshold class; fitted from data when absent.
    pub threshold: Option<f64>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams { learning_rate: 0.1, iterations: 2000, l2: 1e-4, decision_threshold: 0.5, threshold: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub feature_names: Vec<String>,
    pub function_class: FunctionClass,
    #[serde(default)]
    pub hyperparams: Hyperparams,
}

impl ModelSpec {
    pub fn new(feature_names: Vec<String>, function_class: FunctionClass, hyperparams: Hyperparams) -> Result<Self> {
        let spec = ModelSpec { feature_names, function_class, hyperparams };
        spec.validate()?;
        Ok(spec)
    }

    pub fn logistic<S: Into<String>>(features: impl IntoIterator<Item = S>) -> Result<Self> {
        ModelSpec::new(
            features.into_iter().map(Into::into).collect(),
            FunctionClass::LogisticRegression,
            Hyperparams::default(),
        )
    }

    pub fn norm_threshold<S: Into<String>>(features: impl IntoIterator<Item = S>, threshold: f64) -> Result<Self> {
        ModelSpec::new(
            features.into_iter().map(Into::into).collect(),
            FunctionClass::NormThreshold,
            Hyperparams { threshold: Some(threshold), ..Hyperparams::default() },
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_names.is_empty() {
            return Err(EquityError::EmptyInput("model feature list"));
        }
        let mut seen = HashSet::new();
        for n in &self.feature_names {
            if !seen.insert(n) {
                return Err(EquityError::DuplicateName(n.clone()));
            }
        }
        let h = &self.hyperparams;
        if !(h.learning_rate > 0.0 && h.learning_rate.is_finite()) {
            return Err(EquityError::InvalidParameter(format!("learning_rate {}", h.learning_rate)));
        }
        if !(h.l2 >= 0.0 && h.l2.is_finite()) {
            return Err(EquityError::InvalidParameter(format!("l2 {}", h.l2)));
        }
        if !(h.decision_threshold > 0.0 && h.decision_threshold < 1.0) {
            return Err(EquityError::InvalidParameter(format!(
                "decision_threshold {} not in (0, 1)",
                h.decision_threshold
            )));
        }
        if let Some(t) = h.threshold {
            if !t.is_finite() {
                return Err(EquityError::NonFinite("norm threshold"));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Parameters {
    Logistic {
        /// Coefficients on standardised features.
        coefficients: Vec<f64>,
        intercept: f64,
        means: Vec<f64>,
        scales: Vec<f64>,
    },
    NormThreshold {
        threshold: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub parameters: Parameters,
    pub importance: Vec<f64>,
    pub decision_threshold: f64,
}

impl TrainedModel {
    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// Logistic: probability of the positive class. Threshold class: the
    /// Euclidean norm of the input.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(EquityError::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        Ok(match &self.parameters {
            Parameters::Logistic { coefficients, intercept, means, scales } => {
                let mut s = *intercept;
                for i in 0..x.len() {
                    s += coefficients[i] * (x[i] - means[i]) / scales[i];
                }
                sigmoid(s)
            }
            Parameters::NormThreshold { .. } => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        })
    }

    /// The cut-off `score` is compared against.
    pub fn cutoff(&self) -> f64 {
        match &self.parameters {
            Parameters::Logistic { .. } => self.decision_threshold,
            Parameters::NormThreshold { threshold } => *threshold,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<TrainedModel> {
        let model: TrainedModel = serde_json::from_str(text)?;
        model.spec.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| EquityError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<TrainedModel> {
        let text = std::fs::read_to_string(path).map_err(|e| EquityError::io(path, e))?;
        TrainedModel::from_json(&text)
    }
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(s))` without overflow.
fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

fn check_table(dim: usize, features: &[Vec<f64>], labels: &[bool]) -> Result<()> {
    if features.len() != labels.len() {
        return Err(EquityError::DimensionMismatch { expected: features.len(), found: labels.len() });
    }
    for row in features {
        if row.len() != dim {
            return Err(EquityError::DimensionMismatch { expected: dim, found: row.len() });
        }
        if !row.iter().all(|v| v.is_finite()) {
            return Err(EquityError::NonFinite("feature matrix"));
        }
    }
    Ok(())
}

/// Regularised mean log-loss and its gradient on an already standardised
/// design matrix: `(loss, d loss / d w, d loss / d b)`. The penalty is
/// `l2 / 2 * |w|^2` and leaves the intercept alone.
pub fn logistic_objective(weights: &[f64], intercept: f64, x: &[Vec<f64>], y: &[bool], l2: f64) -> (f64, Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let s = intercept + row.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>();
        let t = if label { 1.0 } else { 0.0 };
        loss += softplus(s) - t * s;
        let err = sigmoid(s) - t;
        for (g, a) in grad.iter_mut().zip(row) {
            *g += err * a;
        }
        grad_b += err;
    }
    loss /= n;
    loss += 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    for (g, w) in grad.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    (loss, grad, grad_b / n)
}

/// Signed coefficients scaled to unit L1 norm; all-zero stays all-zero.
pub fn normalize_importance(coefficients: &[f64]) -> Vec<f64> {
    let l1: f64 = coefficients.iter().map(|c| c.abs()).sum();
    if l1 == 0.0 {
        return vec![0.0; coefficients.len()];
    }
    coefficients.iter().map(|c| c / l1).collect()
}

pub fn train(spec: &ModelSpec, features: &[Vec<f64>], labels: &[bool], seed: u64) -> Result<TrainedModel> {
    spec.validate()?;
    check_table(spec.dim(), features, labels)?;
    if features.len() < 2 {
        return Err(EquityError::InvalidParameter(format!("need at least 2 rows, got {}", features.len())));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(EquityError::SingleClass);
    }
    match spec.function_class {
        FunctionClass::LogisticRegression => Ok(train_logistic(spec, features, labels, seed)),
        FunctionClass::NormThreshold => {
            let threshold = match spec.hyperparams.threshold {
                Some(t) => t,
                None => fit_norm_threshold(features, labels),
            };
            Ok(TrainedModel {
                spec: spec.clone(),
                parameters: Parameters::NormThreshold { threshold },
                importance: vec![0.0; spec.dim()],
                decision_threshold: spec.hyperparams.decision_threshold,
            })
        }
    }
}

fn train_logistic(spec: &ModelSpec, features: &[Vec<f64>], labels: &[bool], seed: u64) -> TrainedModel {
    let d = spec.dim();
    let n = features.len() as f64;
    let mut means = vec![0.0; d];
    for row in features {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    let mut scales = vec![0.0; d];
    for row in features {
        for ((s, v), m) in scales.iter_mut().zip(row).zip(&means) {
            *s += (v - m) * (v - m) / n;
        }
    }
    for s in &mut scales {
        *s = s.max(VARIANCE_FLOOR).sqrt();
    }
    let standardized: Vec<Vec<f64>> = features
        .iter()
        .map(|row| row.iter().zip(&means).zip(&scales).map(|((v, m), s)| (v - m) / s).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = Normal::new(0.0, 0.01).expect("valid normal");
    let mut weights: Vec<f64> = (0..d).map(|_| init.sample(&mut rng)).collect();
    let mut intercept = 0.0;
    let h = &spec.hyperparams;
    for _ in 0..h.iterations {
        let (_, grad, grad_b) = logistic_objective(&weights, intercept, &standardized, labels, h.l2);
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= h.learning_rate * g;
        }
        intercept -= h.learning_rate * grad_b;
    }

    TrainedModel {
        spec: spec.clone(),
        importance: normalize_importance(&weights),
        parameters: Parameters::Logistic { coefficients: weights, intercept, means, scales },
        decision_threshold: h.decision_threshold,
    }
}

/// Cut-off on the norm minimising training 0/1 error. Candidates are the
/// midpoints between consecutive distinct norms plus one value below all of
/// them; ties go to the smallest cut-off.
fn fit_norm_threshold(features: &[Vec<f64>], labels: &[bool]) -> f64 {
    let mut scored: Vec<(f64, bool)> = features
        .iter()
        .zip(labels)
        .map(|(r, &l)| (r.iter().map(|v| v * v).sum::<f64>().sqrt(), l))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Everything predicted positive to start with.
    let mut errors = scored.iter().filter(|(_, l)| !l).count();
    let mut best = (errors, scored[0].0 - 1.0);
    for i in 0..scored.len() {
        // Move row i to the negative side.
        if scored[i].1 {
            errors += 1;
        } else {
            errors -= 1;
        }
        let next = scored.get(i + 1).map(|r| r.0);
        match next {
            Some(v) if v == scored[i].0 => continue,
            Some(v) => {
                if errors < best.0 {
                    best = (errors, 0.5 * (scored[i].0 + v));
                }
            }
            None => {
                if errors < best.0 {
                    best = (errors, scored[i].0 + 1.0);
                }
            }
        }
    }
    best.1
}

pub fn predict(model: &TrainedModel, x_rev: &[f64]) -> Result<bool> {
    Ok(model.score(x_rev)? >= model.cutoff())
}

pub fn predict_all(model: &TrainedModel, rows: &[Vec<f64>]) -> Result<Vec<bool>> {
    rows.iter().map(|r| predict(model, r)).collect()
}

/// Mean log-loss for the logistic class, 0/1 error rate for the threshold class.
pub fn loss(model: &TrainedModel, features: &[Vec<f64>], labels: &[bool]) -> Result<f64> {
    if features.is_empty() {
        return Err(EquityError::EmptyInput("loss dataset"));
    }
    check_table(model.dim(), features, labels)?;
    let n = features.len() as f64;
    match model.parameters {
        Parameters::Logistic { .. } => {
            let mut total = 0.0;
            for (row, &l) in features.iter().zip(labels) {
                let p = model.score(row)?.clamp(1e-15, 1.0 - 1e-15);
                total -= if l { p.ln() } else { (1.0 - p).ln() };
            }
            Ok(total / n)
        }
        Parameters::NormThreshold { .. } => {
            let mut wrong = 0usize;
            for (row, &l) in features.iter().zip(labels) {
                if predict(model, row)? != l {
                    wrong += 1;
                }
            }
            Ok(wrong as f64 / n)
        }
    }
}

pub fn feature_importance(model: &TrainedModel) -> Vec<f64> {
    match &model.parameters {
        Parameters::Logistic { coefficients, .. } => normalize_importance(coefficients),
        Parameters::NormThreshold { .. } => vec![0.0; model.dim()],
    }
}
