//! Probabilistic binary classifiers: the base learners of the ensemble and
//! the scorers inside quantifiers.
//!
//! Two learners are provided: L2-regularized logistic regression fit by
//! full-batch gradient descent on standardized features, and gradient
//! boosted depth-1 trees (stumps) on the logistic loss. A training set with
//! a single label yields a constant model that emits that label's base rate.

pub mod boosting;
pub mod logistic;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    LogisticRegression,
    GradientBoostedStumps,
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic_regression" | "logistic" | "glm" => Ok(ClassifierKind::LogisticRegression),
            "gradient_boosted_stumps" | "boosting" | "gbm" => {
                Ok(ClassifierKind::GradientBoostedStumps)
            }
            other => Err(Error::InvalidParameter(format!(
                "unknown classifier kind `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    /// L2 penalty on the logistic weights (the bias is not penalized).
    pub l2_penalty: f64,
    pub learning_rate: f64,
    /// Gradient-descent iterations for logistic regression, boosting rounds
    /// for stumps.
    pub max_iterations: usize,
    /// Logistic regression stops once the gradient norm drops below this.
    pub tolerance: f64,
    pub seed: u64,
    pub threshold: f64,
}

impl ClassifierSpec {
    pub fn logistic() -> Self {
        ClassifierSpec {
            kind: ClassifierKind::LogisticRegression,
            l2_penalty: 1e-3,
            learning_rate: 1.0,
            max_iterations: 1000,
            tolerance: 1e-6,
            seed: 0,
            threshold: 0.5,
        }
    }

    pub fn boosting() -> Self {
        ClassifierSpec {
            kind: ClassifierKind::GradientBoostedStumps,
            l2_penalty: 0.0,
            learning_rate: 0.1,
            max_iterations: 100,
            tolerance: 1e-6,
            seed: 0,
            threshold: 0.5,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return bad("l2_penalty must be >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be >= 1");
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be > 0");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie in (0, 1)");
        }
        Ok(())
    }
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        Self::logistic()
    }
}

/// Per-feature affine map `x ↦ (x − mean) / scale` fit on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    #[serde(with = "exact::vec")]
    pub mean: Vec<f64>,
    #[serde(with = "exact::vec")]
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(d: &Dataset) -> Self {
        let m = d.dim();
        let n = d.len().max(1) as f64;
        let mut mean = vec![0.0; m];
        for inst in d.iter() {
            for (acc, x) in mean.iter_mut().zip(inst.features) {
                *acc += x;
            }
        }
        mean.iter_mut().for_each(|x| *x /= n);
        let mut var = vec![0.0; m];
        for inst in d.iter() {
            for ((acc, x), mu) in var.iter_mut().zip(inst.features).zip(&mean) {
                *acc += (x - mu) * (x - mu);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (((o, x), mu), s) in out.iter_mut().zip(x).zip(&self.mean).zip(&self.scale) {
            *o = (x - mu) / s;
        }
    }

    /// Standardized copy of the whole feature matrix, row-major.
    pub fn transform(&self, d: &Dataset) -> Vec<f64> {
        let m = d.dim();
        let mut out = vec![0.0; d.len() * m];
        for (i, chunk) in out.chunks_exact_mut(m.max(1)).enumerate().take(d.len()) {
            self.apply_into(d.row(i), chunk);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Model {
    Constant {
        #[serde(with = "exact::scalar")]
        probability: f64,
    },
    Logistic(logistic::LogisticModel),
    Boosted(boosting::BoostedStumps),
}

/// A fitted classifier `x ↦ P(Y = 1 | x)` with a decision threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub kind: ClassifierKind,
    #[serde(with = "exact::scalar")]
    pub threshold: f64,
    pub dim: usize,
    pub model: Model,
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^s)` without overflow.
pub fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

/// Fits a classifier on `d`.
pub fn train(spec: &ClassifierSpec, d: &Dataset) -> Result<TrainedClassifier> {
    spec.validate()?;
    if d.is_empty() {
        return Err(Error::InvalidDataset("cannot train on an empty dataset".into()));
    }
    let positives = d.positives();
    let model = if positives == 0 || positives == d.len() {
        Model::Constant {
            probability: if positives == 0 { 0.0 } else { 1.0 },
        }
    } else {
        match spec.kind {
            ClassifierKind::LogisticRegression => Model::Logistic(logistic::fit(spec, d)),
            ClassifierKind::GradientBoostedStumps => {
                Model::Boosted(boosting::fit(spec, d).0)
            }
        }
    };
    Ok(TrainedClassifier {
        kind: spec.kind,
        threshold: spec.threshold,
        dim: d.dim(),
        model,
    })
}

impl TrainedClassifier {
    /// Decision score `s` with `predict_proba = sigmoid(s)`; `None` for
    /// constant models.
    fn score_unchecked(&self, x: &[f64]) -> Option<f64> {
        match &self.model {
            Model::Constant { .. } => None,
            Model::Logistic(m) => Some(m.score(x)),
            Model::Boosted(m) => Some(m.score(x)),
        }
    }

    fn proba_unchecked(&self, x: &[f64]) -> f64 {
        match &self.model {
            Model::Constant { probability } => *probability,
            _ => sigmoid(self.score_unchecked(x).expect("non-constant model")),
        }
    }

    fn check_dim(&self, actual: usize) -> Result<()> {
        if actual != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual,
            });
        }
        Ok(())
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(self.proba_unchecked(x))
    }

    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        Ok((self.predict_proba(x)? >= self.threshold) as u8)
    }

    pub fn predict_proba_batch(&self, d: &Dataset) -> Result<Vec<f64>> {
        self.check_dim(d.dim())?;
        Ok((0..d.len()).map(|i| self.proba_unchecked(d.row(i))).collect())
    }

    /// Thresholded predictions for every row; `proba >= threshold` maps to 1.
    pub fn predict_batch(&self, d: &Dataset) -> Result<Vec<u8>> {
        Ok(self
            .predict_proba_batch(d)?
            .into_iter()
            .map(|p| (p >= self.threshold) as u8)
            .collect())
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.model, Model::Constant { .. })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Free-function form of [`TrainedClassifier::predict_proba`].
pub fn predict_proba(c: &TrainedClassifier, x: &[f64]) -> Result<f64> {
    c.predict_proba(x)
}

/// Free-function form of [`TrainedClassifier::predict_batch`].
pub fn predict_batch(c: &TrainedClassifier, d: &Dataset) -> Result<Vec<u8>> {
    c.predict_batch(d)
}

/// Serde adapters writing `f64` as shortest round-trip decimal strings.
pub(crate) mod exact {
    fn parse<E: serde::de::Error>(s: &str) -> Result<f64, E> {
        s.parse::<f64>()
            .map_err(|e| E::custom(format!("invalid real `{s}`: {e}")))
    }

    pub mod scalar {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
            s.serialize_str(&format!("{x:?}"))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
            super::parse(&String::deserialize(d)?)
        }
    }

    pub mod vec {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(xs.iter().map(|x| format!("{x:?}")))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<String>::deserialize(d)?
                .iter()
                .map(|s| super::parse(s))
                .collect()
        }
    }
}
