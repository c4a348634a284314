//! The prevalence-aware ensemble.
//!
//! **Training.** The training set is split by group. For every group `z` a
//! quantifier is fit on `D^z`, and for every grid prevalence `θ_j` a
//! classifier is fit on a resample of `D^z` whose positive fraction is
//! `θ_j` (see [`crate::sampling::pp_sample`]).
//!
//! **Prediction.** The test set is split by group. For each group the
//! quantifier estimates the slice prevalence `q̂^z`; every classifier of the
//! group predicts the whole slice, giving prediction prevalences `ρ̂^z_j`;
//! the classifier `J_z = argmin_j |ρ̂^z_j − q̂^z|` (ties to the smallest `θ`)
//! supplies the group's predictions.
//!
//! If the group's quantifiers satisfy `|ρ^z − q̂^z| ≤ δ1` and its
//! classifiers satisfy `|θ_j − ρ̂^z_j| ≤ δ2`, the chosen classifier obeys
//! `|ρ^z − ρ̂^z_J| ≤ δ1 + δ2 + ε/2` on the canonical grid of spacing `ε`;
//! [`check_theorem3`] measures both deltas on labeled data and checks it.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{self, exact, ClassifierSpec, TrainedClassifier};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::positive_rate;
use crate::quantify::{build_quantifier, QuantifierSpec, TrainedQuantifier};
use crate::sampling::{pp_sample, SampleRequest};
use crate::seed::{self, tag};

pub const SCHEMA: &str = "cape-ensemble/1";

/// Absolute slack for floating-point rounding in bound comparisons; the
/// grid values themselves are not exactly representable.
pub const BOUND_ROUNDING: f64 = 1e-12;

/// Target prevalences at which the per-group classifiers are trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceGrid {
    #[serde(with = "exact::vec")]
    thetas: Vec<f64>,
    #[serde(with = "exact::scalar")]
    epsilon: f64,
}

impl PrevalenceGrid {
    /// `{ε/2, 3ε/2, …, (k − 1/2)ε}` with `k = ⌊1/ε + 1/2⌋`.
    pub fn canonical(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "grid spacing {epsilon} must lie in (0, 1)"
            )));
        }
        let k = (1.0 / epsilon + 0.5).floor() as usize;
        let thetas = (1..=k)
            .map(|j| (2 * j - 1) as f64 * epsilon / 2.0)
            .collect();
        Ok(PrevalenceGrid { thetas, epsilon })
    }

    /// An arbitrary strictly increasing grid in `[0, 1]`. `epsilon` is the
    /// spacing used in bound reports.
    pub fn custom(thetas: Vec<f64>, epsilon: f64) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::InvalidParameter("grid must not be empty".into()));
        }
        if thetas.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidParameter("grid values must lie in [0, 1]".into()));
        }
        if thetas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "grid values must be strictly increasing".into(),
            ));
        }
        Ok(PrevalenceGrid { thetas, epsilon })
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn k(&self) -> usize {
        self.thetas.len()
    }

    /// Index of the grid value closest to `p` (ties to the smaller).
    pub fn nearest(&self, p: f64) -> usize {
        argmin(self.thetas.iter().map(|t| (t - p).abs()))
    }
}

impl Default for PrevalenceGrid {
    fn default() -> Self {
        Self::canonical(0.1).expect("valid spacing")
    }
}

/// First index attaining the minimum.
fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Selection rule of the prediction phase: the index minimizing
/// `|ρ̂_j − q̂|`, ties to the smallest index, with all objective values.
pub fn select_classifier(prediction_prevalences: &[f64], estimate: f64) -> (usize, Vec<f64>) {
    let objectives: Vec<f64> = prediction_prevalences
        .iter()
        .map(|r| (r - estimate).abs())
        .collect();
    (argmin(objectives.iter().copied()), objectives)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaClassifier {
    #[serde(with = "exact::scalar")]
    pub theta: f64,
    pub classifier: TrainedClassifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedGroupModel {
    pub group: u32,
    pub quantifier: TrainedQuantifier,
    /// One classifier per grid value, in grid order.
    pub classifiers: Vec<ThetaClassifier>,
    #[serde(with = "exact::scalar")]
    pub training_prevalence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapeEnsemble {
    pub schema: String,
    pub grid: PrevalenceGrid,
    pub groups: BTreeMap<u32, TrainedGroupModel>,
    pub classifier_spec: ClassifierSpec,
    pub quantifier_spec: QuantifierSpec,
    pub seed: u64,
}

fn train_group(
    z: u32,
    part: &Dataset,
    grid: &PrevalenceGrid,
    c_spec: &ClassifierSpec,
    q_spec: &QuantifierSpec,
    seed: u64,
) -> Result<TrainedGroupModel> {
    let positives = part.positives();
    if positives == 0 || positives == part.len() {
        let missing = if positives == 0 { "positive" } else { "negative" };
        return Err(Error::Training {
            group: z,
            message: format!("training data has no {missing} instances"),
        });
    }
    let z64 = u64::from(z);
    let q_spec = q_spec
        .clone()
        .with_seed(seed::derive(seed, &[tag::QUANTIFIER, z64]));
    let (quantifier, classifiers) = rayon::join(
        || build_quantifier(&q_spec, part),
        || {
            grid.thetas()
                .par_iter()
                .enumerate()
                .map(|(j, &theta)| {
                    let j64 = j as u64;
                    let req = SampleRequest {
                        theta,
                        size: part.len(),
                        seed: seed::derive(seed, &[tag::SAMPLE, z64, j64]),
                    };
                    let sample = pp_sample(part, &req)?;
                    let spec = c_spec
                        .clone()
                        .with_seed(seed::derive(seed, &[tag::CLASSIFIER, z64, j64]));
                    Ok(ThetaClassifier {
                        theta,
                        classifier: classifier::train(&spec, &sample)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        },
    );
    let quantifier = quantifier.map_err(|e| Error::Training {
        group: z,
        message: e.to_string(),
    })?;
    Ok(TrainedGroupModel {
        group: z,
        quantifier,
        classifiers: classifiers?,
        training_prevalence: positives as f64 / part.len() as f64,
    })
}

/// Trains one quantifier and `k` prevalence-specialized classifiers per
/// group. Every random stream is keyed by `(seed, group, grid index)`, so
/// each group's models depend only on that group's data.
pub fn train_cape(
    train: &Dataset,
    grid: &PrevalenceGrid,
    c_spec: &ClassifierSpec,
    q_spec: &QuantifierSpec,
    seed: u64,
) -> Result<CapeEnsemble> {
    if train.is_empty() {
        return Err(Error::InvalidDataset("training set is empty".into()));
    }
    c_spec.validate()?;
    let parts: Vec<(u32, Dataset)> = train.partition_by_group().into_iter().collect();
    let groups = parts
        .par_iter()
        .map(|(z, part)| train_group(*z, part, grid, c_spec, q_spec, seed).map(|m| (*z, m)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(CapeEnsemble {
        schema: SCHEMA.to_string(),
        grid: grid.clone(),
        groups,
        classifier_spec: c_spec.clone(),
        quantifier_spec: q_spec.clone(),
        seed,
    })
}

/// Everything the prediction phase computed for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSelection {
    pub size: usize,
    /// `q̂^z`; `None` when the quantifier was degenerate.
    pub estimate: Option<f64>,
    pub prediction_prevalences: Vec<f64>,
    /// `|ρ̂^z_j − q̂^z|`, or `|θ_j − ρ^z_D|` on the fallback path.
    pub objectives: Vec<f64>,
    pub chosen: usize,
    pub chosen_theta: f64,
    /// Set when a degenerate quantifier forced selection by training
    /// prevalence.
    pub fallback: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub groups: BTreeMap<u32, GroupSelection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapePrediction {
    pub predictions: Vec<u8>,
    pub trace: SelectionTrace,
}

impl TrainedGroupModel {
    /// Runs the selection on one group's slice, returning the trace entry
    /// and the chosen classifier's predictions.
    fn decide(&self, grid: &PrevalenceGrid, slice: &Dataset) -> Result<(GroupSelection, Vec<u8>)> {
        let q_probs = self.quantifier.classifier.predict_proba_batch(slice)?;
        let estimate = match self.quantifier.estimate_from_probabilities(&q_probs) {
            Ok(q) => Some(q),
            Err(Error::DegenerateQuantifier { .. }) => None,
            Err(e) => return Err(e),
        };
        let mut per_theta = self
            .classifiers
            .iter()
            .map(|tc| tc.classifier.predict_batch(slice))
            .collect::<Result<Vec<_>>>()?;
        let prevalences: Vec<f64> = per_theta.iter().map(|p| positive_rate(p)).collect();
        let (chosen, objectives) = match estimate {
            Some(q) => select_classifier(&prevalences, q),
            None => {
                let objectives: Vec<f64> = grid
                    .thetas()
                    .iter()
                    .map(|t| (t - self.training_prevalence).abs())
                    .collect();
                (grid.nearest(self.training_prevalence), objectives)
            }
        };
        let predictions = per_theta.swap_remove(chosen);
        Ok((
            GroupSelection {
                size: slice.len(),
                estimate,
                prediction_prevalences: prevalences,
                objectives,
                chosen,
                chosen_theta: grid.thetas()[chosen],
                fallback: estimate.is_none(),
            },
            predictions,
        ))
    }
}

impl CapeEnsemble {
    fn group_model(&self, z: u32) -> Result<&TrainedGroupModel> {
        self.groups.get(&z).ok_or(Error::UnseenGroup(z))
    }

    fn check_groups(&self, test: &Dataset) -> Result<()> {
        for z in test.groups_present() {
            self.group_model(z)?;
        }
        Ok(())
    }

    /// Batch prediction over whole group slices (CAPE-D).
    pub fn predict_batch(&self, test: &Dataset) -> Result<CapePrediction> {
        self.check_groups(test)?;
        let mut predictions = vec![0u8; test.len()];
        let mut trace = SelectionTrace::default();
        for (z, idx) in test.group_indices() {
            let slice = test.select(&idx);
            let (selection, preds) = self.group_model(z)?.decide(&self.grid, &slice)?;
            for (&i, p) in idx.iter().zip(preds) {
                predictions[i] = p;
            }
            trace.groups.insert(z, selection);
        }
        Ok(CapePrediction { predictions, trace })
    }

    /// Per-instance prediction (CAPE-1): the batch rule applied to every
    /// instance as a slice of size one.
    pub fn predict_single(&self, batch: &Dataset) -> Result<Vec<u8>> {
        self.check_groups(batch)?;
        (0..batch.len())
            .map(|i| {
                let model = self.group_model(batch.group(i))?;
                let (_, preds) = model.decide(&self.grid, &batch.select(&[i]))?;
                Ok(preds[0])
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let e: CapeEnsemble = serde_json::from_str(s)?;
        if e.schema != SCHEMA {
            return Err(Error::Format(format!(
                "unsupported ensemble schema `{}` (expected `{SCHEMA}`)",
                e.schema
            )));
        }
        for (z, g) in &e.groups {
            let thetas: Vec<f64> = g.classifiers.iter().map(|c| c.theta).collect();
            if thetas != e.grid.thetas() {
                return Err(Error::Format(format!(
                    "group {z}: classifier prevalences do not match the grid"
                )));
            }
        }
        Ok(e)
    }
}

pub fn predict_cape_batch(e: &CapeEnsemble, test: &Dataset) -> Result<CapePrediction> {
    e.predict_batch(test)
}

pub fn predict_cape_single(e: &CapeEnsemble, batch: &Dataset) -> Result<Vec<u8>> {
    e.predict_single(batch)
}

/// The accuracy-maximizing baseline: one classifier on the pooled training
/// set, no resampling.
pub fn train_max_acc(train: &Dataset, c_spec: &ClassifierSpec, seed: u64) -> Result<TrainedClassifier> {
    let positives = train.positives();
    if positives == 0 || positives == train.len() {
        return Err(Error::InvalidDataset(
            "baseline training data must contain both labels".into(),
        ));
    }
    classifier::train(&c_spec.clone().with_seed(seed), train)
}

/// Measured quantities of the selection bound for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBound {
    pub true_prevalence: f64,
    /// `|ρ − q̂|`; `None` if the quantifier was degenerate.
    pub delta1: Option<f64>,
    /// `max_j |θ_j − ρ̂_j|`
    pub delta2: f64,
    pub epsilon: f64,
    /// `|ρ − ρ̂_J|`
    pub achieved: f64,
    pub bound: Option<f64>,
    /// `achieved ≤ bound` up to [`BOUND_ROUNDING`]; `None` when
    /// unverifiable.
    pub holds: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub groups: BTreeMap<u32, GroupBound>,
}

impl BoundReport {
    /// False if any verifiable group violates its bound.
    pub fn all_hold(&self) -> bool {
        self.groups.values().all(|g| g.holds != Some(false))
    }
}

/// Evaluates `|ρ − ρ̂_J| ≤ δ1 + δ2 + ε/2` for one group from its selection
/// data.
pub fn bound_for_selection(
    thetas: &[f64],
    epsilon: f64,
    rho: f64,
    selection: &GroupSelection,
) -> GroupBound {
    let delta1 = selection.estimate.map(|q| (rho - q).abs());
    let delta2 = thetas
        .iter()
        .zip(&selection.prediction_prevalences)
        .map(|(t, r)| (t - r).abs())
        .fold(0.0, f64::max);
    let achieved = (rho - selection.prediction_prevalences[selection.chosen]).abs();
    let bound = delta1.map(|d1| d1 + delta2 + epsilon / 2.0);
    GroupBound {
        true_prevalence: rho,
        delta1,
        delta2,
        epsilon,
        achieved,
        bound,
        holds: bound.map(|b| achieved <= b + BOUND_ROUNDING),
    }
}

/// Runs batch prediction on labeled data and reports the bound per group.
pub fn check_theorem3(e: &CapeEnsemble, labeled_test: &Dataset) -> Result<BoundReport> {
    let result = e.predict_batch(labeled_test)?;
    let mut report = BoundReport::default();
    for (z, idx) in labeled_test.group_indices() {
        let rho = idx.iter().filter(|&&i| labeled_test.label(i) == 1).count() as f64
            / idx.len() as f64;
        let sel = &result.trace.groups[&z];
        report.groups.insert(
            z,
            bound_for_selection(e.grid.thetas(), e.grid.epsilon(), rho, sel),
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_grid() {
        let g = PrevalenceGrid::default();
        assert_eq!(g.k(), 10);
        let expected = [0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95];
        for (a, b) in g.thetas().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(PrevalenceGrid::canonical(0.25).unwrap().k(), 4);
        assert_eq!(PrevalenceGrid::canonical(0.3).unwrap().k(), 3);
        assert!(PrevalenceGrid::canonical(0.0).is_err());
        assert!(PrevalenceGrid::custom(vec![0.2, 0.2], 0.1).is_err());
    }

    #[test]
    fn argmin_of_shifted_grid() {
        // ρ̂_j = θ_j − 0.01 against q̂ = 0.58: objectives are brute-forced.
        let g = PrevalenceGrid::default();
        let rho_hat: Vec<f64> = g.thetas().iter().map(|t| t - 0.01).collect();
        let (j, obj) = select_classifier(&rho_hat, 0.58);
        let brute = (0..10)
            .min_by(|&a, &b| obj[a].partial_cmp(&obj[b]).unwrap())
            .unwrap();
        assert_eq!(j, brute);
        assert!((g.thetas()[j] - 0.55).abs() < 1e-12);
        assert!((obj[j] - 0.04).abs() < 1e-12);
    }

    #[test]
    fn exact_match_and_ties() {
        let (j, obj) = select_classifier(&[0.1, 0.3, 0.5], 0.3);
        assert_eq!((j, obj[1]), (1, 0.0));
        // 0.2 is equidistant from 0.1 and 0.3 in exact arithmetic; use
        // representable values to force a true tie.
        let (j, _) = select_classifier(&[0.25, 0.75], 0.5);
        assert_eq!(j, 0);
        let (j, _) = select_classifier(&[0.4, 0.4, 0.4], 0.9);
        assert_eq!(j, 0);
    }

    #[test]
    fn bound_with_zero_deltas() {
        let g = PrevalenceGrid::default();
        for k in 0..=100 {
            let rho = k as f64 / 100.0;
            let sel = GroupSelection {
                size: 1,
                estimate: Some(rho),
                prediction_prevalences: g.thetas().to_vec(),
                objectives: vec![],
                chosen: select_classifier(g.thetas(), rho).0,
                chosen_theta: 0.0,
                fallback: false,
            };
            let b = bound_for_selection(g.thetas(), g.epsilon(), rho, &sel);
            assert_eq!(b.delta1, Some(0.0));
            assert_eq!(b.delta2, 0.0);
            assert!(b.achieved <= 0.05 + 1e-12, "{rho}: {}", b.achieved);
            assert_eq!(b.holds, Some(true));
        }
    }
}
