//! Prevalence estimation ("quantification") from unlabeled data.
//!
//! Both estimators correct a raw statistic of a scoring classifier with
//! constants measured on out-of-fold predictions of a stratified k-fold
//! split of the training data:
//!
//! * **ACC** (adjusted classify and count): with `p′` the fraction predicted
//!   positive, `p = (p′ − FPR) / (TPR − FPR)`.
//! * **SPA** (scaled probability average): with `PA` the mean predicted
//!   probability, `p = (PA − FP_PA) / (TP_PA − FP_PA)`, where `TP_PA` and
//!   `FP_PA` are the mean out-of-fold probabilities on actual positives and
//!   actual negatives (the construction of Bella et al., 2010).

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{self, exact, ClassifierSpec, TrainedClassifier};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seed::{self, tag};

/// Calibration denominators below this are rejected.
pub const MIN_DENOMINATOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantifierKind {
    Acc,
    Spa,
}

impl std::str::FromStr for QuantifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "acc" => Ok(QuantifierKind::Acc),
            "spa" => Ok(QuantifierKind::Spa),
            other => Err(Error::InvalidParameter(format!(
                "unknown quantifier kind `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantifierSpec {
    pub kind: QuantifierKind,
    pub folds: usize,
    pub classifier: ClassifierSpec,
    pub clamp: bool,
    pub seed: u64,
}

impl QuantifierSpec {
    pub fn spa(classifier: ClassifierSpec) -> Self {
        QuantifierSpec {
            kind: QuantifierKind::Spa,
            folds: 10,
            classifier,
            clamp: true,
            seed: 0,
        }
    }

    pub fn acc(classifier: ClassifierSpec) -> Self {
        QuantifierSpec {
            kind: QuantifierKind::Acc,
            ..Self::spa(classifier)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

impl Default for QuantifierSpec {
    fn default() -> Self {
        Self::spa(ClassifierSpec::logistic())
    }
}

/// Out-of-fold rates of the scoring classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    #[serde(with = "exact::scalar")]
    pub tpr: f64,
    #[serde(with = "exact::scalar")]
    pub fpr: f64,
    /// Mean probability on actual positives.
    #[serde(with = "exact::scalar")]
    pub tp_pa: f64,
    /// Mean probability on actual negatives.
    #[serde(with = "exact::scalar")]
    pub fp_pa: f64,
}

impl Calibration {
    pub fn denominator(&self, kind: QuantifierKind) -> f64 {
        match kind {
            QuantifierKind::Acc => self.tpr - self.fpr,
            QuantifierKind::Spa => self.tp_pa - self.fp_pa,
        }
    }

    /// Maps an observed statistic (`p′` for ACC, `PA` for SPA) to a
    /// prevalence, unclamped.
    pub fn adjust(&self, kind: QuantifierKind, observed: f64) -> Result<f64> {
        let den = self.denominator(kind);
        if den.abs() < MIN_DENOMINATOR {
            return Err(Error::DegenerateQuantifier { denominator: den });
        }
        let offset = match kind {
            QuantifierKind::Acc => self.fpr,
            QuantifierKind::Spa => self.fp_pa,
        };
        Ok((observed - offset) / den)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedQuantifier {
    pub kind: QuantifierKind,
    pub classifier: TrainedClassifier,
    pub calibration: Calibration,
    pub clamp: bool,
    pub folds_used: usize,
}

/// Stratified fold assignment: each label stratum is shuffled and dealt
/// round-robin into `k` folds.
fn stratified_folds(d: &Dataset, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed);
    let mut fold_of = vec![0; d.len()];
    for label in [1u8, 0u8] {
        let mut idx: Vec<usize> = (0..d.len()).filter(|&i| d.label(i) == label).collect();
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            fold_of[i] = pos % k;
        }
    }
    fold_of
}

pub fn build_quantifier(spec: &QuantifierSpec, d: &Dataset) -> Result<TrainedQuantifier> {
    if spec.folds < 2 {
        return Err(Error::InvalidParameter("quantifier folds must be >= 2".into()));
    }
    let positives = d.positives();
    let negatives = d.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Quantifier(format!(
            "training data must contain both labels ({positives} positives, {negatives} negatives)"
        )));
    }
    let smallest = positives.min(negatives);
    let k = if smallest < spec.folds {
        let k = smallest.max(2);
        log::warn!(
            "smallest label stratum has {smallest} instances; lowering folds from {} to {k}",
            spec.folds
        );
        k
    } else {
        spec.folds
    };

    let fold_of = stratified_folds(d, k, seed::derive(spec.seed, &[tag::FOLDS]));
    let fold_probs: Vec<(Vec<usize>, Vec<f64>)> = (0..k)
        .into_par_iter()
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..d.len()).partition(|&i| fold_of[i] == f);
            let c_spec = spec
                .classifier
                .clone()
                .with_seed(seed::derive(spec.seed, &[tag::CLASSIFIER, f as u64]));
            let c = classifier::train(&c_spec, &d.select(&train))?;
            let probs = c.predict_proba_batch(&d.select(&test))?;
            Ok((test, probs))
        })
        .collect::<Result<_>>()?;

    let threshold = spec.classifier.threshold;
    let (mut hits_pos, mut hits_neg, mut sum_pos, mut sum_neg) = (0usize, 0usize, 0.0, 0.0);
    for (rows, probs) in &fold_probs {
        for (&i, &p) in rows.iter().zip(probs) {
            let hit = (p >= threshold) as usize;
            if d.label(i) == 1 {
                hits_pos += hit;
                sum_pos += p;
            } else {
                hits_neg += hit;
                sum_neg += p;
            }
        }
    }
    let calibration = Calibration {
        tpr: hits_pos as f64 / positives as f64,
        fpr: hits_neg as f64 / negatives as f64,
        tp_pa: sum_pos / positives as f64,
        fp_pa: sum_neg / negatives as f64,
    };
    let final_spec = spec
        .classifier
        .clone()
        .with_seed(seed::derive(spec.seed, &[tag::CLASSIFIER, u64::MAX]));
    let classifier = classifier::train(&final_spec, d)?;
    Ok(TrainedQuantifier {
        kind: spec.kind,
        classifier,
        calibration,
        clamp: spec.clamp,
        folds_used: k,
    })
}

impl TrainedQuantifier {
    /// Denominator of the correction (`TPR − FPR` or `TP_PA − FP_PA`).
    pub fn denominator(&self) -> f64 {
        self.calibration.denominator(self.kind)
    }

    pub fn is_degenerate(&self) -> bool {
        self.denominator().abs() < MIN_DENOMINATOR
    }

    /// Estimate from the classifier's probabilities on the unlabeled rows.
    pub fn estimate_from_probabilities(&self, probs: &[f64]) -> Result<f64> {
        if probs.is_empty() {
            return Err(Error::InvalidDataset(
                "cannot estimate the prevalence of an empty set".into(),
            ));
        }
        let n = probs.len() as f64;
        let observed = match self.kind {
            QuantifierKind::Acc => {
                let t = self.classifier.threshold;
                probs.iter().filter(|&&p| p >= t).count() as f64 / n
            }
            QuantifierKind::Spa => probs.iter().sum::<f64>() / n,
        };
        let raw = self.calibration.adjust(self.kind, observed)?;
        Ok(if self.clamp { raw.clamp(0.0, 1.0) } else { raw })
    }

    /// Estimated positive fraction of `d`; labels, if any, are ignored.
    pub fn estimate(&self, d: &Dataset) -> Result<f64> {
        self.estimate_from_probabilities(&self.classifier.predict_proba_batch(d)?)
    }
}

pub fn estimate(q: &TrainedQuantifier, d_unlabeled: &Dataset) -> Result<f64> {
    q.estimate(d_unlabeled)
}

/// `|ρ − q̂|` on a labeled set.
pub fn quantifier_error(q: &TrainedQuantifier, d_labeled: &Dataset) -> Result<f64> {
    let est = q.estimate(d_labeled)?;
    let rho = d_labeled.positives() as f64 / d_labeled.len() as f64;
    Ok((rho - est).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{ClassifierKind, Model};
    use crate::dataset::{generate_synthetic, SyntheticSpec};

    /// A quantifier whose classifier emits the fixed probability `p`.
    fn fixed(kind: QuantifierKind, calibration: Calibration, clamp: bool) -> TrainedQuantifier {
        TrainedQuantifier {
            kind,
            classifier: TrainedClassifier {
                kind: ClassifierKind::LogisticRegression,
                threshold: 0.5,
                dim: 1,
                model: Model::Constant { probability: 0.0 },
            },
            calibration,
            clamp,
            folds_used: 10,
        }
    }

    fn acc(tpr: f64, fpr: f64) -> Calibration {
        Calibration {
            tpr,
            fpr,
            tp_pa: tpr,
            fp_pa: fpr,
        }
    }

    /// Probabilities with a fraction `p_prime` at or above the threshold.
    fn probs_with_rate(p_prime: f64, n: usize) -> Vec<f64> {
        let k = (p_prime * n as f64).round() as usize;
        (0..n).map(|i| if i < k { 0.9 } else { 0.1 }).collect()
    }

    #[test]
    fn acc_formula() {
        let q = fixed(QuantifierKind::Acc, acc(0.9, 0.2), true);
        let est = q.estimate_from_probabilities(&probs_with_rate(0.6, 10)).unwrap();
        assert!((est - 0.4 / 0.7).abs() < 1e-12, "{est}");
    }

    #[test]
    fn acc_identity_calibration() {
        let q = fixed(QuantifierKind::Acc, acc(1.0, 0.0), true);
        for k in 0..=8 {
            let probs = probs_with_rate(k as f64 / 8.0, 8);
            assert_eq!(q.estimate_from_probabilities(&probs).unwrap(), k as f64 / 8.0);
        }
    }

    #[test]
    fn acc_clamps_negative_estimates() {
        let raw = fixed(QuantifierKind::Acc, acc(0.5, 0.2), false);
        let est = raw.estimate_from_probabilities(&probs_with_rate(0.1, 10)).unwrap();
        assert!((est + 1.0 / 3.0).abs() < 1e-12);
        let clamped = fixed(QuantifierKind::Acc, acc(0.5, 0.2), true);
        assert_eq!(
            clamped.estimate_from_probabilities(&probs_with_rate(0.1, 10)).unwrap(),
            0.0
        );
    }

    #[test]
    fn acc_is_increasing_in_observed_rate() {
        let q = fixed(QuantifierKind::Acc, acc(0.8, 0.3), false);
        let ests: Vec<f64> = (0..=20)
            .map(|k| q.estimate_from_probabilities(&probs_with_rate(k as f64 / 20.0, 20)).unwrap())
            .collect();
        assert!(ests.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn degenerate_denominator_is_an_error() {
        let q = fixed(QuantifierKind::Spa, acc(0.4, 0.4), true);
        assert!(matches!(
            q.estimate_from_probabilities(&[0.3]),
            Err(Error::DegenerateQuantifier { .. })
        ));
    }

    #[test]
    fn single_label_training_rejected() {
        let d = generate_synthetic(&SyntheticSpec::two_groups(1.0, 1.0, 30, 1)).unwrap();
        assert!(matches!(
            build_quantifier(&QuantifierSpec::default(), &d),
            Err(Error::Quantifier(_))
        ));
    }

    #[test]
    fn folds_lowered_for_tiny_strata() {
        let d = Dataset::from_parts(
            1,
            vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            vec![0; 6],
            vec![0, 0, 0, 0, 1, 1],
            None,
        )
        .unwrap();
        let q = build_quantifier(&QuantifierSpec::default(), &d).unwrap();
        assert_eq!(q.folds_used, 2);
        assert!(q.denominator().is_finite());
    }

    #[test]
    fn separable_data_calibrates_to_identity() {
        let xs: Vec<f64> = (0..40).map(|i| if i < 20 { i as f64 } else { 100.0 + i as f64 }).collect();
        let ys: Vec<u8> = (0..40).map(|i| (i >= 20) as u8).collect();
        let d = Dataset::from_parts(1, xs, vec![0; 40], ys, None).unwrap();
        let q = build_quantifier(&QuantifierSpec::acc(ClassifierSpec::logistic()), &d).unwrap();
        assert_eq!(q.calibration.tpr, 1.0);
        assert_eq!(q.calibration.fpr, 0.0);
        assert_eq!(quantifier_error(&q, &d).unwrap(), 0.0);
    }

    #[test]
    fn synthetic_group_is_well_separated() {
        let d = generate_synthetic(&SyntheticSpec::two_groups(0.5, 0.5, 4000, 21)).unwrap();
        let part = &d.partition_by_group()[&0];
        let q = build_quantifier(&QuantifierSpec::acc(ClassifierSpec::logistic()), part).unwrap();
        assert!(q.denominator() > 0.5, "{:?}", q.calibration);
        let spa = build_quantifier(&QuantifierSpec::default(), part).unwrap();
        assert!(spa.denominator() > 0.5, "{:?}", spa.calibration);
    }

    #[test]
    fn build_is_deterministic() {
        let d = generate_synthetic(&SyntheticSpec::two_groups(0.3, 0.3, 600, 5)).unwrap();
        let spec = QuantifierSpec::default().with_seed(44);
        assert_eq!(
            build_quantifier(&spec, &d).unwrap(),
            build_quantifier(&spec, &d).unwrap()
        );
    }
}
