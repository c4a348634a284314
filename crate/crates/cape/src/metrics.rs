//! Prevalence and group-fairness arithmetic.
//!
//! * true prevalence `ρ^z`: fraction of group `z` labeled positive;
//! * prediction prevalence `ρ̂^z`: fraction of group `z` predicted positive;
//! * prevalence difference `Δ^z = |ρ^z − ρ̂^z|`;
//! * proportional equality `PE^{z,z'} = |ρ^z/ρ^{z'} − ρ̂^z/ρ̂^{z'}|`.
//!
//! Quantities whose denominator is zero are reported as `None` ("undef" in
//! CSV output) instead of propagating NaN.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

fn check_len(d: &Dataset, predictions: &[u8]) -> Result<()> {
    if predictions.len() != d.len() {
        return Err(Error::LengthMismatch {
            expected: d.len(),
            actual: predictions.len(),
        });
    }
    Ok(())
}

/// Fraction of group-`z` instances labeled 1.
pub fn true_prevalence(d: &Dataset, z: u32) -> Result<f64> {
    let (n, pos) = d
        .iter()
        .filter(|i| i.group == z)
        .fold((0usize, 0usize), |(n, p), i| (n + 1, p + i.label as usize));
    if n == 0 {
        return Err(Error::EmptyGroup(z));
    }
    Ok(pos as f64 / n as f64)
}

/// Fraction of group-`z` instances predicted 1.
pub fn prediction_prevalence(d: &Dataset, predictions: &[u8], z: u32) -> Result<f64> {
    check_len(d, predictions)?;
    let (n, pos) = d
        .groups()
        .iter()
        .zip(predictions)
        .filter(|(&g, _)| g == z)
        .fold((0usize, 0usize), |(n, p), (_, &y)| (n + 1, p + (y == 1) as usize));
    if n == 0 {
        return Err(Error::EmptyGroup(z));
    }
    Ok(pos as f64 / n as f64)
}

/// Fraction of ones in a prediction vector.
pub fn positive_rate(predictions: &[u8]) -> f64 {
    if predictions.is_empty() {
        return 0.0;
    }
    predictions.iter().filter(|&&y| y == 1).count() as f64 / predictions.len() as f64
}

pub fn prevalence_difference(rho: f64, rho_hat: f64) -> f64 {
    (rho - rho_hat).abs()
}

/// `|ρ^z/ρ^{z'} − ρ̂^z/ρ̂^{z'}|` with `z2` as the denominator group; `None`
/// when either denominator is zero or a group is missing.
pub fn proportional_equality(
    rho: &BTreeMap<u32, f64>,
    rho_hat: &BTreeMap<u32, f64>,
    z: u32,
    z2: u32,
) -> Option<f64> {
    let (a, b) = (*rho.get(&z)?, *rho.get(&z2)?);
    let (ah, bh) = (*rho_hat.get(&z)?, *rho_hat.get(&z2)?);
    pe_value(a, b, ah, bh)
}

fn pe_value(rho_z: f64, rho_z2: f64, hat_z: f64, hat_z2: f64) -> Option<f64> {
    if rho_z2 == 0.0 || hat_z2 == 0.0 {
        return None;
    }
    Some((rho_z / rho_z2 - hat_z / hat_z2).abs())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, tn, fp, fn_ }
    }

    pub fn add(&mut self, label: u8, prediction: u8) {
        match (label, prediction) {
            (1, 1) => self.tp += 1,
            (0, 0) => self.tn += 1,
            (0, _) => self.fp += 1,
            _ => self.fn_ += 1,
        }
    }

    pub fn n(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.n())
    }

    /// `FP / (FP + TN)`; undefined without actual negatives.
    pub fn fpr(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }

    /// `FN / (FN + TP)`; undefined without actual positives.
    pub fn fnr(&self) -> Option<f64> {
        ratio(self.fn_, self.fn_ + self.tp)
    }

    pub fn tpr(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn true_prevalence(&self) -> Option<f64> {
        ratio(self.tp + self.fn_, self.n())
    }

    pub fn prediction_prevalence(&self) -> Option<f64> {
        ratio(self.tp + self.fp, self.n())
    }

    pub fn error_decomposition(&self) -> ErrorDecomposition {
        theorem2_identity(self)
    }
}

/// Tallies predictions against labels, restricted to group `z` when given.
pub fn confusion(d: &Dataset, predictions: &[u8], z: Option<u32>) -> Result<ConfusionCounts> {
    check_len(d, predictions)?;
    let mut c = ConfusionCounts::default();
    for (inst, &p) in d.iter().zip(predictions) {
        if z.map_or(true, |z| inst.group == z) {
            c.add(inst.label, p);
        }
    }
    if c.n() == 0 {
        return Err(match z {
            Some(z) => Error::EmptyGroup(z),
            None => Error::InvalidDataset("empty dataset".into()),
        });
    }
    Ok(c)
}

/// Prevalence difference and error rate of one confusion table, kept as
/// integer numerators over a shared `n` so the identity
/// `Δ = δ − 2·min(FN, FP)/n` can be checked without rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorDecomposition {
    pub n: u64,
    /// `|FN − FP|`
    pub pd_numerator: u64,
    /// `FN + FP`
    pub error_numerator: u64,
    /// `2·min(FN, FP)`
    pub min_numerator: u64,
}

impl ErrorDecomposition {
    /// `Δ`
    pub fn delta(&self) -> f64 {
        self.pd_numerator as f64 / self.n as f64
    }

    /// `δ = 1 − accuracy`
    pub fn error_rate(&self) -> f64 {
        self.error_numerator as f64 / self.n as f64
    }

    pub fn min_term(&self) -> f64 {
        self.min_numerator as f64 / self.n as f64
    }

    /// `Δ = δ − min_term` and `Δ ≤ δ`, in exact integer arithmetic.
    pub fn identity_holds(&self) -> bool {
        self.error_numerator >= self.min_numerator
            && self.pd_numerator == self.error_numerator - self.min_numerator
            && self.pd_numerator <= self.error_numerator
    }
}

pub fn theorem2_identity(c: &ConfusionCounts) -> ErrorDecomposition {
    ErrorDecomposition {
        n: c.n(),
        pd_numerator: c.fn_.abs_diff(c.fp),
        error_numerator: c.fn_ + c.fp,
        min_numerator: 2 * c.fn_.min(c.fp),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub true_prevalence: f64,
    pub prediction_prevalence: f64,
    pub pd: f64,
    pub accuracy: f64,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub confusion: ConfusionCounts,
}

/// Cross-group comparison for the ordered pair `(z, z2)`; `z2` is the PE
/// denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub z: u32,
    pub z2: u32,
    pub pe: Option<f64>,
    pub fpr_diff: Option<f64>,
    pub fnr_diff: Option<f64>,
    pub accuracy_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_group: BTreeMap<u32, GroupMetrics>,
    pub cross_group: Vec<PairMetrics>,
}

fn abs_diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some((a? - b?).abs())
}

/// Per-group and cross-group panel for `predictions` on every group in `0..G`.
pub fn fairness_report(d: &Dataset, predictions: &[u8]) -> Result<MetricsReport> {
    check_len(d, predictions)?;
    let mut counts: BTreeMap<u32, ConfusionCounts> =
        (0..d.n_groups()).map(|z| (z, ConfusionCounts::default())).collect();
    for (inst, &p) in d.iter().zip(predictions) {
        counts.entry(inst.group).or_default().add(inst.label, p);
    }
    let mut per_group = BTreeMap::new();
    for (&z, c) in &counts {
        if c.n() == 0 {
            return Err(Error::EmptyGroup(z));
        }
        let rho = c.true_prevalence().expect("n > 0");
        let rho_hat = c.prediction_prevalence().expect("n > 0");
        per_group.insert(
            z,
            GroupMetrics {
                true_prevalence: rho,
                prediction_prevalence: rho_hat,
                pd: prevalence_difference(rho, rho_hat),
                accuracy: c.accuracy().expect("n > 0"),
                fpr: c.fpr(),
                fnr: c.fnr(),
                confusion: *c,
            },
        );
    }
    let groups: Vec<u32> = per_group.keys().copied().collect();
    let mut cross_group = Vec::new();
    for (i, &z) in groups.iter().enumerate() {
        for &z2 in &groups[i + 1..] {
            let (a, b) = (&per_group[&z], &per_group[&z2]);
            cross_group.push(PairMetrics {
                z,
                z2,
                pe: pe_value(
                    a.true_prevalence,
                    b.true_prevalence,
                    a.prediction_prevalence,
                    b.prediction_prevalence,
                ),
                fpr_diff: abs_diff(a.fpr, b.fpr),
                fnr_diff: abs_diff(a.fnr, b.fnr),
                accuracy_diff: (a.accuracy - b.accuracy).abs(),
            });
        }
    }
    Ok(MetricsReport {
        per_group,
        cross_group,
    })
}

/// Formats an optional metric with six decimals, or `undef`.
pub fn fmt_metric(x: Option<f64>) -> String {
    match x {
        Some(v) => format!("{v:.6}"),
        None => "undef".to_string(),
    }
}

impl MetricsReport {
    pub fn pair(&self, z: u32, z2: u32) -> Option<&PairMetrics> {
        self.cross_group.iter().find(|p| p.z == z && p.z2 == z2)
    }

    /// `PE^{0,1}`, the orientation reported by default.
    pub fn pe01(&self) -> Option<f64> {
        self.pair(0, 1).and_then(|p| p.pe)
    }

    pub fn true_prevalences(&self) -> BTreeMap<u32, f64> {
        self.per_group
            .iter()
            .map(|(&z, g)| (z, g.true_prevalence))
            .collect()
    }

    pub fn prediction_prevalences(&self) -> BTreeMap<u32, f64> {
        self.per_group
            .iter()
            .map(|(&z, g)| (z, g.prediction_prevalence))
            .collect()
    }

    /// Header matching [`MetricsReport::csv_row`].
    pub const CSV_HEADER: &'static str = "dataset,algorithm,\
fpr_z0,fpr_z1,fpr_diff,fnr_z0,fnr_z1,fnr_diff,acc_z0,acc_z1,acc_diff,\
pred_prev_z0,pred_prev_z1,pd_z0,pd_z1,pe_01";

    /// One flat row for groups 0 and 1 in the column order of
    /// [`MetricsReport::CSV_HEADER`].
    pub fn csv_row(&self, dataset: &str, algorithm: &str) -> String {
        let g = |z: u32| self.per_group.get(&z);
        let pair = self.pair(0, 1);
        let mut row = format!("{dataset},{algorithm}");
        let cols = [
            g(0).and_then(|m| m.fpr),
            g(1).and_then(|m| m.fpr),
            pair.and_then(|p| p.fpr_diff),
            g(0).and_then(|m| m.fnr),
            g(1).and_then(|m| m.fnr),
            pair.and_then(|p| p.fnr_diff),
            g(0).map(|m| m.accuracy),
            g(1).map(|m| m.accuracy),
            pair.map(|p| p.accuracy_diff),
            g(0).map(|m| m.prediction_prevalence),
            g(1).map(|m| m.prediction_prevalence),
            g(0).map(|m| m.pd),
            g(1).map(|m| m.pd),
            pair.and_then(|p| p.pe),
        ];
        for c in cols {
            let _ = write!(row, ",{}", fmt_metric(c));
        }
        row
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grouped(groups: Vec<u32>, labels: Vec<u8>) -> Dataset {
        let n = labels.len();
        Dataset::from_parts(1, vec![0.0; n], groups, labels, None).unwrap()
    }

    #[test]
    fn prevalence_of_seven() {
        let d = grouped(vec![0; 7], vec![1, 0, 1, 0, 0, 1, 0]);
        assert_eq!(true_prevalence(&d, 0).unwrap(), 3.0 / 7.0);
        let all = grouped(vec![0; 3], vec![1; 3]);
        assert_eq!(true_prevalence(&all, 0).unwrap(), 1.0);
        assert!(matches!(true_prevalence(&d, 4), Err(Error::EmptyGroup(4))));
    }

    #[test]
    fn prediction_prevalence_length_mismatch() {
        let d = grouped(vec![0, 0], vec![1, 0]);
        assert!(matches!(
            prediction_prevalence(&d, &[1], 0),
            Err(Error::LengthMismatch { .. })
        ));
        assert_eq!(prediction_prevalence(&d, d.labels(), 0).unwrap(), 0.5);
    }

    #[test]
    fn table3_max_acc_figures() {
        assert!((prevalence_difference(0.636, 0.284) - 0.352).abs() < 1e-12);
        let d1 = prevalence_difference(0.706, 0.542);
        assert!((d1 - 0.163).abs() <= 0.001 + 1e-12);
        let rho = BTreeMap::from([(0, 0.636), (1, 0.706)]);
        let hat = BTreeMap::from([(0, 0.284), (1, 0.542)]);
        let pe = proportional_equality(&rho, &hat, 0, 1).unwrap();
        assert!((pe - 0.376).abs() <= 0.002, "{pe}");
        assert_eq!(prevalence_difference(0.42, 0.42), 0.0);
    }

    #[test]
    fn pe_undefined_and_proportional() {
        let rho = BTreeMap::from([(0, 0.2), (1, 0.4)]);
        let hat = BTreeMap::from([(0, 0.1), (1, 0.2)]);
        assert_eq!(proportional_equality(&rho, &hat, 0, 1), Some(0.0));
        let zero = BTreeMap::from([(0, 0.1), (1, 0.0)]);
        assert_eq!(proportional_equality(&rho, &zero, 0, 1), None);
    }

    #[test]
    fn hand_tally() {
        let d = grouped(vec![0; 4], vec![1, 0, 1, 0]);
        let c = confusion(&d, &[1, 1, 0, 0], None).unwrap();
        assert_eq!(c, ConfusionCounts::new(1, 1, 1, 1));
        let perfect = confusion(&d, d.labels(), None).unwrap();
        assert_eq!((perfect.fp, perfect.fn_), (0, 0));
    }

    #[test]
    fn group_restricted_tally_matches_filtered_dataset() {
        let d = grouped(vec![0, 1, 1, 0, 1], vec![1, 0, 1, 1, 0]);
        let preds = [0, 1, 1, 1, 0];
        let restricted = confusion(&d, &preds, Some(1)).unwrap();
        let idx = &d.group_indices()[&1];
        let sub = d.select(idx);
        let sub_preds: Vec<u8> = idx.iter().map(|&i| preds[i]).collect();
        assert_eq!(restricted, confusion(&sub, &sub_preds, None).unwrap());
    }

    #[test]
    fn decomposition_example() {
        let c = ConfusionCounts::new(10, 6, 1, 3);
        let e = theorem2_identity(&c);
        assert_eq!(e.n, 20);
        assert!((e.delta() - 0.1).abs() < 1e-15);
        assert!((e.error_rate() - 0.2).abs() < 1e-15);
        assert!((e.min_term() - 0.1).abs() < 1e-15);
        assert!(e.identity_holds());

        let sym = theorem2_identity(&ConfusionCounts::new(5, 5, 2, 2));
        assert_eq!(sym.pd_numerator, 0);
        assert_eq!(sym.error_rate(), 4.0 / 14.0);
    }

    #[test]
    fn undefined_rates() {
        let c = ConfusionCounts::new(3, 0, 0, 1);
        assert_eq!(c.fpr(), None);
        assert_eq!(c.fnr(), Some(0.25));
    }

    #[test]
    fn perfect_predictions_report() {
        let d = grouped(vec![0, 0, 1, 1, 1], vec![1, 0, 1, 1, 0]);
        let r = fairness_report(&d, d.labels()).unwrap();
        for g in r.per_group.values() {
            assert_eq!(g.pd, 0.0);
            assert_eq!(g.accuracy, 1.0);
        }
        assert_eq!(r.pe01(), Some(0.0));
    }

    #[test]
    fn constant_positive_predictor() {
        // 1000 per group with 636 and 706 positives.
        let mut groups = vec![0; 1000];
        groups.extend(vec![1; 1000]);
        let mut labels = vec![0u8; 2000];
        labels[..636].fill(1);
        labels[1000..1706].fill(1);
        let d = grouped(groups, labels);
        let r = fairness_report(&d, &vec![1; 2000]).unwrap();
        assert!((r.per_group[&0].pd - 0.364).abs() < 1e-12);
        assert!((r.per_group[&1].pd - 0.294).abs() < 1e-12);
        assert_eq!(r.per_group[&0].fpr, Some(1.0));
        assert_eq!(r.per_group[&0].fnr, Some(0.0));
    }

    #[test]
    fn empty_declared_group_is_an_error() {
        let d = Dataset::from_parts(1, vec![0.0, 1.0], vec![0, 0], vec![0, 1], Some(2)).unwrap();
        assert!(matches!(
            fairness_report(&d, &[0, 1]),
            Err(Error::EmptyGroup(1))
        ));
    }

    #[test]
    fn csv_row_has_header_arity() {
        let d = grouped(vec![0, 0, 1, 1], vec![1, 0, 1, 1]);
        let r = fairness_report(&d, &[1, 0, 1, 0]).unwrap();
        let row = r.csv_row("toy", "perfect");
        assert_eq!(
            row.split(',').count(),
            MetricsReport::CSV_HEADER.split(',').count()
        );
        // group 1 has no actual negatives
        assert!(row.contains("undef"));
    }
}
