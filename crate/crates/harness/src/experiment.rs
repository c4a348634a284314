//! Experiment drivers: train once per iteration, evaluate every setting from
//! the same models, and keep the raw predictions of every run.

use std::collections::BTreeMap;

use cape::classifier::TrainedClassifier;
use cape::dataset::{generate_synthetic, load_csv, Dataset, SyntheticSpec};
use cape::ensemble::{
    bound_for_selection, train_cape, train_max_acc, BoundReport, CapeEnsemble, PrevalenceGrid,
    SelectionTrace,
};
use cape::metrics::{fairness_report, MetricsReport};
use cape::seed::derive;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Cell, ExperimentConfig, Mode};
use crate::error::{HarnessError, Result};
use crate::report::read_predictions;

pub const CAPE_D: &str = "CAPE-D";
pub const CAPE_1: &str = "CAPE-1";
pub const MAX_ACC: &str = "Max_Acc";

/// Seed domains of the harness, disjoint from those used inside the core
/// crate.
pub mod tag {
    pub const TRAIN: u64 = 101;
    pub const TEST: u64 = 102;
    pub const CAPE: u64 = 103;
    pub const MAX_ACC: u64 = 104;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Setting {
    pub label: String,
    pub cell: Option<Cell>,
}

/// Ground truth of one test set.
#[derive(Debug, Clone, PartialEq)]
pub struct TestRecord {
    pub setting: usize,
    pub iteration: usize,
    pub groups: Vec<u32>,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub setting: usize,
    pub iteration: usize,
    pub algorithm: String,
    pub predictions: Vec<u8>,
    pub report: MetricsReport,
    /// Batch-mode selection details; CAPE-D only.
    pub trace: Option<SelectionTrace>,
    pub bounds: Option<BoundReport>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub dataset: String,
    pub grid: PrevalenceGrid,
    pub settings: Vec<Setting>,
    /// Per iteration, the training prevalence of each group.
    pub training_prevalence: Vec<BTreeMap<u32, f64>>,
    pub tests: Vec<TestRecord>,
    pub runs: Vec<RunRecord>,
}

impl ExperimentResult {
    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn runs_of<'a>(
        &'a self,
        setting: usize,
        algorithm: &'a str,
    ) -> impl Iterator<Item = &'a RunRecord> + 'a {
        self.runs
            .iter()
            .filter(move |r| r.setting == setting && r.algorithm == algorithm)
    }

    pub fn algorithms(&self) -> Vec<String> {
        let mut seen: Vec<String> = Vec::new();
        for r in &self.runs {
            if !seen.contains(&r.algorithm) {
                seen.push(r.algorithm.clone());
            }
        }
        seen
    }

    pub fn setting_of(&self, cell: [f64; 2]) -> Option<usize> {
        self.settings.iter().position(|s| {
            s.cell
                .is_some_and(|c| (c.rho0 - cell[0]).abs() < 1e-9 && (c.rho1 - cell[1]).abs() < 1e-9)
        })
    }
}

/// The models of one iteration.
pub struct IterationModels {
    pub ensemble: CapeEnsemble,
    pub max_acc: TrainedClassifier,
}

impl IterationModels {
    pub fn train(
        cfg: &ExperimentConfig,
        grid: &PrevalenceGrid,
        train: &Dataset,
        iteration: usize,
    ) -> cape::Result<Self> {
        let it = iteration as u64;
        let ensemble = train_cape(
            train,
            grid,
            &cfg.classifier_spec(),
            &cfg.quantifier_spec(),
            derive(cfg.seed, &[tag::CAPE, it]),
        )?;
        let max_acc = train_max_acc(
            train,
            &cfg.classifier_spec(),
            derive(cfg.seed, &[tag::MAX_ACC, it]),
        )?;
        Ok(IterationModels { ensemble, max_acc })
    }

    /// Runs CAPE-D, CAPE-1 and Max_Acc on one labeled test set.
    pub fn evaluate(
        &self,
        setting: usize,
        iteration: usize,
        test: &Dataset,
    ) -> cape::Result<(TestRecord, Vec<RunRecord>)> {
        let batch = self.ensemble.predict_batch(test)?;
        let rho: BTreeMap<u32, f64> = fairness_report(test, &batch.predictions)?.true_prevalences();
        let mut bounds = BoundReport::default();
        for (z, sel) in &batch.trace.groups {
            let grid = &self.ensemble.grid;
            bounds.groups.insert(
                *z,
                bound_for_selection(grid.thetas(), grid.epsilon(), rho[z], sel),
            );
        }
        let single = self.ensemble.predict_single(test)?;
        let baseline = self.max_acc.predict_batch(test)?;
        let record = |algorithm: &str, predictions: Vec<u8>| -> cape::Result<RunRecord> {
            Ok(RunRecord {
                setting,
                iteration,
                algorithm: algorithm.to_string(),
                report: fairness_report(test, &predictions)?,
                predictions,
                trace: None,
                bounds: None,
            })
        };
        let mut cape_d = record(CAPE_D, batch.predictions)?;
        cape_d.trace = Some(batch.trace);
        cape_d.bounds = Some(bounds);
        let runs = vec![cape_d, record(CAPE_1, single)?, record(MAX_ACC, baseline)?];
        Ok((
            TestRecord {
                setting,
                iteration,
                groups: test.groups().to_vec(),
                labels: test.labels().to_vec(),
            },
            runs,
        ))
    }
}

fn training_prevalence(e: &CapeEnsemble) -> BTreeMap<u32, f64> {
    e.groups
        .iter()
        .map(|(z, g)| (*z, g.training_prevalence))
        .collect()
}

pub fn synthetic_train_spec(cfg: &ExperimentConfig, iteration: usize) -> SyntheticSpec {
    let s = &cfg.synthetic;
    SyntheticSpec {
        prevalence: BTreeMap::from([(0, s.train_prevalence[0]), (1, s.train_prevalence[1])]),
        size: s.train_size,
        gaussians: s.gaussians,
        seed: derive(cfg.seed, &[tag::TRAIN, iteration as u64]),
    }
}

/// Test draws are keyed by the cell values, so a cell gets the same data
/// whether it is run alone or as part of the full sweep.
pub fn synthetic_test_spec(cfg: &ExperimentConfig, cell: Cell, iteration: usize) -> SyntheticSpec {
    let s = &cfg.synthetic;
    SyntheticSpec {
        prevalence: BTreeMap::from([(0, cell.rho0), (1, cell.rho1)]),
        size: s.test_size,
        gaussians: s.gaussians,
        seed: derive(
            cfg.seed,
            &[
                tag::TEST,
                iteration as u64,
                cell.rho0.to_bits(),
                cell.rho1.to_bits(),
            ],
        ),
    }
}

type IterationOutput = (BTreeMap<u32, f64>, Vec<(TestRecord, Vec<RunRecord>)>);

fn collect(
    cfg: &ExperimentConfig,
    dataset: String,
    settings: Vec<Setting>,
    per_iteration: Vec<IterationOutput>,
) -> Result<ExperimentResult> {
    let mut result = ExperimentResult {
        config: cfg.clone(),
        dataset,
        grid: cfg.grid.build()?,
        settings,
        training_prevalence: Vec::new(),
        tests: Vec::new(),
        runs: Vec::new(),
    };
    for (prev, outputs) in per_iteration {
        result.training_prevalence.push(prev);
        for (test, runs) in outputs {
            result.tests.push(test);
            result.runs.extend(runs);
        }
    }
    Ok(result)
}

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    match cfg.mode {
        Mode::SyntheticSweep | Mode::SyntheticCells => run_synthetic(cfg),
        Mode::RealData => run_real(cfg),
    }
}

/// Synthetic experiment over `cfg.cells()`.
pub fn run_synthetic(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let grid = cfg.grid.build()?;
    let cells = cfg.cells();
    let settings: Vec<Setting> = cells
        .iter()
        .map(|c| Setting {
            label: c.label(),
            cell: Some(*c),
        })
        .collect();
    let per_iteration = (0..cfg.iterations)
        .into_par_iter()
        .map(|it| -> Result<IterationOutput> {
            let wrap = |setting: &str| {
                let setting = setting.to_string();
                move |source| HarnessError::Run {
                    setting,
                    iteration: it,
                    source,
                }
            };
            let train = generate_synthetic(&synthetic_train_spec(cfg, it)).map_err(wrap("training"))?;
            let models = IterationModels::train(cfg, &grid, &train, it).map_err(wrap("training"))?;
            let outputs = cells
                .par_iter()
                .enumerate()
                .map(|(s, cell)| {
                    generate_synthetic(&synthetic_test_spec(cfg, *cell, it))
                        .and_then(|test| models.evaluate(s, it, &test))
                        .map_err(wrap(&cell.label()))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((training_prevalence(&models.ensemble), outputs))
        })
        .collect::<Result<Vec<_>>>()?;
    collect(cfg, "synthetic".into(), settings, per_iteration)
}

/// Real-data experiment: fixed train and test files, one model set per
/// iteration, plus any external prediction files scored on the same test
/// set.
pub fn run_real(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let grid = cfg.grid.build()?;
    let real = cfg
        .real
        .as_ref()
        .ok_or_else(|| HarnessError::Usage("missing [real] section".into()))?;
    let train = load_csv(&real.train, &real.schema)?;
    let test = load_csv(&real.test, &real.schema)?;
    let external = real
        .external
        .iter()
        .map(|x| {
            let preds = read_predictions(&x.path)?;
            let report = fairness_report(&test, &preds)?;
            Ok((x.name.clone(), preds, report))
        })
        .collect::<Result<Vec<_>>>()?;
    let per_iteration = (0..cfg.iterations)
        .into_par_iter()
        .map(|it| -> Result<IterationOutput> {
            let wrap = |source| HarnessError::Run {
                setting: real.name.clone(),
                iteration: it,
                source,
            };
            let models = IterationModels::train(cfg, &grid, &train, it).map_err(wrap)?;
            let (record, mut runs) = models.evaluate(0, it, &test).map_err(wrap)?;
            for (name, preds, report) in &external {
                runs.push(RunRecord {
                    setting: 0,
                    iteration: it,
                    algorithm: name.clone(),
                    predictions: preds.clone(),
                    report: report.clone(),
                    trace: None,
                    bounds: None,
                });
            }
            Ok((training_prevalence(&models.ensemble), vec![(record, runs)]))
        })
        .collect::<Result<Vec<_>>>()?;
    let settings = vec![Setting {
        label: real.name.clone(),
        cell: None,
    }];
    collect(cfg, real.name.clone(), settings, per_iteration)
}

/// Mean and population standard deviation of the defined values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Option<Stat> {
        let v: Vec<f64> = values.into_iter().flatten().collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Some(Stat {
            mean,
            std: var.sqrt(),
            count: v.len(),
        })
    }
}

/// Named scalar metrics of one report: `acc_z0`, `pd_z1`, `pe_01`, ...
pub fn metric_values(r: &MetricsReport) -> BTreeMap<String, Option<f64>> {
    let mut m = BTreeMap::new();
    for (z, g) in &r.per_group {
        m.insert(format!("acc_z{z}"), Some(g.accuracy));
        m.insert(format!("pd_z{z}"), Some(g.pd));
        m.insert(format!("pred_prev_z{z}"), Some(g.prediction_prevalence));
        m.insert(format!("true_prev_z{z}"), Some(g.true_prevalence));
        m.insert(format!("fpr_z{z}"), g.fpr);
        m.insert(format!("fnr_z{z}"), g.fnr);
    }
    for p in &r.cross_group {
        let (a, b) = (p.z, p.z2);
        m.insert(format!("pe_{a}{b}"), p.pe);
        m.insert(format!("fpr_diff_{a}{b}"), p.fpr_diff);
        m.insert(format!("fnr_diff_{a}{b}"), p.fnr_diff);
        m.insert(format!("acc_diff_{a}{b}"), Some(p.accuracy_diff));
    }
    m
}

/// Per-metric statistics across iterations for one setting and algorithm.
pub fn summarize(result: &ExperimentResult, setting: usize, algorithm: &str) -> BTreeMap<String, Stat> {
    let mut values: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    for r in result.runs_of(setting, algorithm) {
        for (k, v) in metric_values(&r.report) {
            values.entry(k).or_default().push(v);
        }
    }
    values
        .into_iter()
        .filter_map(|(k, v)| Stat::of(v).map(|s| (k, s)))
        .collect()
}
