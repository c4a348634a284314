use std::path::Path;

use cape::dataset::{default_feature_names, write_csv, CsvSchema, Dataset};
use cape::metrics::fairness_report;
use cape_harness::config::RealConfig;
use cape_harness::experiment::{summarize, CAPE_D, MAX_ACC};
use cape_harness::report::{read_raw_predictions, Manifest, DATA_FILES, MANIFEST, RAW_PREDICTIONS};
use cape_harness::{emit_reports, fixtures, run_real, run_synthetic, ExperimentConfig, Mode};

fn tiny(mode: Mode) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        mode,
        iterations: 2,
        seed: 11,
        ..ExperimentConfig::default()
    };
    cfg.synthetic.train_size = 1_000;
    cfg.synthetic.test_size = 400;
    cfg.quantifier.folds = 3;
    cfg.classifier.max_iterations = Some(100);
    cfg
}

fn real(train: &Dataset, test: &Dataset, dir: &Path) -> ExperimentConfig {
    let names = default_feature_names(train.dim());
    write_csv(train, dir.join("train.csv"), &names).unwrap();
    write_csv(test, dir.join("test.csv"), &names).unwrap();
    let mut cfg = tiny(Mode::RealData);
    cfg.real = Some(RealConfig {
        name: "fixture".into(),
        train: dir.join("train.csv"),
        test: dir.join("test.csv"),
        schema: CsvSchema::new("group", "label"),
        external: Vec::new(),
    });
    cfg
}

#[test]
fn sweep_writes_every_file_and_lists_all_settings() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(Mode::SyntheticSweep);
    cfg.iterations = 1;
    let r = run_synthetic(&cfg).unwrap();
    emit_reports(&r, dir.path()).unwrap();
    for f in DATA_FILES.iter().chain([&RAW_PREDICTIONS, &MANIFEST]) {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let m: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.path().join(MANIFEST)).unwrap()).unwrap();
    assert_eq!(m.settings.len(), 81);
    assert_eq!(m.algorithms, ["CAPE-D", "CAPE-1", "Max_Acc"]);
    assert_eq!(m.bounds_violated, 0);
    let fig = std::fs::read_to_string(dir.path().join("figure1_pd.csv")).unwrap();
    assert_eq!(fig.lines().count(), 10);
}

#[test]
fn empty_result_writes_only_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(Mode::SyntheticCells);
    cfg.iterations = 1;
    cfg.synthetic.cells = vec![[0.5, 0.5]];
    let mut r = run_synthetic(&cfg).unwrap();
    r.runs.clear();
    r.tests.clear();
    emit_reports(&r, dir.path()).unwrap();
    let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(entries.len(), 1);
    let m: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.path().join(MANIFEST)).unwrap()).unwrap();
    assert!(m.files.is_empty());
}

#[test]
fn same_seed_same_bytes() {
    let mut cfg = tiny(Mode::SyntheticCells);
    cfg.synthetic.cells = vec![[0.2, 0.8], [0.6, 0.4]];
    let outputs: Vec<Vec<Vec<u8>>> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            emit_reports(&run_synthetic(&cfg).unwrap(), dir.path()).unwrap();
            DATA_FILES
                .iter()
                .chain([&RAW_PREDICTIONS, &MANIFEST])
                .map(|f| std::fs::read(dir.path().join(f)).unwrap())
                .collect()
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn cells_draw_the_same_data_alone_or_together() {
    let mut alone = tiny(Mode::SyntheticCells);
    alone.synthetic.cells = vec![[0.3, 0.7]];
    let mut together = alone.clone();
    together.synthetic.cells = vec![[0.1, 0.1], [0.3, 0.7]];
    let a = run_synthetic(&alone).unwrap();
    let b = run_synthetic(&together).unwrap();
    let labels = |r: &cape_harness::ExperimentResult, s| {
        r.tests.iter().filter(|t| t.setting == s).map(|t| t.labels.clone()).collect::<Vec<_>>()
    };
    assert_eq!(labels(&a, 0), labels(&b, 1));
}

#[test]
fn metrics_rederive_from_raw_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(Mode::SyntheticCells);
    cfg.synthetic.cells = vec![[0.3, 0.6]];
    let r = run_synthetic(&cfg).unwrap();
    emit_reports(&r, dir.path()).unwrap();
    let raw = read_raw_predictions(&dir.path().join(RAW_PREDICTIONS)).unwrap();
    assert_eq!(raw.len(), 2);
    for run in &r.runs {
        let series = &raw[&(run.setting, run.iteration)];
        let rows = series["group"]
            .iter()
            .zip(&series["label"])
            .map(|(&g, &y)| cape::dataset::Instance {
                features: vec![0.0],
                group: g,
                label: y as u8,
            })
            .collect();
        let d = Dataset::from_instances(rows, Some(2)).unwrap();
        let preds: Vec<u8> = series[&run.algorithm].iter().map(|&p| p as u8).collect();
        assert_eq!(preds, run.predictions);
        assert_eq!(fairness_report(&d, &preds).unwrap(), run.report);
    }
    let table3 = std::fs::read_to_string(dir.path().join("table3.csv")).unwrap();
    assert!(!table3.lines().skip(1).any(|l| l.contains("undef")), "{table3}");
}

#[test]
fn bounds_rows_match_selection_traces() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(Mode::SyntheticCells);
    cfg.synthetic.cells = vec![[0.25, 0.75]];
    let r = run_synthetic(&cfg).unwrap();
    emit_reports(&r, dir.path()).unwrap();
    let mut reader = csv::Reader::from_path(dir.path().join("bounds.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2 * 2);
    for row in &rows {
        let achieved: f64 = row[7].parse().unwrap();
        let bound: f64 = row[8].parse().unwrap();
        assert_eq!(&row[9], if achieved <= bound + 1e-12 { "true" } else { "false" });
    }
}

#[test]
fn training_on_the_test_set_leaves_little_max_acc_shift() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = fixtures::generate(&fixtures::COMPAS.scaled(0.5), 3).unwrap();
    let r = run_real(&real(&train, &train, dir.path())).unwrap();
    let max = summarize(&r, 0, MAX_ACC);
    // no prior shift, so only classifier bias separates ρ from ρ̂
    assert!(max["pd_z0"].mean < 0.1, "{:?}", max["pd_z0"]);
    assert!(max["pd_z1"].mean < 0.1, "{:?}", max["pd_z1"]);
}

#[test]
fn meps_fixture_cape_tracks_prevalence_better_than_max_acc() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = fixtures::generate(&fixtures::MEPS.scaled(0.2), 4).unwrap();
    let r = run_real(&real(&train, &test, dir.path())).unwrap();
    let cape = summarize(&r, 0, CAPE_D);
    let max = summarize(&r, 0, MAX_ACC);
    for z in 0..2 {
        let k = format!("pd_z{z}");
        assert!(cape[&k].mean <= max[&k].mean, "{k}: {:?} vs {:?}", cape[&k], max[&k]);
    }
}

#[test]
fn compas_fixture_quantifier_error_is_small() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = fixtures::generate(&fixtures::COMPAS, 5).unwrap();
    let mut cfg = real(&train, &test, dir.path());
    cfg.iterations = 1;
    cfg.quantifier.folds = 10;
    cfg.classifier.max_iterations = None;
    cfg.classifier.kind = Some(cape::classifier::ClassifierKind::GradientBoostedStumps);
    let r = run_real(&cfg).unwrap();
    emit_reports(&r, dir.path()).unwrap();
    let mut reader = csv::Reader::from_path(dir.path().join("table2.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    for row in &rows {
        let error: f64 = row[6].parse().unwrap();
        assert!(error < 0.1, "{row:?}");
        assert_eq!(&row[8], "0");
    }
}

#[test]
fn book_config_examples_parse() {
    let chapter = include_str!("../../../book/src/experiments.md");
    let blocks: Vec<&str> = chapter
        .split("```toml\n")
        .skip(1)
        .map(|b| b.split("```").next().unwrap())
        .collect();
    assert_eq!(blocks.len(), 2);
    for b in blocks {
        let cfg = ExperimentConfig::from_toml(b, Path::new("book/example.toml")).unwrap();
        cfg.validate().unwrap();
    }
}
