//! Report files. Everything written here is a pure function of the
//! experiment result, so equal seeds give byte-identical output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cape::metrics::{fmt_metric, MetricsReport};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{HarnessError, Result};
use crate::experiment::{summarize, ExperimentResult, Stat, CAPE_1, CAPE_D, MAX_ACC};

pub const MANIFEST: &str = "manifest.json";
pub const RAW_PREDICTIONS: &str = "raw/predictions.csv";
pub const MANIFEST_SCHEMA: &str = "cape-run/1";

pub const DATA_FILES: [&str; 7] = [
    "figure1_accuracy.csv",
    "figure1_pd.csv",
    "figure1_pe.csv",
    "table1.csv",
    "table2.csv",
    "table3.csv",
    "bounds.csv",
];

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

fn stat_cells(s: Option<&Stat>) -> String {
    match s {
        Some(s) => format!("{:.6},{:.6}", s.mean, s.std),
        None => "undef,undef".into(),
    }
}

fn mean_cell(s: Option<&Stat>) -> String {
    fmt_metric(s.map(|s| s.mean))
}

const FIGURE_ALGORITHMS: [&str; 3] = [CAPE_D, CAPE_1, MAX_ACC];

/// One figure series: the settings with the configured group-0 prevalence,
/// by group-1 prevalence.
fn figure(result: &ExperimentResult, metric: &str) -> String {
    let mut out = String::from("rho1");
    for a in FIGURE_ALGORITHMS {
        let a = a.to_lowercase().replace('-', "_");
        write!(out, ",{a}_mean,{a}_std").unwrap();
    }
    out.push('\n');
    let rho0 = result.config.synthetic.figure_rho0;
    let mut rows: Vec<(f64, usize)> = result
        .settings
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.cell.filter(|c| (c.rho0 - rho0).abs() < 1e-9).map(|c| (c.rho1, i)))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (rho1, i) in rows {
        write!(out, "{rho1}").unwrap();
        for a in FIGURE_ALGORITHMS {
            write!(out, ",{}", stat_cells(summarize(result, i, a).get(metric))).unwrap();
        }
        out.push('\n');
    }
    out
}

fn table1(result: &ExperimentResult) -> String {
    let mut out = String::from(
        "rho0,rho1,group,true_prevalence,cape_accuracy,cape_accuracy_std,max_acc_accuracy,max_acc_accuracy_std,cape_pd,cape_pd_std,max_acc_pd,max_acc_pd_std,cape_pe,cape_pe_std,max_acc_pe,max_acc_pe_std\n",
    );
    for &cell in &result.config.synthetic.table_cells {
        let Some(i) = result.setting_of(cell) else {
            continue;
        };
        let cape = summarize(result, i, CAPE_D);
        let max = summarize(result, i, MAX_ACC);
        for z in 0..2u32 {
            let acc = format!("acc_z{z}");
            let pd = format!("pd_z{z}");
            writeln!(
                out,
                "{},{},{z},{},{},{},{},{},{},{}",
                cell[0],
                cell[1],
                cell[z as usize],
                stat_cells(cape.get(&acc)),
                stat_cells(max.get(&acc)),
                stat_cells(cape.get(&pd)),
                stat_cells(max.get(&pd)),
                stat_cells(cape.get("pe_01")),
                stat_cells(max.get("pe_01")),
            )
            .unwrap();
        }
    }
    out
}

/// Quantifier panel from the CAPE-D selection traces.
fn table2(result: &ExperimentResult) -> String {
    let mut out = String::from(
        "setting,group,training_prevalence,test_prevalence,estimate_mean,estimate_std,abs_error_mean,abs_error_std,degenerate\n",
    );
    for (i, s) in result.settings.iter().enumerate() {
        let mut per_group: BTreeMap<u32, (Vec<Option<f64>>, Vec<Option<f64>>, Vec<f64>, usize)> =
            BTreeMap::new();
        for r in result.runs_of(i, CAPE_D) {
            let trace = r.trace.as_ref().expect("CAPE-D runs carry a trace");
            for (z, sel) in &trace.groups {
                let rho = r.report.per_group[z].true_prevalence;
                let e = per_group.entry(*z).or_default();
                e.0.push(sel.estimate);
                e.1.push(sel.estimate.map(|q| (q - rho).abs()));
                e.2.push(rho);
                e.3 += usize::from(sel.estimate.is_none());
            }
        }
        for (z, (est, err, rho, degenerate)) in per_group {
            let train = Stat::of(
                result
                    .training_prevalence
                    .iter()
                    .map(|m| m.get(&z).copied()),
            );
            let rho = Stat::of(rho.into_iter().map(Some));
            writeln!(
                out,
                "{},{z},{},{},{},{},{degenerate}",
                s.label,
                mean_cell(train.as_ref()),
                mean_cell(rho.as_ref()),
                stat_cells(Stat::of(est).as_ref()),
                stat_cells(Stat::of(err).as_ref()),
            )
            .unwrap();
        }
    }
    out
}

/// Mean metrics panel with the column layout of a single-run report.
fn table3(result: &ExperimentResult) -> String {
    let mut out = format!("{}\n", MetricsReport::CSV_HEADER);
    let columns: Vec<&str> = MetricsReport::CSV_HEADER.split(',').skip(2).collect();
    for (i, s) in result.settings.iter().enumerate() {
        for a in result.algorithms() {
            let stats = summarize(result, i, &a);
            if stats.is_empty() {
                continue;
            }
            write!(out, "{},{a}", s.label).unwrap();
            for c in &columns {
                let key = match *c {
                    "fpr_diff" | "fnr_diff" | "acc_diff" => format!("{c}_01"),
                    other => other.to_string(),
                };
                write!(out, ",{}", mean_cell(stats.get(&key))).unwrap();
            }
            out.push('\n');
        }
    }
    out
}

fn bounds(result: &ExperimentResult) -> String {
    let mut out = String::from(
        "setting,iteration,group,true_prevalence,delta1,delta2,epsilon,achieved,bound,holds\n",
    );
    for r in result.runs.iter().filter(|r| r.algorithm == CAPE_D) {
        let Some(b) = &r.bounds else { continue };
        for (z, g) in &b.groups {
            writeln!(
                out,
                "{},{},{z},{:.6},{},{:.6},{},{:.6},{},{}",
                result.settings[r.setting].label,
                r.iteration,
                g.true_prevalence,
                fmt_metric(g.delta1),
                g.delta2,
                g.epsilon,
                g.achieved,
                fmt_metric(g.bound),
                g.holds.map_or("undef".to_string(), |h| h.to_string()),
            )
            .unwrap();
        }
    }
    out
}

fn digits(values: impl Iterator<Item = u32>) -> String {
    values.map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn raw_predictions(result: &ExperimentResult) -> String {
    let mut out = String::from("setting,iteration,series,values\n");
    for t in &result.tests {
        let mut row = |series: &str, values: String| {
            writeln!(out, "{},{},{series},{values}", t.setting, t.iteration).unwrap();
        };
        row("group", digits(t.groups.iter().copied()));
        row("label", digits(t.labels.iter().map(|&v| v as u32)));
        for r in result
            .runs
            .iter()
            .filter(|r| r.setting == t.setting && r.iteration == t.iteration)
        {
            row(&r.algorithm, digits(r.predictions.iter().map(|&v| v as u32)));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSetting {
    pub index: usize,
    pub label: String,
    pub rho0: Option<f64>,
    pub rho1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub version: String,
    pub dataset: String,
    pub seed: u64,
    pub iterations: usize,
    pub thetas: Vec<f64>,
    pub epsilon: f64,
    pub settings: Vec<ManifestSetting>,
    pub algorithms: Vec<String>,
    pub files: Vec<String>,
    pub bounds_checked: usize,
    pub bounds_violated: usize,
    pub config: serde_json::Value,
}

pub fn manifest(result: &ExperimentResult, files: &[&str]) -> Manifest {
    let outcomes: Vec<Option<bool>> = result
        .runs
        .iter()
        .filter_map(|r| r.bounds.as_ref())
        .flat_map(|b| b.groups.values().map(|g| g.holds))
        .collect();
    Manifest {
        schema: MANIFEST_SCHEMA.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        dataset: result.dataset.clone(),
        seed: result.config.seed,
        iterations: result.config.iterations,
        thetas: result.grid.thetas().to_vec(),
        epsilon: result.grid.epsilon(),
        settings: result
            .settings
            .iter()
            .enumerate()
            .map(|(index, s)| ManifestSetting {
                index,
                label: s.label.clone(),
                rho0: s.cell.map(|c| c.rho0),
                rho1: s.cell.map(|c| c.rho1),
            })
            .collect(),
        algorithms: result.algorithms(),
        files: files.iter().map(|f| f.to_string()).collect(),
        bounds_checked: outcomes.iter().filter(|h| h.is_some()).count(),
        bounds_violated: outcomes.iter().filter(|h| **h == Some(false)).count(),
        config: json!(result.config),
    }
}

/// Writes the seven data files, the raw predictions and the manifest into
/// `dir`. An empty result produces the manifest alone.
pub fn emit_reports(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut listed: Vec<&str> = Vec::new();
    if !result.is_empty() {
        let contents = [
            figure(result, "acc_z1"),
            figure(result, "pd_z1"),
            figure(result, "pe_01"),
            table1(result),
            table2(result),
            table3(result),
            bounds(result),
        ];
        for (name, body) in DATA_FILES.iter().zip(contents) {
            let path = dir.join(name);
            write(&path, &body)?;
            written.push(path);
            listed.push(name);
        }
        let path = dir.join(RAW_PREDICTIONS);
        write(&path, &raw_predictions(result))?;
        written.push(path);
        listed.push(RAW_PREDICTIONS);
    }
    let path = dir.join(MANIFEST);
    let m = serde_json::to_string_pretty(&manifest(result, &listed)).expect("manifest serializes");
    write(&path, &(m + "\n"))?;
    written.push(path);
    Ok(written)
}

/// Rows of the raw predictions file, keyed by `(setting, iteration)` and
/// then by series name (`group`, `label`, or an algorithm).
pub type RawPredictions = BTreeMap<(usize, usize), BTreeMap<String, Vec<u32>>>;

pub fn read_raw_predictions(path: &Path) -> Result<RawPredictions> {
    let csv_err = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out = RawPredictions::new();
    for row in reader.records() {
        let row = row.map_err(csv_err)?;
        let bad = || HarnessError::Data(cape::Error::Format(format!("{}: malformed row {row:?}", path.display())));
        let setting: usize = row[0].parse().map_err(|_| bad())?;
        let iteration: usize = row[1].parse().map_err(|_| bad())?;
        let values = row[3]
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|v| v.parse::<u32>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        out.entry((setting, iteration))
            .or_default()
            .insert(row[2].to_string(), values);
    }
    Ok(out)
}

/// Reads a prediction file with a `prediction` column of 0/1 values, one
/// row per test instance in file order.
pub fn read_predictions(path: &Path) -> Result<Vec<u8>> {
    let csv_err = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let col = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .position(|h| h == "prediction")
        .ok_or_else(|| cape::Error::MissingColumn("prediction".into()))?;
    reader
        .records()
        .enumerate()
        .map(|(i, row)| {
            let row = row.map_err(csv_err)?;
            match row.get(col).map(str::trim) {
                Some("0") => Ok(0),
                Some("1") => Ok(1),
                other => Err(cape::Error::Row {
                    path: path.to_path_buf(),
                    line: i as u64 + 2,
                    message: format!("prediction must be 0 or 1, got {other:?}"),
                }
                .into()),
            }
        })
        .collect()
}

/// Writes `row,group,prediction`.
pub fn write_predictions(path: &Path, groups: &[u32], predictions: &[u8]) -> Result<()> {
    let mut out = String::from("row,group,prediction\n");
    for (i, (g, p)) in groups.iter().zip(predictions).enumerate() {
        writeln!(out, "{i},{g},{p}").unwrap();
    }
    write(path, &out)
}

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    write(path, contents)
}
