use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cape::classifier::{ClassifierKind, TrainedClassifier};
use cape::dataset::{
    default_feature_names, generate_synthetic, load_csv, load_unlabeled_csv, write_csv,
    CsvSchema, SyntheticSpec,
};
use cape::ensemble::{train_cape, train_max_acc, CapeEnsemble, SCHEMA};
use cape::metrics::{fairness_report, MetricsReport};
use cape::quantify::QuantifierKind;
use cape_harness::report::{read_predictions, write_predictions, write_text};
use cape_harness::{emit_reports, run, ExperimentConfig, HarnessError, Mode, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cape", version, about = "Prevalence-calibrated fair classification")]
struct Cli {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Small-scale profile (5000 training rows, 5 iterations).
    #[arg(long, global = true)]
    fast: bool,
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-feature dataset.
    Gen {
        /// Per-group prevalences, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.5")]
        prevalence: Vec<f64>,
        #[arg(long, default_value_t = 50_000)]
        size: usize,
    },
    /// Train a CAPE ensemble on a labeled CSV.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        schema: SchemaArgs,
        #[arg(long)]
        classifier: Option<ClassifierKind>,
        #[arg(long)]
        quantifier: Option<QuantifierKind>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Also train the pooled baseline classifier and write it here.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Predict with a trained ensemble or baseline model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        schema: SchemaArgs,
        /// Decide each instance on its own instead of per group batch.
        #[arg(long)]
        single: bool,
        /// Write the batch selection trace as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Score a prediction file against labeled data.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[command(flatten)]
        schema: SchemaArgs,
        #[arg(long, default_value = "model")]
        name: String,
    },
    /// Run the synthetic experiment.
    Sweep,
    /// Run the real-data experiment.
    Real(RealArgs),
}

#[derive(Args, Clone)]
struct SchemaArgs {
    #[arg(long, default_value = "group")]
    group_column: String,
    #[arg(long, default_value = "label")]
    label_column: String,
    /// Feature columns, comma separated; every other column if absent.
    #[arg(long, value_delimiter = ',')]
    features: Vec<String>,
}

impl SchemaArgs {
    fn schema(&self) -> CsvSchema {
        CsvSchema {
            feature_columns: self.features.clone(),
            ..CsvSchema::new(&self.group_column, &self.label_column)
        }
    }
}

#[derive(Args)]
struct RealArgs {
    #[arg(long, requires = "test")]
    train: Option<PathBuf>,
    #[arg(long, requires = "train")]
    test: Option<PathBuf>,
    #[arg(long, default_value = "real")]
    name: String,
    #[command(flatten)]
    schema: SchemaArgs,
    #[arg(long)]
    classifier: Option<ClassifierKind>,
}

fn config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if cli.fast {
        cfg = cfg.fast();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn out_path(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn gen(cli: &Cli, prevalence: &[f64], size: usize) -> Result<()> {
    let cfg = config(cli)?;
    let spec = SyntheticSpec {
        prevalence: (0u32..).zip(prevalence.iter().copied()).collect(),
        size,
        gaussians: cfg.synthetic.gaussians,
        seed: cfg.seed,
    };
    let d = generate_synthetic(&spec)?;
    write_csv(&d, out_path(cli, "synthetic.csv"), &default_feature_names(d.dim()))?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train(
    cli: &Cli,
    data: &Path,
    schema: &SchemaArgs,
    classifier: Option<ClassifierKind>,
    quantifier: Option<QuantifierKind>,
    epsilon: Option<f64>,
    baseline: Option<&Path>,
) -> Result<()> {
    let mut cfg = config(cli)?;
    cfg.classifier.kind = classifier.or(cfg.classifier.kind);
    if let Some(q) = quantifier {
        cfg.quantifier.kind = q;
    }
    if let Some(e) = epsilon {
        cfg.grid.epsilon = e;
        cfg.grid.thetas = None;
    }
    let d = load_csv(data, &schema.schema())?;
    let e = train_cape(
        &d,
        &cfg.grid.build()?,
        &cfg.classifier_spec(),
        &cfg.quantifier_spec(),
        cfg.seed,
    )?;
    write_text(&out_path(cli, "model.json"), &e.to_json()?)?;
    if let Some(path) = baseline {
        let m = train_max_acc(&d, &cfg.classifier_spec(), cfg.seed)?;
        write_text(path, &m.to_json()?)?;
    }
    Ok(())
}

fn predict(
    cli: &Cli,
    model: &Path,
    data: &Path,
    schema: &SchemaArgs,
    single: bool,
    trace: Option<&Path>,
) -> Result<()> {
    let text = read_text(model)?;
    let d = load_unlabeled_csv(data, &schema.schema())?;
    let is_ensemble = serde_json::from_str::<serde_json::Value>(&text)
        .map_err(cape::Error::from)?
        .get("schema")
        .and_then(|s| s.as_str())
        == Some(SCHEMA);
    let predictions = if is_ensemble {
        let e = CapeEnsemble::from_json(&text)?;
        let batch = e.predict_batch(&d)?;
        if let Some(path) = trace {
            let json = serde_json::to_string_pretty(&batch.trace).map_err(cape::Error::from)?;
            write_text(path, &json)?;
        }
        if single {
            e.predict_single(&d)?
        } else {
            batch.predictions
        }
    } else {
        TrainedClassifier::from_json(&text)?.predict_batch(&d)?
    };
    write_predictions(&out_path(cli, "predictions.csv"), d.groups(), &predictions)
}

fn evaluate(cli: &Cli, data: &Path, predictions: &Path, schema: &SchemaArgs, name: &str) -> Result<()> {
    let d = load_csv(data, &schema.schema())?;
    let preds = read_predictions(predictions)?;
    let report = fairness_report(&d, &preds)?;
    let dataset = data
        .file_stem()
        .map_or("data".into(), |s| s.to_string_lossy().into_owned());
    let csv = format!(
        "{}\n{}\n",
        MetricsReport::CSV_HEADER,
        report.csv_row(&dataset, name)
    );
    match &cli.out {
        Some(dir) => {
            write_text(&dir.join("metrics.csv"), &csv)?;
            write_text(&dir.join("metrics.json"), &report.to_json()?)?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn experiment(cli: &Cli, real: Option<&RealArgs>) -> Result<()> {
    let mut cfg = config(cli)?;
    match real {
        Some(args) => {
            cfg.mode = Mode::RealData;
            if let Some(k) = args.classifier {
                cfg.classifier.kind = Some(k);
            }
            if let (Some(train), Some(test)) = (&args.train, &args.test) {
                cfg.real = Some(cape_harness::config::RealConfig {
                    name: args.name.clone(),
                    train: train.clone(),
                    test: test.clone(),
                    schema: args.schema.schema(),
                    external: Vec::new(),
                });
            }
        }
        None if cfg.mode == Mode::RealData => {
            return Err(HarnessError::Usage(
                "config mode is real_data; use the `real` command".into(),
            ))
        }
        None => {}
    }
    let result = run(&cfg)?;
    let violated = result
        .runs
        .iter()
        .filter_map(|r| r.bounds.as_ref())
        .filter(|b| !b.all_hold())
        .count();
    emit_reports(&result, &cfg.output_dir)?;
    if violated > 0 {
        log::warn!("{violated} runs exceeded the selection bound; see bounds.csv");
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen { prevalence, size } => gen(cli, prevalence, *size),
        Command::Train {
            data,
            schema,
            classifier,
            quantifier,
            epsilon,
            baseline,
        } => train(
            cli,
            data,
            schema,
            *classifier,
            *quantifier,
            *epsilon,
            baseline.as_deref(),
        ),
        Command::Predict {
            model,
            data,
            schema,
            single,
            trace,
        } => predict(cli, model, data, schema, *single, trace.as_deref()),
        Command::Evaluate {
            data,
            predictions,
            schema,
            name,
        } => evaluate(cli, data, predictions, schema, name),
        Command::Sweep => experiment(cli, None),
        Command::Real(args) => experiment(cli, Some(args)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    // Panics are broken invariants, not bad input.
    match std::panic::catch_unwind(|| dispatch(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => ExitCode::from(3),
    }
}
