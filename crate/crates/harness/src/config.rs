//! Experiment configuration, read from a TOML file and adjusted by
//! command-line overrides.

use std::path::{Path, PathBuf};

use cape::classifier::{ClassifierKind, ClassifierSpec};
use cape::dataset::{CsvSchema, SyntheticGaussians};
use cape::ensemble::PrevalenceGrid;
use cape::quantify::{QuantifierKind, QuantifierSpec};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Every ordered pair drawn from `synthetic.test_prevalences`.
    SyntheticSweep,
    /// Only the pairs listed in `synthetic.cells`.
    SyntheticCells,
    RealData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,
    pub iterations: usize,
    pub output_dir: PathBuf,
    pub grid: GridConfig,
    pub synthetic: SyntheticConfig,
    pub classifier: ClassifierConfig,
    pub quantifier: QuantifierConfig,
    pub real: Option<RealConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::SyntheticSweep,
            seed: 2020,
            iterations: 20,
            output_dir: PathBuf::from("out"),
            grid: GridConfig::default(),
            synthetic: SyntheticConfig::default(),
            classifier: ClassifierConfig::default(),
            quantifier: QuantifierConfig::default(),
            real: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub epsilon: f64,
    /// Explicit grid; the canonical midpoints of width `epsilon` if absent.
    pub thetas: Option<Vec<f64>>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            epsilon: 0.1,
            thetas: None,
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<PrevalenceGrid> {
        Ok(match &self.thetas {
            Some(t) => PrevalenceGrid::custom(t.clone(), self.epsilon)?,
            None => PrevalenceGrid::canonical(self.epsilon)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub train_size: usize,
    pub test_size: usize,
    pub train_prevalence: [f64; 2],
    pub test_prevalences: Vec<f64>,
    pub cells: Vec<[f64; 2]>,
    /// Cells reported in `table1.csv`.
    pub table_cells: Vec<[f64; 2]>,
    /// Group-0 prevalence of the settings plotted in the figure files.
    pub figure_rho0: f64,
    pub gaussians: SyntheticGaussians,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let table_cells = vec![[0.1, 0.1], [0.2, 0.8], [0.9, 0.9]];
        SyntheticConfig {
            train_size: 50_000,
            test_size: 5_000,
            train_prevalence: [0.5, 0.5],
            test_prevalences: (1..=9).map(|i| i as f64 / 10.0).collect(),
            cells: table_cells.clone(),
            table_cells,
            figure_rho0: 0.5,
            gaussians: SyntheticGaussians::default(),
        }
    }
}

/// Classifier settings; unset fields take the defaults of `kind`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub kind: Option<ClassifierKind>,
    pub l2_penalty: Option<f64>,
    pub learning_rate: Option<f64>,
    pub max_iterations: Option<usize>,
    pub tolerance: Option<f64>,
    pub threshold: Option<f64>,
}

impl ClassifierConfig {
    pub fn spec(&self) -> ClassifierSpec {
        let base = match self.kind.unwrap_or(ClassifierKind::LogisticRegression) {
            ClassifierKind::LogisticRegression => ClassifierSpec::logistic(),
            ClassifierKind::GradientBoostedStumps => ClassifierSpec::boosting(),
        };
        ClassifierSpec {
            l2_penalty: self.l2_penalty.unwrap_or(base.l2_penalty),
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            max_iterations: self.max_iterations.unwrap_or(base.max_iterations),
            tolerance: self.tolerance.unwrap_or(base.tolerance),
            threshold: self.threshold.unwrap_or(base.threshold),
            ..base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantifierConfig {
    pub kind: QuantifierKind,
    pub folds: usize,
    pub clamp: bool,
}

impl Default for QuantifierConfig {
    fn default() -> Self {
        QuantifierConfig {
            kind: QuantifierKind::Spa,
            folds: 10,
            clamp: true,
        }
    }
}

impl QuantifierConfig {
    pub fn spec(&self, classifier: ClassifierSpec) -> QuantifierSpec {
        QuantifierSpec {
            kind: self.kind,
            folds: self.folds,
            clamp: self.clamp,
            ..QuantifierSpec::spa(classifier)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealConfig {
    pub name: String,
    pub train: PathBuf,
    pub test: PathBuf,
    pub schema: CsvSchema,
    /// Prediction files from other methods, scored alongside CAPE.
    #[serde(default)]
    pub external: Vec<ExternalPredictions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalPredictions {
    pub name: String,
    pub path: PathBuf,
}

/// One synthetic test condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub rho0: f64,
    pub rho1: f64,
}

impl Cell {
    pub fn label(&self) -> String {
        format!("synthetic:{}/{}", self.rho0, self.rho1)
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        // Data paths are relative to the config file.
        if let (Some(real), Some(dir)) = (cfg.real.as_mut(), path.parent()) {
            for p in std::iter::once(&mut real.train)
                .chain(std::iter::once(&mut real.test))
                .chain(real.external.iter_mut().map(|x| &mut x.path))
            {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Small-scale profile for quick runs.
    pub fn fast(mut self) -> Self {
        self.synthetic.train_size = 5_000;
        self.iterations = 5;
        self
    }

    pub fn classifier_spec(&self) -> ClassifierSpec {
        self.classifier.spec()
    }

    pub fn quantifier_spec(&self) -> QuantifierSpec {
        self.quantifier.spec(self.classifier_spec())
    }

    pub fn cells(&self) -> Vec<Cell> {
        let pairs: Vec<[f64; 2]> = match self.mode {
            Mode::SyntheticSweep => {
                let p = &self.synthetic.test_prevalences;
                p.iter()
                    .flat_map(|&a| p.iter().map(move |&b| [a, b]))
                    .collect()
            }
            Mode::SyntheticCells => self.synthetic.cells.clone(),
            Mode::RealData => Vec::new(),
        };
        pairs
            .into_iter()
            .map(|[rho0, rho1]| Cell { rho0, rho1 })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |m: String| Err(HarnessError::Usage(m));
        if self.iterations == 0 {
            return usage("iterations must be >= 1".into());
        }
        self.classifier_spec().validate()?;
        self.grid.build()?;
        match self.mode {
            Mode::RealData if self.real.is_none() => {
                usage("mode real_data needs a [real] section".into())
            }
            Mode::SyntheticSweep | Mode::SyntheticCells => {
                let s = &self.synthetic;
                if s.train_size < 2 || s.test_size < 2 {
                    return usage("synthetic sizes must be >= 2".into());
                }
                let all = s
                    .train_prevalence
                    .iter()
                    .chain(&s.test_prevalences)
                    .chain(s.cells.iter().flatten());
                if let Some(p) = all.into_iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    return usage(format!("prevalence {p} is outside [0, 1]"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}
