//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored. List
//! values are comma separated. Every key has a default (see
//! [`ExperimentConfig::default`]), so an empty file is a valid config.
//! `rmd.lambda`, `weight_decay.eta` and friends override the shared grid for
//! one algorithm.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::optimizer::{Algorithm, StoppingRule, Window};
use crate::parallel::Execution;
use crate::potential::PotentialSpec;

/// Line number used in diagnostics for settings given on the command line.
pub const COMMAND_LINE: usize = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelKind {
    /// `[d, hidden..., classes]` tanh network
    Mlp { hidden: Vec<usize> },
    /// `classes × d` linear map
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub algorithms: Vec<Algorithm>,
    pub model: ModelKind,
    pub potential: PotentialSpec,
    pub lambdas: Vec<f64>,
    pub etas: Vec<f64>,
    pub lambda_overrides: BTreeMap<Algorithm, Vec<f64>>,
    pub eta_overrides: BTreeMap<Algorithm, Vec<f64>>,
    pub classes: usize,
    pub d: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub noise: f64,
    pub separation: f64,
    /// Headerless CSV (features then class label) replacing the synthetic
    /// training set.
    pub train_csv: Option<PathBuf>,
    pub test_csv: Option<PathBuf>,
    pub corruption: f64,
    pub seed: u64,
    pub batch_size: usize,
    pub epochs: usize,
    pub stop_window: usize,
    pub stop_tol: f64,
    pub log_every: usize,
    pub init_std: f64,
    pub z_init_std: f64,
    pub epsilon_guard: f64,
    pub parallel: bool,
    pub out: PathBuf,
    pub force: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            algorithms: vec![Algorithm::Rmd],
            model: ModelKind::Mlp {
                hidden: vec![64, 64],
            },
            potential: PotentialSpec::SquaredL2,
            lambdas: vec![1.0],
            etas: vec![0.01],
            lambda_overrides: BTreeMap::new(),
            eta_overrides: BTreeMap::new(),
            classes: 10,
            d: 20,
            n_train: 500,
            n_test: 500,
            noise: 1.0,
            separation: 1.0,
            train_csv: None,
            test_csv: None,
            corruption: 0.0,
            seed: 0,
            batch_size: 32,
            epochs: 2000,
            stop_window: 500,
            stop_tol: 1e-4,
            log_every: 1,
            init_std: 0.1,
            z_init_std: 0.0,
            epsilon_guard: 1e-12,
            parallel: true,
            out: PathBuf::from("metrics.csv"),
            force: false,
        }
    }
}

/// One training run of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub index: usize,
    pub algorithm: Algorithm,
    /// `None` for algorithms without a regularization parameter.
    pub lambda: Option<f64>,
    pub eta: f64,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Config {
                    line,
                    field: content.to_string(),
                    message: "expected `key = value`".into(),
                });
            };
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config {
                    line,
                    field: key.to_string(),
                    message: "duplicate key".into(),
                });
            }
            cfg.set(key, value.trim(), line)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one setting; `line` is only used for diagnostics.
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let err = |message: String| Error::Config {
            line,
            field: key.to_string(),
            message,
        };
        if let Some((algo, param)) = key.split_once('.') {
            let algorithm: Algorithm = algo.parse().map_err(|e: Error| err(e.to_string()))?;
            let values = parse_list(value).map_err(err)?;
            match param {
                "lambda" => self.lambda_overrides.insert(algorithm, values),
                "eta" => self.eta_overrides.insert(algorithm, values),
                _ => return Err(err(format!("unknown per-algorithm setting `{param}`"))),
            };
            return Ok(());
        }
        match key {
            "name" => self.name = value.to_string(),
            "algorithm" => self.algorithms = parse_list(value).map_err(err)?,
            "model" => {
                self.model = match value {
                    "mlp" => ModelKind::Mlp {
                        hidden: match &self.model {
                            ModelKind::Mlp { hidden } => hidden.clone(),
                            ModelKind::Linear => vec![64, 64],
                        },
                    },
                    "linear" => ModelKind::Linear,
                    _ => return Err(err(format!("expected `mlp` or `linear`, got `{value}`"))),
                }
            }
            "hidden" => {
                let hidden = parse_list(value).map_err(err)?;
                if let ModelKind::Mlp { hidden: h } = &mut self.model {
                    *h = hidden;
                } else {
                    return Err(err("`hidden` needs `model = mlp` first".into()));
                }
            }
            "potential" => self.potential = parse_one(value).map_err(err)?,
            "lambda" => self.lambdas = parse_list(value).map_err(err)?,
            "eta" => self.etas = parse_list(value).map_err(err)?,
            "classes" => self.classes = parse_one(value).map_err(err)?,
            "d" => self.d = parse_one(value).map_err(err)?,
            "n_train" => self.n_train = parse_one(value).map_err(err)?,
            "n_test" => self.n_test = parse_one(value).map_err(err)?,
            "noise" => self.noise = parse_one(value).map_err(err)?,
            "separation" => self.separation = parse_one(value).map_err(err)?,
            "train_csv" => self.train_csv = Some(PathBuf::from(value)),
            "test_csv" => self.test_csv = Some(PathBuf::from(value)),
            "corruption" => self.corruption = parse_one(value).map_err(err)?,
            "seed" => self.seed = parse_one(value).map_err(err)?,
            "batch_size" => self.batch_size = parse_one(value).map_err(err)?,
            "epochs" => self.epochs = parse_one(value).map_err(err)?,
            "stop_window" => self.stop_window = parse_one(value).map_err(err)?,
            "stop_tol" => self.stop_tol = parse_one(value).map_err(err)?,
            "log_every" => self.log_every = parse_one(value).map_err(err)?,
            "init_std" => self.init_std = parse_one(value).map_err(err)?,
            "z_init_std" => self.z_init_std = parse_one(value).map_err(err)?,
            "epsilon_guard" => self.epsilon_guard = parse_one(value).map_err(err)?,
            "parallel" => self.parallel = parse_one(value).map_err(err)?,
            "out" => self.out = PathBuf::from(value),
            "force" => self.force = parse_one(value).map_err(err)?,
            _ => return Err(err("unknown key".into())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let err = |field: &str, message: String| Error::Config {
            line: COMMAND_LINE,
            field: field.to_string(),
            message,
        };
        if !(0.0..=1.0).contains(&self.corruption) {
            return Err(err(
                "corruption",
                format!("must lie in [0, 1], got {}", self.corruption),
            ));
        }
        if self.algorithms.is_empty() {
            return Err(err("algorithm", "empty list".into()));
        }
        for cell_grid in [&self.lambdas, &self.etas]
            .into_iter()
            .chain(self.lambda_overrides.values())
            .chain(self.eta_overrides.values())
        {
            if cell_grid.is_empty() || cell_grid.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(err(
                    "lambda/eta",
                    format!("grids must be nonempty and positive, got {cell_grid:?}"),
                ));
            }
        }
        let positive = [
            ("classes", self.classes),
            ("d", self.d),
            ("n_train", self.n_train),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("stop_window", self.stop_window),
            ("log_every", self.log_every),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(err(field, "must be positive".into()));
            }
        }
        if self.classes < 2 {
            return Err(err("classes", "need at least two classes".into()));
        }
        if let ModelKind::Mlp { hidden } = &self.model {
            if hidden.contains(&0) {
                return Err(err("hidden", "widths must be positive".into()));
            }
        }
        for (field, v) in [
            ("noise", self.noise),
            ("separation", self.separation),
            ("stop_tol", self.stop_tol),
            ("init_std", self.init_std),
            ("z_init_std", self.z_init_std),
            ("epsilon_guard", self.epsilon_guard),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(err(
                    field,
                    format!("must be finite and nonnegative, got {v}"),
                ));
            }
        }
        Ok(())
    }

    pub fn model_spec(&self, d: usize) -> Result<ModelSpec> {
        match &self.model {
            ModelKind::Linear => Ok(ModelSpec::Linear {
                inputs: d,
                outputs: self.classes,
            }),
            ModelKind::Mlp { hidden } => {
                let mut widths = vec![d];
                widths.extend(hidden);
                widths.push(self.classes);
                ModelSpec::mlp(widths)
            }
        }
    }

    pub fn lambdas_for(&self, algorithm: Algorithm) -> &[f64] {
        self.lambda_overrides
            .get(&algorithm)
            .unwrap_or(&self.lambdas)
    }

    pub fn etas_for(&self, algorithm: Algorithm) -> &[f64] {
        self.eta_overrides.get(&algorithm).unwrap_or(&self.etas)
    }

    /// Sweep order: algorithms as listed, then λ, then η. Algorithms without
    /// a regularization parameter get one cell per η.
    pub fn grid(&self) -> Vec<GridCell> {
        let mut cells = Vec::new();
        for &algorithm in &self.algorithms {
            let lambdas: Vec<Option<f64>> = if algorithm.uses_lambda() {
                self.lambdas_for(algorithm)
                    .iter()
                    .copied()
                    .map(Some)
                    .collect()
            } else {
                vec![None]
            };
            for lambda in lambdas {
                for &eta in self.etas_for(algorithm) {
                    cells.push(GridCell {
                        index: cells.len(),
                        algorithm,
                        lambda,
                        eta,
                    });
                }
            }
        }
        cells
    }

    pub fn stopping_rule(&self, algorithm: Algorithm) -> StoppingRule {
        StoppingRule::for_algorithm(
            algorithm,
            Window {
                epochs: self.stop_window,
                tol: self.stop_tol,
            },
        )
    }

    pub fn execution(&self) -> Execution {
        if self.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

fn parse_one<T>(value: &str) -> std::result::Result<T, String>
where
    T: FromStr,
    T::Err: Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| format!("cannot parse `{value}`: {e}"))
}

fn parse_list<T>(value: &str) -> std::result::Result<Vec<T>, String>
where
    T: FromStr,
    T::Err: Display,
{
    value
        .split(',')
        .filter(|v| !v.trim().is_empty())
        .map(parse_one)
        .collect()
}
