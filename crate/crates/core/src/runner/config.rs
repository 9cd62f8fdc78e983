//! Experiment files, training schemes and grid expansion.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_csv, load_idx, normalize, synthetic_dataset, Dataset, NormMode, SyntheticKind, SyntheticSpec};
use crate::error::{Error, Result};
use crate::hsic::HsicConfig;
use crate::nn::{Initialization, ModelConfig};
use crate::optim::OptimizerKind;

pub const CONFIG_VERSION: u32 = 1;
pub const DEFAULT_MAX_EPOCHS: usize = 30;
pub const DEFAULT_LEARNING_RATES: [f64; 3] = [0.05, 0.005, 0.0005];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trainer {
    #[default]
    Backprop,
    Hsic,
}

impl fmt::Display for Trainer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Trainer::Backprop => "backprop",
            Trainer::Hsic => "hsic",
        })
    }
}

/// `{initialization, optimizer, initial learning rate, batch size,
/// stopping}` plus the trainer that consumes it. Stopping is a fixed epoch
/// budget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainingScheme {
    pub init: Initialization,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub trainer: Trainer,
}

impl TrainingScheme {
    pub fn label(&self) -> String {
        format!("{}/{}/{}", self.init, self.optimizer, self.lr)
    }
}

/// Where the train and test splits come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", rename_all_fields = "kebab-case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Generated data; the first `train` points form the training split.
    Synthetic {
        kind: SyntheticKind,
        train: usize,
        test: usize,
        #[serde(default = "two")]
        dim: usize,
        #[serde(default = "two")]
        classes: usize,
        #[serde(default = "ten")]
        separation: f64,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
    /// `train-images-idx3-ubyte` etc. inside `dir`. Limits keep the first
    /// examples of each split.
    Idx {
        dir: PathBuf,
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
    },
    Csv {
        train: PathBuf,
        test: PathBuf,
        label: String,
        #[serde(default)]
        features: Option<Vec<String>>,
    },
}

fn two() -> usize {
    2
}
fn ten() -> f64 {
    10.0
}

impl DatasetSource {
    pub fn name(&self) -> String {
        match self {
            DatasetSource::Synthetic { kind, .. } => kind.to_string(),
            DatasetSource::Idx { dir, .. } => dir
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "idx".into()),
            DatasetSource::Csv { train, .. } => train
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "csv".into()),
        }
    }

    /// Loads both splits (paths relative to `base`) and normalizes them
    /// with statistics of the training split.
    pub fn load(&self, base: &Path, mode: NormMode) -> Result<(Dataset, Dataset)> {
        let name = self.name();
        let (train, test) = match self {
            DatasetSource::Synthetic {
                kind,
                train,
                test,
                dim,
                classes,
                separation,
                noise,
                seed,
            } => {
                let spec = SyntheticSpec {
                    kind: *kind,
                    n: train + test,
                    dim: *dim,
                    classes: *classes,
                    separation: *separation,
                    noise: *noise,
                    seed: *seed,
                };
                let all = synthetic_dataset(&spec)?;
                let idx: Vec<usize> = (0..all.len()).collect();
                (all.subset(&idx[..*train]), all.subset(&idx[*train..]))
            }
            DatasetSource::Idx {
                dir,
                train_limit,
                test_limit,
            } => {
                let dir = base.join(dir);
                let split = |prefix: &str, limit: &Option<usize>| -> Result<Dataset> {
                    let ds = load_idx(
                        &dir.join(format!("{prefix}-images-idx3-ubyte")),
                        &dir.join(format!("{prefix}-labels-idx1-ubyte")),
                    )?;
                    Ok(match limit {
                        Some(n) => ds.take(*n),
                        None => ds,
                    })
                };
                let (mut tr, mut te) = (split("train", train_limit)?, split("t10k", test_limit)?);
                let classes = tr.classes.max(te.classes);
                tr.classes = classes;
                te.classes = classes;
                (tr, te)
            }
            DatasetSource::Csv {
                train,
                test,
                label,
                features,
            } => {
                let f = features.as_deref();
                let mut tr = load_csv(&base.join(train), label, f)?;
                let mut te = load_csv(&base.join(test), label, f)?;
                let classes = tr.classes.max(te.classes);
                tr.classes = classes;
                te.classes = classes;
                (tr, te)
            }
        };
        if train.is_empty() || test.is_empty() {
            return Err(Error::Config(format!("dataset `{name}` has an empty split")));
        }
        let (mut train, mut others, _) = normalize(&train, &[test], mode);
        let mut test = others.remove(0);
        train.name = name.clone();
        test.name = name;
        Ok((train, test))
    }
}

/// The three swept axes plus the fixed parts of every scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct GridAxes {
    #[serde(default = "all_inits")]
    pub initializations: Vec<Initialization>,
    #[serde(default = "all_optimizers")]
    pub optimizers: Vec<OptimizerKind>,
    #[serde(default = "default_lrs")]
    pub learning_rates: Vec<f64>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default)]
    pub trainer: Trainer,
}

fn all_inits() -> Vec<Initialization> {
    Initialization::ALL.to_vec()
}
fn all_optimizers() -> Vec<OptimizerKind> {
    OptimizerKind::ALL.to_vec()
}
fn default_lrs() -> Vec<f64> {
    DEFAULT_LEARNING_RATES.to_vec()
}
fn default_batch() -> usize {
    crate::data::DEFAULT_BATCH_SIZE
}
fn default_epochs() -> usize {
    DEFAULT_MAX_EPOCHS
}

impl Default for GridAxes {
    fn default() -> Self {
        GridAxes {
            initializations: all_inits(),
            optimizers: all_optimizers(),
            learning_rates: default_lrs(),
            batch_size: default_batch(),
            max_epochs: default_epochs(),
            trainer: Trainer::Backprop,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub normalize: NormMode,
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub grid: GridAxes,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub hsic: HsicConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "one")]
    pub workers: usize,
    /// Fixed intrinsic dimension for EF; estimated with TwoNN on (up to
    /// 2000 points of) the test split when absent.
    #[serde(default)]
    pub intrinsic_dim: Option<f64>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_output() -> PathBuf {
    PathBuf::from("results")
}
fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        let g = &self.grid;
        for (axis, empty) in [
            ("models", self.models.is_empty()),
            ("initializations", g.initializations.is_empty()),
            ("optimizers", g.optimizers.is_empty()),
            ("learning-rates", g.learning_rates.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ] {
            if empty {
                return Err(Error::Config(format!("axis `{axis}` is empty")));
            }
        }
        if let Some(lr) = g.learning_rates.iter().find(|lr| !(lr.is_finite() && **lr >= 0.0)) {
            return Err(Error::Config(format!("learning rate {lr} must be finite and >= 0")));
        }
        if g.batch_size == 0 || g.max_epochs == 0 {
            return Err(Error::Config("batch-size and max-epochs must be >= 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        if g.trainer == Trainer::Hsic {
            self.hsic.validate()?;
        }
        Ok(())
    }
}

/// Identifies the axis a sweep run varies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SweepTag {
    pub axis: String,
    pub value: String,
}

/// One fully specified run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunSpec {
    pub run_id: usize,
    pub dataset: String,
    pub model: ModelConfig,
    pub scheme: TrainingScheme,
    pub seed: u64,
    pub hsic: HsicConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepTag>,
}

/// Cartesian product models × initializations × optimizers × learning
/// rates × seeds, in that (lexicographic) order. Model dims are taken from
/// `in_dim`/`out_dim`.
pub fn expand_grid(cfg: &ExperimentConfig, in_dim: usize, out_dim: usize) -> Result<Vec<RunSpec>> {
    cfg.validate()?;
    let g = &cfg.grid;
    let mut specs = Vec::new();
    for model in &cfg.models {
        let mut model = model.clone();
        model.in_dim = in_dim;
        model.out_dim = out_dim;
        model.validate()?;
        for &init in &g.initializations {
            for &optimizer in &g.optimizers {
                for &lr in &g.learning_rates {
                    for &seed in &cfg.seeds {
                        specs.push(RunSpec {
                            run_id: specs.len(),
                            dataset: cfg.dataset.name(),
                            model: model.clone(),
                            scheme: TrainingScheme {
                                init,
                                optimizer,
                                lr,
                                batch_size: g.batch_size,
                                max_epochs: g.max_epochs,
                                trainer: g.trainer,
                            },
                            seed,
                            hsic: cfg.hsic,
                            sweep: None,
                        });
                    }
                }
            }
        }
    }
    Ok(specs)
}
