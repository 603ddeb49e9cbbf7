use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ArchKind, ArchSpec};
use crate::optim::{Algorithm, GgnConfig, OptimError};

use super::dataset::{generate_synthetic, load_csv, DataError, Dataset, TargetKind};

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "GGN_OUT_DIR";

/// Output directory used when neither the CLI, the config nor the environment
/// names one.
pub const DEFAULT_OUT_DIR: &str = "runs";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Data(#[from] DataError),
}

fn default_target_kind() -> TargetKind {
    TargetKind::TeacherNet
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic {
        n: usize,
        d: usize,
        #[serde(default = "default_target_kind")]
        target: TargetKind,
        /// Defaults to the experiment seed.
        #[serde(default)]
        seed: Option<u64>,
        /// Extra held-out samples drawn after the training rows.
        #[serde(default)]
        test_n: usize,
    },
    Csv {
        path: PathBuf,
    },
}

fn default_mc_samples() -> usize {
    crate::ntk::DEFAULT_MC_SAMPLES
}

fn default_dynamics_epochs() -> usize {
    3
}

fn default_kernel_widths() -> Vec<usize> {
    vec![100, 1600, 25600]
}

fn default_rate_widths() -> Vec<usize> {
    vec![2048, 8192, 32768]
}

fn default_oracle_epochs() -> usize {
    5
}

/// Which verifications `train` runs after training, plus the knobs used by
/// the `verify` and `ntk` commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub kernel: bool,
    #[serde(default)]
    pub dynamics: bool,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default = "default_dynamics_epochs")]
    pub dynamics_epochs: usize,
    #[serde(default = "default_oracle_epochs")]
    pub oracle_epochs: usize,
    #[serde(default = "default_kernel_widths")]
    pub kernel_widths: Vec<usize>,
    #[serde(default = "default_rate_widths")]
    pub rate_widths: Vec<usize>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            kernel: false,
            dynamics: false,
            mc_samples: default_mc_samples(),
            dynamics_epochs: default_dynamics_epochs(),
            oracle_epochs: default_oracle_epochs(),
            kernel_widths: default_kernel_widths(),
            rate_widths: default_rate_widths(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Fill the `wall_time_ms` column of the metrics CSV. Off by default
    /// because timings differ between otherwise identical runs.
    #[serde(default)]
    pub record_wall_time: bool,
}

fn default_algorithm() -> Algorithm {
    Algorithm::Ggn
}

/// One experiment, read from a single JSON document.
///
/// Precedence for overlapping settings: CLI flags, then this document, then
/// the environment ([`OUT_DIR_ENV`]), then built-in defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub arch: ArchSpec,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    pub training: GgnConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate_static()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks that need no data.
    pub fn validate_static(&self) -> Result<(), ConfigError> {
        if self.arch.width == 0 || self.arch.input_dim == 0 {
            return Err(ConfigError::Invalid("arch.width and arch.input_dim must be ≥ 1".into()));
        }
        if self.arch.arch == ArchKind::Mlp && self.arch.hidden_layers == 0 {
            return Err(ConfigError::Invalid("mlp needs hidden_layers ≥ 1".into()));
        }
        self.training.validate_damping()?;
        if let Algorithm::Sgd(sgd) = &self.algorithm {
            sgd.validate()?;
        }
        if let DatasetSpec::Synthetic { n, d, .. } = &self.dataset {
            if *n == 0 || *d == 0 {
                return Err(ConfigError::Invalid("synthetic dataset needs n, d ≥ 1".into()));
            }
            if *d != self.arch.input_dim {
                return Err(ConfigError::Invalid(format!(
                    "dataset d = {d} but arch.input_dim = {}",
                    self.arch.input_dim
                )));
            }
            self.training.validate(*n)?;
        }
        if self.verify.mc_samples < crate::ntk::MIN_MC_SAMPLES {
            return Err(ConfigError::Invalid(format!(
                "verify.mc_samples must be ≥ {}",
                crate::ntk::MIN_MC_SAMPLES
            )));
        }
        Ok(())
    }

    /// Loads or generates the training set and the optional held-out set,
    /// then checks the shapes against the architecture and the schedule.
    pub fn build_datasets(&self) -> Result<(Dataset, Option<Dataset>), ConfigError> {
        let (train, test) = match &self.dataset {
            DatasetSpec::Synthetic {
                n,
                d,
                target,
                seed,
                test_n,
            } => {
                let full = generate_synthetic(n + test_n, *d, seed.unwrap_or(self.seed), *target);
                if *test_n == 0 {
                    (full, None)
                } else {
                    let train_idx: Vec<usize> = (0..*n).collect();
                    let test_idx: Vec<usize> = (*n..n + test_n).collect();
                    let split = |idx: &[usize]| -> Result<Dataset, DataError> {
                        let (x, y) = full.subset(idx);
                        let mut ds = Dataset::new(x, y)?;
                        ds.provenance = full.provenance.clone();
                        Ok(ds)
                    };
                    (split(&train_idx)?, Some(split(&test_idx)?))
                }
            }
            DatasetSpec::Csv { path } => (load_csv(path)?, None),
        };
        if train.d() != self.arch.input_dim {
            return Err(ConfigError::Invalid(format!(
                "dataset d = {} but arch.input_dim = {}",
                train.d(),
                self.arch.input_dim
            )));
        }
        self.training.validate(train.n())?;
        Ok((train, test))
    }

    /// CLI flag, then config, then environment, then [`DEFAULT_OUT_DIR`].
    pub fn resolve_out_dir(&self, cli: Option<&Path>) -> PathBuf {
        if let Some(p) = cli {
            return p.to_path_buf();
        }
        if let Some(p) = &self.output.dir {
            return p.clone();
        }
        match std::env::var_os(OUT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => PathBuf::from(DEFAULT_OUT_DIR),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"{
        "seed": 3,
        "dataset": {"kind": "synthetic", "n": 8, "d": 2},
        "arch": {"arch": "two_layer", "input_dim": 2, "width": 64, "activation": "tanh"},
        "training": {"batch_size": 4, "lambda": 1, "alpha": 0}
    }"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_json(BASIC).unwrap();
        assert_eq!(cfg.algorithm, Algorithm::Ggn);
        assert!(!cfg.verify.kernel);
        assert_eq!(cfg.training.max_epochs, 20);
        let (train, test) = cfg.build_datasets().unwrap();
        assert_eq!((train.n(), train.d()), (8, 2));
        assert!(test.is_none());
    }

    #[test]
    fn round_trips() {
        let cfg = ExperimentConfig::from_json(BASIC).unwrap();
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = BASIC.replacen("\"seed\": 3,", "\"seed\": 3, \"learning_rate\": 1,", 1);
        assert!(matches!(ExperimentConfig::from_json(&bad), Err(ConfigError::Json(_))));
        let bad = BASIC.replacen("\"d\": 2}", "\"d\": 2, \"noise\": 0.1}", 1);
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn cyclic_needs_divisible_batch() {
        let bad = BASIC.replacen("\"batch_size\": 4", "\"batch_size\": 3", 1);
        assert!(matches!(
            ExperimentConfig::from_json(&bad),
            Err(ConfigError::Optim(OptimError::InvalidConfig(_)))
        ));
    }

    #[test]
    fn sgd_algorithm_parses() {
        let text = BASIC.replacen(
            "\"seed\": 3,",
            "\"seed\": 3, \"algorithm\": {\"kind\": \"sgd\", \"lr\": 0.01},",
            1,
        );
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        match cfg.algorithm {
            Algorithm::Sgd(s) => {
                assert_eq!(s.lr, 0.01);
                assert_eq!(s.momentum, 0.9);
            }
            other => panic!("{other:?}"),
        }
        let bad = text.replacen("\"lr\": 0.01", "\"lr\": 0.01, \"nesterov\": true", 1);
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let bad = BASIC.replacen("\"input_dim\": 2", "\"input_dim\": 3", 1);
        assert!(matches!(ExperimentConfig::from_json(&bad), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn test_split_is_disjoint_tail() {
        let text = BASIC.replacen("\"d\": 2}", "\"d\": 2, \"test_n\": 3}", 1);
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        let (train, test) = cfg.build_datasets().unwrap();
        let test = test.unwrap();
        assert_eq!((train.n(), test.n()), (8, 3));
        let full = generate_synthetic(11, 2, 3, TargetKind::TeacherNet);
        assert_eq!(test.x.row(0), full.x.row(8));
    }

    #[test]
    fn out_dir_precedence() {
        let mut cfg = ExperimentConfig::from_json(BASIC).unwrap();
        assert_eq!(cfg.resolve_out_dir(Some(Path::new("cli"))), PathBuf::from("cli"));
        cfg.output.dir = Some("from_config".into());
        assert_eq!(cfg.resolve_out_dir(None), PathBuf::from("from_config"));
    }
}
