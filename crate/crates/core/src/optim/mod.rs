//! Gram-Gauss-Newton (GGN) optimizer, the classic Gauss-Newton oracle and the
//! SGD-with-momentum baseline.
//!
//! GGN replaces the `m × m` normal matrix `JᵀJ` of Gauss-Newton with the
//! `b × b` Gram matrix `G = J Jᵀ` of the current batch:
//!
//! ```text
//! w ← w − Jᵀ (λ G + α I)⁻¹ (f − y)
//! ```
//!
//! With `λ = 1, α = 0` this is the minimum-norm solution of the linearized
//! interpolation problem `J Δ = −(f − y)`. There is no learning rate.

mod gram;
mod steps;
mod train;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::LinalgError;
use crate::model::{ModelError, NetworkParams};

pub use gram::{gram_matrix, normal_matrix, GramMatrix, NormalMatrix};
pub use steps::{
    classic_gn_step, ggn_full_step, ggn_minibatch_step, residual, sgd_momentum_step, FullStep,
    CLASSIC_GN_MAX_PARAMS,
};
pub use train::{batch_schedule, run_training, IterationRecord, TrainingAbort, TrainingRun};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("Gram matrix is singular or indefinite ({0}); use α > 0 or a wider network")]
    SingularGram(LinalgError),
    #[error("normal matrix JᵀJ is singular ({0})")]
    SingularNormalMatrix(LinalgError),
    #[error("classic Gauss-Newton limited to {limit} parameters, network has {got}")]
    TooManyParameters { got: usize, limit: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch index {index} out of range for {n} samples")]
    BadBatch { index: usize, n: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, OptimError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Batches in dataset index order every epoch; requires `b | n`.
    #[default]
    Cyclic,
    /// Fresh seeded permutation every epoch; the last batch may be smaller.
    Shuffled,
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schedule::Cyclic => "cyclic",
            Schedule::Shuffled => "shuffled",
        })
    }
}

fn default_lambda() -> f64 {
    1.0
}

// experiment-dependent; see README
fn default_alpha() -> f64 {
    0.1
}

fn default_max_epochs() -> usize {
    20
}

fn default_target() -> f64 {
    1e-10
}

/// GGN hyperparameters together with the batch schedule shared by every
/// training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GgnConfig {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_target")]
    pub target_residual: f64,
}

impl GgnConfig {
    /// Pure Gram-Gauss-Newton: `λ = 1, α = 0`, cyclic batches.
    pub fn ridgeless(batch_size: usize) -> Self {
        Self {
            lambda: 1.0,
            alpha: 0.0,
            batch_size,
            schedule: Schedule::Cyclic,
            max_epochs: default_max_epochs(),
            target_residual: default_target(),
        }
    }

    pub fn with_epochs(mut self, max_epochs: usize) -> Self {
        self.max_epochs = max_epochs;
        self
    }

    pub fn with_target(mut self, target_residual: f64) -> Self {
        self.target_residual = target_residual;
        self
    }

    pub fn is_ridgeless(&self) -> bool {
        self.lambda == 1.0 && self.alpha == 0.0
    }

    /// Checks the damping terms alone.
    pub fn validate_damping(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.alpha >= 0.0) || !self.lambda.is_finite() || !self.alpha.is_finite() {
            return Err(OptimError::InvalidConfig(format!(
                "λ and α must be finite and ≥ 0 (got λ={}, α={})",
                self.lambda, self.alpha
            )));
        }
        if self.lambda + self.alpha <= 0.0 {
            return Err(OptimError::InvalidConfig(
                "λ + α must be positive (use λ=1, α=0 for the ridgeless update)".into(),
            ));
        }
        Ok(())
    }

    /// Full validation against a dataset of `n` samples.
    pub fn validate(&self, n: usize) -> Result<()> {
        self.validate_damping()?;
        if self.batch_size == 0 || self.batch_size > n {
            return Err(OptimError::InvalidConfig(format!(
                "batch size {} must be in 1..={n}",
                self.batch_size
            )));
        }
        if self.schedule == Schedule::Cyclic && !n.is_multiple_of(self.batch_size) {
            return Err(OptimError::InvalidConfig(format!(
                "cyclic schedule needs the batch size to divide n ({} ∤ {n})",
                self.batch_size
            )));
        }
        if self.target_residual.is_nan() || self.target_residual < 0.0 {
            return Err(OptimError::InvalidConfig("target_residual must be ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GradientReduction {
    /// Sum of per-sample gradients, the gradient of `½ Σ (f − y)²`.
    #[default]
    Sum,
    Mean,
}

fn default_lr() -> f64 {
    0.003
}

fn default_momentum() -> f64 {
    0.9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub reduction: GradientReduction,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: default_lr(),
            momentum: default_momentum(),
            reduction: GradientReduction::Sum,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(OptimError::InvalidConfig(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(OptimError::InvalidConfig(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Algorithm {
    Ggn,
    Sgd(SgdConfig),
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Ggn => "ggn",
            Algorithm::Sgd(_) => "sgd",
        }
    }
}

/// Snapshot of a training run after some number of updates.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: NetworkParams,
    pub epoch: usize,
    pub iteration: usize,
    /// `‖f − y‖₂`, recomputed from `params` after every update.
    pub residual_norm: f64,
    /// Seconds since training started.
    pub wall_time: f64,
}
