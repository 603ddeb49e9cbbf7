use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The check failed but the theorem behind it does not apply at this
    /// configuration (width too small, defective iteration matrix, ...).
    HypothesisViolated,
    /// Measured and reported without an acceptance threshold.
    Informational,
}

impl Verdict {
    pub fn is_failure(self) -> bool {
        self == Verdict::Fail
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::HypothesisViolated => "hypothesis_violated",
            Verdict::Informational => "informational",
        })
    }
}

/// One named measurement with its threshold and verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub verdict: Verdict,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, verdict: Verdict, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            verdict,
            value: None,
            threshold: None,
            detail: detail.into(),
        }
    }

    /// Pass when `ok`, otherwise Fail.
    pub fn pass_if(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Self {
        let verdict = if ok { Verdict::Pass } else { Verdict::Fail };
        Self::new(name, verdict, detail)
    }

    /// Pass when `ok`, otherwise HypothesisViolated.
    pub fn pass_or_hypothesis(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Self {
        let verdict = if ok {
            Verdict::Pass
        } else {
            Verdict::HypothesisViolated
        };
        Self::new(name, verdict, detail)
    }

    pub fn informational(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self::new(name, Verdict::Informational, detail)
    }

    pub fn with_value(mut self, value: f64) -> Self {
        self.value = Some(value);
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = Some(threshold);
        self
    }

    /// Downgrades a failure to HypothesisViolated when `hypothesis_holds` is false.
    pub fn unless_hypothesis(mut self, hypothesis_holds: bool) -> Self {
        if !hypothesis_holds && self.verdict == Verdict::Fail {
            self.verdict = Verdict::HypothesisViolated;
        }
        self
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<28} {:<20}", self.name, self.verdict.to_string())?;
        if let Some(v) = self.value {
            write!(f, " value={v:.4e}")?;
        }
        if let Some(t) = self.threshold {
            write!(f, " threshold={t:.4e}")?;
        }
        if !self.detail.is_empty() {
            write!(f, "  {}", self.detail)?;
        }
        Ok(())
    }
}

/// Trajectories and fitted rates of one training run plus named verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// `‖f_t − y‖₂` before the first update and after every update.
    pub residual_trajectory: Vec<f64>,
    /// `½‖f_t − y‖²`, aligned with `residual_trajectory`.
    pub loss_trajectory: Vec<f64>,
    /// Seconds since start, aligned with `residual_trajectory`.
    pub wall_times: Vec<f64>,
    /// Residual before training and at the end of every completed epoch.
    pub epoch_residuals: Vec<f64>,
    /// `√M · max_t r_{t+1}/r_t²` over the epoch trajectory.
    pub quadratic_c: Option<f64>,
    /// Fitted per-epoch contraction factor.
    pub linear_rate: Option<f64>,
    pub epochs_run: usize,
    pub iterations_run: usize,
    pub verdicts: Vec<Check>,
}

impl ConvergenceReport {
    pub fn final_residual(&self) -> f64 {
        *self
            .residual_trajectory
            .last()
            .expect("trajectory holds at least the initial residual")
    }

    pub fn verdict(&self, name: &str) -> Option<&Check> {
        self.verdicts.iter().find(|c| c.name == name)
    }

    /// True unless some check has verdict Fail.
    pub fn passed(&self) -> bool {
        !self.verdicts.iter().any(|c| c.verdict.is_failure())
    }

    /// First epoch whose end-of-epoch residual is at most `level`.
    pub fn epochs_to(&self, level: f64) -> Option<usize> {
        self.epoch_residuals.iter().position(|&r| r <= level)
    }
}
