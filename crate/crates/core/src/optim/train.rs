use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::harness::Dataset;
use crate::linalg::norm2;
use crate::model::NetworkParams;
use crate::ntk::{fit_rates, ConvergenceReport};

use super::steps::residual;
use super::{ggn_minibatch_step, sgd_momentum_step, Algorithm, GgnConfig, OptimError, Result, Schedule};

/// One row of the metrics table. Row 0 is the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub epoch: usize,
    /// Position of the batch within its epoch; `None` for the initial row.
    pub batch_index: Option<usize>,
    pub wall_time_ms: f64,
    pub loss: f64,
    pub residual_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub report: ConvergenceReport,
    pub records: Vec<IterationRecord>,
    pub params: NetworkParams,
}

/// A run that stopped on an error, with everything recorded up to that point.
/// `partial` is `None` when the error came before the initial residual.
#[derive(Debug)]
pub struct TrainingAbort {
    pub error: OptimError,
    pub partial: Option<Box<TrainingRun>>,
}

impl fmt::Display for TrainingAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "training aborted after {} iterations: {}",
            self.partial
                .as_ref()
                .map_or(0, |p| p.records.len().saturating_sub(1)),
            self.error
        )
    }
}

impl std::error::Error for TrainingAbort {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Batches of one epoch, each a list of dataset row indices.
///
/// Cyclic: consecutive index ranges in dataset order. Shuffled: a fresh
/// permutation drawn from `rng`, split into chunks of `b` (last may be short).
pub fn batch_schedule(n: usize, b: usize, schedule: Schedule, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    if schedule == Schedule::Shuffled {
        order.shuffle(rng);
    }
    order.chunks(b.max(1)).map(<[usize]>::to_vec).collect()
}

struct Recorder {
    start: Instant,
    records: Vec<IterationRecord>,
    residuals: Vec<f64>,
    losses: Vec<f64>,
    times: Vec<f64>,
    epoch_residuals: Vec<f64>,
}

impl Recorder {
    fn push(&mut self, epoch: usize, batch_index: Option<usize>, residual_norm: f64) {
        let t = self.start.elapsed().as_secs_f64();
        let loss = 0.5 * residual_norm * residual_norm;
        self.records.push(IterationRecord {
            iteration: self.records.len(),
            epoch,
            batch_index,
            wall_time_ms: t * 1e3,
            loss,
            residual_norm,
        });
        self.residuals.push(residual_norm);
        self.losses.push(loss);
        self.times.push(t);
    }

    fn finish(self, params: NetworkParams, epochs_run: usize) -> TrainingRun {
        let width = params.width();
        let fit = fit_rates(&self.epoch_residuals, width).ok();
        let report = ConvergenceReport {
            iterations_run: self.records.len() - 1,
            residual_trajectory: self.residuals,
            loss_trajectory: self.losses,
            wall_times: self.times,
            epoch_residuals: self.epoch_residuals,
            quadratic_c: fit.as_ref().and_then(|f| f.quadratic_c),
            linear_rate: fit.map(|f| f.linear_rate),
            epochs_run,
            verdicts: Vec::new(),
        };
        TrainingRun {
            report,
            records: self.records,
            params,
        }
    }
}

/// Runs epochs of `algorithm` until the end-of-epoch residual reaches
/// `config.target_residual` or `config.max_epochs` epochs have run.
///
/// The batch schedule and size come from `config` for both algorithms; `seed`
/// drives the shuffled schedule. Any step error or a non-finite loss aborts
/// the run and hands back the partial trajectory.
pub fn run_training(
    params: &NetworkParams,
    dataset: &Dataset,
    config: &GgnConfig,
    algorithm: &Algorithm,
    seed: u64,
) -> std::result::Result<TrainingRun, TrainingAbort> {
    let mut state = params.clone();
    let mut rec = Recorder {
        start: Instant::now(),
        records: Vec::new(),
        residuals: Vec::new(),
        losses: Vec::new(),
        times: Vec::new(),
        epoch_residuals: Vec::new(),
    };

    let setup = (|| -> Result<f64> {
        config.validate(dataset.n())?;
        if let Algorithm::Sgd(sgd) = algorithm {
            sgd.validate()?;
        }
        Ok(norm2(&residual(&state, &dataset.x, &dataset.y)?))
    })();
    let r0 = match setup {
        Ok(r) => r,
        Err(error) => return Err(TrainingAbort { error, partial: None }),
    };
    rec.push(0, None, r0);
    rec.epoch_residuals.push(r0);
    if !r0.is_finite() {
        return Err(TrainingAbort {
            error: OptimError::NonFiniteLoss { iteration: 0 },
            partial: Some(Box::new(rec.finish(state, 0))),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut velocity = vec![0.0; state.param_count()];
    let mut current = r0;
    let mut epochs_run = 0;
    for epoch in 1..=config.max_epochs {
        if current <= config.target_residual {
            break;
        }
        let batches = batch_schedule(dataset.n(), config.batch_size, config.schedule, &mut rng);
        for (bi, batch) in batches.iter().enumerate() {
            let (xb, yb) = dataset.subset(batch);
            let step = match algorithm {
                Algorithm::Ggn => ggn_minibatch_step(&state, &xb, &yb, config),
                Algorithm::Sgd(sgd) => sgd_momentum_step(&state, &xb, &yb, sgd, &velocity).map(|(p, v)| {
                    velocity = v;
                    p
                }),
            }
            .and_then(|p| {
                let r = norm2(&residual(&p, &dataset.x, &dataset.y)?);
                Ok((p, r))
            });
            match step {
                Ok((p, r)) => {
                    state = p;
                    current = r;
                    rec.push(epoch, Some(bi), r);
                    if !r.is_finite() {
                        let iteration = rec.records.len() - 1;
                        log::error!("non-finite loss at iteration {iteration}");
                        return Err(TrainingAbort {
                            error: OptimError::NonFiniteLoss { iteration },
                            partial: Some(Box::new(rec.finish(state, epoch))),
                        });
                    }
                }
                Err(error) => {
                    return Err(TrainingAbort {
                        error,
                        partial: Some(Box::new(rec.finish(state, epoch - 1))),
                    })
                }
            }
        }
        rec.epoch_residuals.push(current);
        epochs_run = epoch;
        log::debug!("epoch {epoch}: residual {current:.3e}");
    }
    Ok(rec.finish(state, epochs_run))
}
