use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::json;
use thiserror::Error;

use crate::linalg::{norm2, smallest_eigenvalue_sym};
use crate::model::{init_network, Activation, ArchKind, ArchSpec, ModelError, NetworkParams};
use crate::ntk::{
    build_iteration_matrix, fit_rates, init_diagnostics, limit_kernel_mc, spectral_report, verify_residual_dynamics,
    Check, NtkError, Verdict, CONVERGENCE_FLOOR,
};
use crate::optim::{
    classic_gn_step, ggn_full_step, gram_matrix, residual, run_training, Algorithm, GgnConfig, OptimError, Schedule,
    TrainingRun, CLASSIC_GN_MAX_PARAMS,
};

use super::config::{ConfigError, ExperimentConfig};
use super::dataset::Dataset;
use super::metrics::{write_metrics_csv, write_timing_csv, RunReport, WriteError, METRICS_FILE, REPORT_FILE, TIMING_FILE};

/// Residual a single full-batch step must reach on a linear-in-parameter model.
pub const ONE_STEP_FIT_TOL: f64 = 1e-8;

/// Largest allowed `max/min` spread of the quadratic ratios within one run.
pub const QUADRATIC_SPREAD_LIMIT: f64 = 100.0;

/// Iterations within which the widest full-batch run must reach [`ONE_STEP_FIT_TOL`].
pub const QUADRATIC_ITERATION_LIMIT: usize = 10;

/// Minimum `R²` of the log-residual line of a mini-batch run.
pub const LINEAR_FIT_R2: f64 = 0.99;

/// Largest allowed ratio of the widest to the narrowest kernel deviation.
pub const KERNEL_SHRINK_FACTOR: f64 = 0.5;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Write(#[from] WriteError),
    #[error("cannot create {path}: {source}")]
    CreateDir {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Ntk(#[from] NtkError),
    #[error(transparent)]
    Linalg(#[from] crate::linalg::LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    LinearOracle,
    Dynamics,
    Kernel,
    Rates,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::LinearOracle, Suite::Dynamics, Suite::Kernel, Suite::Rates];

    pub fn name(self) -> &'static str {
        match self {
            Suite::LinearOracle => "linear_oracle",
            Suite::Dynamics => "dynamics",
            Suite::Kernel => "kernel",
            Suite::Rates => "rates",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| format!("unknown suite `{s}` (expected linear_oracle, dynamics, kernel or rates)"))
    }
}

/// A finished command: the report plus the files written for it.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: RunReport,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

fn create_dir(path: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(path).map_err(|source| HarnessError::CreateDir {
        path: path.to_path_buf(),
        source,
    })
}

fn finish(report: RunReport, out_dir: &Path, file: &str, mut files: Vec<PathBuf>) -> Result<Outcome, HarnessError> {
    let path = out_dir.join(file);
    report.write(&path)?;
    files.push(path);
    Ok(Outcome {
        report,
        out_dir: out_dir.to_path_buf(),
        files,
    })
}

fn training_checks(cfg: &ExperimentConfig, ds: &Dataset, run: &TrainingRun) -> Vec<Check> {
    let rep = &run.report;
    let mut checks = Vec::new();
    let linear_full_batch = cfg.arch.activation == Activation::Identity
        && cfg.arch.arch == ArchKind::TwoLayer
        && cfg.algorithm == Algorithm::Ggn
        && cfg.training.is_ridgeless()
        && cfg.training.batch_size == ds.n();
    if linear_full_batch && rep.iterations_run >= 1 {
        let r1 = rep.residual_trajectory[1];
        checks.push(
            Check::pass_if("one_step_fit", r1 <= ONE_STEP_FIT_TOL, "residual after one full-batch step")
                .with_value(r1)
                .with_threshold(ONE_STEP_FIT_TOL),
        );
    }
    let final_r = rep.final_residual();
    let reached = final_r <= cfg.training.target_residual;
    checks.push(
        Check::new(
            "target_reached",
            if reached { Verdict::Pass } else { Verdict::Informational },
            format!("after {} epochs", rep.epochs_run),
        )
        .with_value(final_r)
        .with_threshold(cfg.training.target_residual),
    );
    if let Some(c) = rep.quadratic_c {
        checks.push(Check::informational("quadratic_c", "√M · max r_{t+1}/r_t² over epochs").with_value(c));
    }
    if let Some(rate) = rep.linear_rate {
        checks.push(Check::informational("linear_rate", "fitted per-epoch contraction").with_value(rate));
    }
    checks
}

/// Runs one training experiment and writes `metrics.csv`, `timing.csv` and
/// `report.json` into `out_dir`.
///
/// Config and data errors are returned before any compute. A run that aborts
/// (non-finite loss, singular Gram matrix) still writes its partial metrics;
/// the report then carries the error and `passed = false`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome, HarnessError> {
    cfg.validate_static()?;
    if cfg.verify.dynamics
        && (cfg.algorithm != Algorithm::Ggn || cfg.training.schedule != Schedule::Cyclic || !cfg.training.is_ridgeless())
    {
        return Err(ConfigError::Invalid(
            "verify.dynamics needs GGN with the cyclic schedule and λ = 1, α = 0".into(),
        )
        .into());
    }
    if cfg.verify.kernel && cfg.arch.arch != ArchKind::TwoLayer {
        return Err(ConfigError::Invalid("verify.kernel needs a two_layer network".into()).into());
    }
    let (train, test) = cfg.build_datasets()?;
    create_dir(out_dir)?;
    let params = init_network(&cfg.arch, cfg.seed)?;
    let mut report = RunReport::new("train", cfg);

    if cfg.verify.kernel {
        let kernel = limit_kernel_mc(&train.x, cfg.arch.activation, cfg.verify.mc_samples, cfg.seed)?;
        let diag = init_diagnostics(&params, &train.x, &kernel)?;
        report.extend(diag.checks.clone());
        report.init_diagnostics = Some(diag);
    }

    let (run, error) = match run_training(&params, &train, &cfg.training, &cfg.algorithm, cfg.seed) {
        Ok(run) => (Some(run), None),
        Err(abort) => (abort.partial.map(|b| *b), Some(abort.error)),
    };
    let mut files = Vec::new();
    if let Some(run) = &run {
        let metrics = out_dir.join(METRICS_FILE);
        write_metrics_csv(&metrics, &run.records, cfg.output.record_wall_time)?;
        let timing = out_dir.join(TIMING_FILE);
        write_timing_csv(&timing, &run.records)?;
        files.extend([metrics, timing]);
    }
    report.push(Check::pass_if(
        "finite_loss",
        !matches!(error, Some(OptimError::NonFiniteLoss { .. })),
        "loss stayed finite",
    ));
    if let Some(e) = &error {
        log::error!("training aborted: {e}");
        report.fail_with(e);
    }

    if let Some(mut run) = run {
        let checks = training_checks(cfg, &train, &run);
        run.report.verdicts = checks.clone();
        report.extend(checks);
        if let Some(test) = &test {
            if let Ok(r) = residual(&run.params, &test.x, &test.y) {
                report.push(Check::informational("test_residual", "held-out ‖f − y‖₂").with_value(norm2(&r)));
            }
        }
        if cfg.verify.dynamics && error.is_none() {
            let dyn_cfg = GgnConfig {
                max_epochs: cfg.verify.dynamics_epochs,
                ..cfg.training
            };
            let dy = verify_residual_dynamics(&params, &train, &dyn_cfg, cfg.verify.dynamics_epochs)?;
            report.extend(dy.checks.clone());
            report.dynamics = Some(dy);
        }
        report.convergence = Some(run.report);
    }
    finish(report, out_dir, REPORT_FILE, files)
}

/// Runs one verification suite and writes `verify_<suite>.json`.
pub fn run_verify(cfg: &ExperimentConfig, suite: Suite, out_dir: &Path) -> Result<Outcome, HarnessError> {
    cfg.validate_static()?;
    let (train, _) = cfg.build_datasets()?;
    create_dir(out_dir)?;
    let mut report = RunReport::new(&format!("verify {suite}"), cfg);
    match suite {
        Suite::LinearOracle => linear_oracle_suite(cfg, &train, &mut report)?,
        Suite::Dynamics => {
            let params = init_network(&cfg.arch, cfg.seed)?;
            let dyn_cfg = GgnConfig {
                lambda: 1.0,
                alpha: 0.0,
                schedule: Schedule::Cyclic,
                ..cfg.training
            };
            let dy = verify_residual_dynamics(&params, &train, &dyn_cfg, cfg.verify.dynamics_epochs)?;
            report.extend(dy.checks.clone());
            report.dynamics = Some(dy);
        }
        Suite::Kernel => kernel_suite(cfg, &train, &mut report)?,
        Suite::Rates => rates_suite(cfg, &train, &mut report)?,
    }
    finish(report, out_dir, &format!("verify_{suite}.json"), Vec::new())
}

fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|&b| n.is_multiple_of(b)).collect()
}

fn linear_oracle_suite(cfg: &ExperimentConfig, ds: &Dataset, report: &mut RunReport) -> Result<(), HarnessError> {
    let spec = ArchSpec {
        activation: Activation::Identity,
        ..cfg.arch.clone()
    };
    let params = init_network(&spec, cfg.seed)?;
    let n = ds.n();
    let m = params.param_count();

    match ggn_full_step(&params, &ds.x, &ds.y) {
        Ok(step) => report.push(
            Check::pass_if("one_step_fit", step.residual_after <= ONE_STEP_FIT_TOL, "identity σ, one full-batch step")
                .with_value(step.residual_after)
                .with_threshold(ONE_STEP_FIT_TOL),
        ),
        Err(OptimError::SingularGram(e)) => {
            report.push(Check::new(
                "gram_full_rank",
                Verdict::HypothesisViolated,
                format!("G = J Jᵀ is singular for this data ({e}); the oracle needs full row rank"),
            ));
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    }

    let mut worst = 0.0f64;
    for b in divisors(n) {
        let gcfg = GgnConfig::ridgeless(b);
        let dy = verify_residual_dynamics(&params, ds, &gcfg, cfg.verify.oracle_epochs)?;
        let err = dy.max_oracle_error.unwrap_or(f64::INFINITY);
        worst = worst.max(err);
        report.push(
            Check::pass_if(
                format!("gauss_seidel_oracle_b{b}"),
                err <= crate::ntk::ORACLE_TOL,
                format!("{} epochs, b = {b}", cfg.verify.oracle_epochs),
            )
            .with_value(err)
            .with_threshold(crate::ntk::ORACLE_TOL),
        );
    }
    report.extra.insert("max_oracle_error".into(), json!(worst));

    if m <= n && m <= CLASSIC_GN_MAX_PARAMS {
        let next = classic_gn_step(&params, &ds.x, &ds.y)?;
        let r = residual(&next, &ds.x, &ds.y)?;
        let jac = next.jacobian(&ds.x)?;
        let grad = norm2(&jac.entries.tr_matvec(&r)?);
        report.push(
            Check::pass_if(
                "classic_gn_stationary",
                grad <= 1e-8 * (1.0 + norm2(&ds.y)),
                "‖Jᵀ(f − y)‖ after one classic Gauss-Newton step",
            )
            .with_value(grad),
        );
    }
    Ok(())
}

fn kernel_suite(cfg: &ExperimentConfig, ds: &Dataset, report: &mut RunReport) -> Result<(), HarnessError> {
    if cfg.arch.arch != ArchKind::TwoLayer {
        return Err(ConfigError::Invalid("the kernel suite needs a two_layer network".into()).into());
    }
    let kernel = limit_kernel_mc(&ds.x, cfg.arch.activation, cfg.verify.mc_samples, cfg.seed)?;
    report.extra.insert("lambda0".into(), json!(kernel.lambda0));
    report.extra.insert("max_stderr".into(), json!(kernel.max_stderr()));
    let mut widths = cfg.verify.kernel_widths.clone();
    if widths.is_empty() {
        widths.push(cfg.arch.width);
    }
    let mut deviations = Vec::with_capacity(widths.len());
    let mut last = None;
    for &w in &widths {
        let spec = ArchSpec {
            width: w,
            ..cfg.arch.clone()
        };
        let params = init_network(&spec, cfg.seed)?;
        let diag = init_diagnostics(&params, &ds.x, &kernel)?;
        deviations.push(diag.kernel_deviation);
        last = Some(diag);
    }
    report.extra.insert("kernel_widths".into(), json!(widths));
    report.extra.insert("kernel_deviations".into(), json!(deviations));
    if deviations.len() >= 2 {
        let monotone = deviations.windows(2).all(|p| p[1] < p[0]);
        report.push(Check::pass_if(
            "kernel_deviation_monotone",
            monotone,
            format!("max |G₀ − K̂| decreases over widths {widths:?}"),
        ));
        let ratio = deviations[deviations.len() - 1] / deviations[0];
        report.push(
            Check::pass_if(
                "kernel_deviation_shrinks",
                ratio <= KERNEL_SHRINK_FACTOR,
                "widest / narrowest deviation",
            )
            .with_value(ratio)
            .with_threshold(KERNEL_SHRINK_FACTOR),
        );
    }
    if let Some(diag) = last {
        report.extend(diag.checks.clone());
        report.init_diagnostics = Some(diag);
    }
    Ok(())
}

fn rates_suite(cfg: &ExperimentConfig, ds: &Dataset, report: &mut RunReport) -> Result<(), HarnessError> {
    let n = ds.n();
    let mut widths = cfg.verify.rate_widths.clone();
    if widths.is_empty() {
        widths.push(cfg.arch.width);
    }
    let full = GgnConfig {
        lambda: 1.0,
        alpha: 0.0,
        batch_size: n,
        schedule: Schedule::Cyclic,
        max_epochs: cfg.training.max_epochs.max(QUADRATIC_ITERATION_LIMIT),
        target_residual: CONVERGENCE_FLOOR,
    };
    let mut max_ratios = Vec::new();
    let mut last_run = None;
    for &w in &widths {
        let spec = ArchSpec {
            width: w,
            ..cfg.arch.clone()
        };
        let params = init_network(&spec, cfg.seed)?;
        let run = run_training(&params, ds, &full, &Algorithm::Ggn, cfg.seed).map_err(|a| a.error)?;
        let traj = &run.report.epoch_residuals;
        report.extra.insert(format!("full_batch_residuals_m{w}"), json!(traj));
        match fit_rates(traj, w) {
            Ok(fit) if fit.quadratic_c.is_some() => {
                let spread = fit.ratio_spread().unwrap_or(f64::INFINITY);
                max_ratios.push(fit.max_ratio().unwrap_or(f64::NAN));
                report.push(
                    Check::pass_if(
                        format!("quadratic_spread_m{w}"),
                        spread < QUADRATIC_SPREAD_LIMIT,
                        "max/min of r_{t+1}/r_t² over pre-floor iterations",
                    )
                    .with_value(spread)
                    .with_threshold(QUADRATIC_SPREAD_LIMIT),
                );
            }
            _ => {
                max_ratios.push(f64::NAN);
                report.push(Check::pass_if(
                    format!("quadratic_spread_m{w}"),
                    false,
                    "fewer than 3 strictly decreasing pre-floor residuals",
                ));
            }
        }
        last_run = Some((w, run));
    }
    report.extra.insert("quadratic_max_ratios".into(), json!(max_ratios));
    if max_ratios.len() >= 2 {
        let decreasing = max_ratios.windows(2).all(|p| p[1] < p[0]);
        report.push(Check::pass_if(
            "quadratic_ratio_decreases_with_width",
            decreasing,
            format!("max r_{{t+1}}/r_t² over widths {widths:?}"),
        ));
    }
    if let Some((w, run)) = last_run {
        let hit = run.report.epochs_to(ONE_STEP_FIT_TOL);
        report.push(
            Check::pass_if(
                "quadratic_reaches_tolerance",
                hit.is_some_and(|t| t <= QUADRATIC_ITERATION_LIMIT),
                format!("M = {w}: residual ≤ {ONE_STEP_FIT_TOL:e} within {QUADRATIC_ITERATION_LIMIT} iterations"),
            )
            .with_value(hit.map_or(f64::INFINITY, |t| t as f64)),
        );
    }

    if cfg.training.batch_size < n {
        let params = init_network(&cfg.arch, cfg.seed)?;
        let mini = GgnConfig {
            lambda: 1.0,
            alpha: 0.0,
            schedule: Schedule::Cyclic,
            target_residual: CONVERGENCE_FLOOR,
            ..cfg.training
        };
        let g0 = gram_matrix(&params.jacobian(&ds.x)?)?.entries;
        let spectral = spectral_report(&build_iteration_matrix(&g0, mini.batch_size)?)?;
        report.extra.insert("rho".into(), json!(spectral.rho));
        report.extra.insert("lambda_min_g0".into(), json!(smallest_eigenvalue_sym(&g0)?));
        let run = run_training(&params, ds, &mini, &Algorithm::Ggn, cfg.seed).map_err(|a| a.error)?;
        let fit = fit_rates(&run.report.epoch_residuals, cfg.arch.width)?;
        report.push(
            Check::pass_if("linear_fit_r2", fit.r_squared > LINEAR_FIT_R2, "log residual vs epoch")
                .with_value(fit.r_squared)
                .with_threshold(LINEAR_FIT_R2),
        );
        let limit = spectral.rho + crate::ntk::RATE_SLACK;
        report.push(
            Check::pass_if("linear_rate_bound", fit.linear_rate <= limit, "per-epoch contraction ≤ ρ(A) + 0.1")
                .with_value(fit.linear_rate)
                .with_threshold(limit),
        );
        report.extra.insert("minibatch_epochs".into(), json!(run.report.epochs_run));
    }
    Ok(())
}

/// Kernel, Gram and iteration-matrix statistics of the initial network;
/// writes `ntk.json`.
pub fn run_ntk(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome, HarnessError> {
    cfg.validate_static()?;
    if cfg.arch.arch != ArchKind::TwoLayer {
        return Err(ConfigError::Invalid("ntk needs a two_layer network".into()).into());
    }
    let (train, _) = cfg.build_datasets()?;
    create_dir(out_dir)?;
    let params: NetworkParams = init_network(&cfg.arch, cfg.seed)?;
    let mut report = RunReport::new("ntk", cfg);
    let kernel = limit_kernel_mc(&train.x, cfg.arch.activation, cfg.verify.mc_samples, cfg.seed)?;
    let diag = init_diagnostics(&params, &train.x, &kernel)?;
    let g0 = gram_matrix(&params.jacobian(&train.x)?)?.entries;
    let decomp = build_iteration_matrix(&g0, cfg.training.batch_size)?;
    let spectral = spectral_report(&decomp)?;
    report.extra.insert("lambda0".into(), json!(kernel.lambda0));
    report.extra.insert("max_stderr".into(), json!(kernel.max_stderr()));
    report.extra.insert("mc_samples".into(), json!(kernel.mc_samples));
    report.extra.insert("lambda_min_g0".into(), json!(diag.gram_lambda_min));
    report.extra.insert("rho".into(), json!(spectral.rho));
    report.extra.insert("mu".into(), json!(spectral.mu));
    report.extra.insert("diagonalizable".into(), json!(spectral.diagonalizable));
    report.extend(diag.checks.clone());
    report.push(
        Check::pass_if("spectral_radius", spectral.bound_satisfied, "ρ(A) < 1")
            .with_value(spectral.rho)
            .with_threshold(1.0),
    );
    report.init_diagnostics = Some(diag);
    finish(report, out_dir, "ntk.json", Vec::new())
}
