//! Datasets, experiment configuration, orchestration, metrics files and the
//! overhead benchmark.

mod bench;
mod config;
mod dataset;
mod experiment;
mod metrics;

pub use bench::{
    bench_overhead, host_is_loaded, BenchConfig, BenchRow, BenchTable, Phase, TimingStats, GRAM_SCALING_RANGE,
    MIN_TRIALS, STEP_RATIO_LIMIT, WARMUP_TRIALS,
};
pub use config::{
    ConfigError, DatasetSpec, ExperimentConfig, OutputConfig, VerifyConfig, DEFAULT_OUT_DIR, OUT_DIR_ENV,
};
pub use dataset::{generate_synthetic, load_csv, DataError, Dataset, Provenance, TargetKind, LARGE_ROW_NORM};
pub use experiment::{
    run_experiment, run_ntk, run_verify, HarnessError, Outcome, Suite, KERNEL_SHRINK_FACTOR, LINEAR_FIT_R2,
    ONE_STEP_FIT_TOL, QUADRATIC_ITERATION_LIMIT, QUADRATIC_SPREAD_LIMIT,
};
pub use metrics::{
    write_metrics_csv, write_timing_csv, RunReport, WriteError, METRICS_COLUMNS, METRICS_FILE, REPORT_FILE,
    TIMING_FILE,
};
