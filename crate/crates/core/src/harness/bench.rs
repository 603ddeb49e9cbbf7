use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::linalg::solve_spd;
use crate::model::{init_network, per_sample_jacobian, Activation, ArchSpec, NetworkParams};
use crate::ntk::{Check, Verdict};
use crate::optim::{ggn_minibatch_step, gram_matrix, sgd_momentum_step, GgnConfig, SgdConfig};

use super::dataset::{generate_synthetic, TargetKind};
use super::experiment::HarnessError;
use super::metrics::WriteError;

pub const WARMUP_TRIALS: usize = 3;
pub const MIN_TRIALS: usize = 10;

/// Accepted range of the Gram time ratio when `b` is quadrupled.
pub const GRAM_SCALING_RANGE: (f64, f64) = (8.0, 32.0);

/// Largest accepted GGN/SGD step-time ratio at `b = 32`.
pub const STEP_RATIO_LIMIT: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub arch: ArchSpec,
    pub batch_sizes: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    /// An mlp with about 1.0e5 parameters: `d = 64`, two hidden layers of 286.
    fn default() -> Self {
        Self {
            arch: ArchSpec::mlp(64, 286, 2, Activation::Tanh),
            batch_sizes: vec![1, 8, 32, 128],
            trials: MIN_TRIALS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Forward pass and per-sample Jacobian.
    Jacobian,
    /// `G = J Jᵀ`.
    Gram,
    /// Gram assembly followed by the `b × b` solve.
    GramSolve,
    GgnStep,
    SgdStep,
}

impl Phase {
    pub const ALL: [Phase; 5] = [Phase::Jacobian, Phase::Gram, Phase::GramSolve, Phase::GgnStep, Phase::SgdStep];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Jacobian => "jacobian",
            Phase::Gram => "gram",
            Phase::GramSolve => "gram_solve",
            Phase::GgnStep => "ggn_step",
            Phase::SgdStep => "sgd_step",
        }
    }
}

/// Timing summary in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    /// Median absolute deviation from the median.
    pub mad: f64,
}

impl TimingStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        assert!(!samples.is_empty(), "no timing samples");
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let median = median(samples);
        let dev: Vec<f64> = samples.iter().map(|s| (s - median).abs()).collect();
        Self {
            mean,
            std: var.sqrt(),
            median,
            mad: self::median(&dev),
        }
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub batch_size: usize,
    pub phase: Phase,
    pub trials: usize,
    pub stats: TimingStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub param_count: usize,
    pub rows: Vec<BenchRow>,
    pub checks: Vec<Check>,
}

impl BenchTable {
    pub fn stats(&self, b: usize, phase: Phase) -> Option<TimingStats> {
        self.rows
            .iter()
            .find(|r| r.batch_size == b && r.phase == phase)
            .map(|r| r.stats)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), WriteError> {
        let err = |e: csv::Error| WriteError {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(err)?;
        w.write_record([
            "b", "phase", "param_count", "trials", "mean_ms", "std_ms", "median_ms", "mad_ms",
        ])
        .map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.batch_size.to_string(),
                r.phase.name().to_string(),
                self.param_count.to_string(),
                r.trials.to_string(),
                format!("{:.6}", r.stats.mean),
                format!("{:.6}", r.stats.std),
                format!("{:.6}", r.stats.median),
                format!("{:.6}", r.stats.mad),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| WriteError {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

fn time_ms<T>(f: impl FnOnce() -> T) -> (f64, T) {
    let start = Instant::now();
    let out = f();
    (start.elapsed().as_secs_f64() * 1e3, out)
}

/// True when the one-minute load average exceeds the number of CPUs.
/// Hosts without `/proc/loadavg` count as idle.
pub fn host_is_loaded() -> bool {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get()) as f64;
    std::fs::read_to_string("/proc/loadavg")
        .ok()
        .and_then(|s| s.split_whitespace().next().and_then(|v| v.parse::<f64>().ok()))
        .is_some_and(|load| load > cpus)
}

fn bench_one(params: &NetworkParams, b: usize, trials: usize, seed: u64) -> Result<Vec<BenchRow>, HarnessError> {
    let ds = generate_synthetic(b, params.input_dim(), seed, TargetKind::Random);
    let (x, y) = (&ds.x, &ds.y);
    let ggn = GgnConfig {
        alpha: 0.0,
        ..GgnConfig::ridgeless(b)
    };
    let sgd = SgdConfig::default();
    let velocity = vec![0.0; params.param_count()];
    let jac = params.jacobian(x)?;
    let r: Vec<f64> = params.predict(x)?.iter().zip(y).map(|(f, t)| f - t).collect();

    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(trials); Phase::ALL.len()];
    for trial in 0..WARMUP_TRIALS + trials {
        let mut measured = [0.0; 5];
        measured[0] = time_ms(|| {
            let (_, cache) = params.forward(x)?;
            per_sample_jacobian(params, x, &cache)
        })
        .0;
        measured[1] = time_ms(|| gram_matrix(&jac)).0;
        measured[2] = time_ms(|| -> Result<_, HarnessError> {
            let g = gram_matrix(&jac)?;
            solve_spd(&g.entries, &r).map_err(|e| HarnessError::Optim(e.into()))
        })
        .0;
        let (t, step) = time_ms(|| ggn_minibatch_step(params, x, y, &ggn));
        step?;
        measured[3] = t;
        let (t, step) = time_ms(|| sgd_momentum_step(params, x, y, &sgd, &velocity));
        step?;
        measured[4] = t;
        if trial >= WARMUP_TRIALS {
            for (s, m) in samples.iter_mut().zip(measured) {
                s.push(m);
            }
        }
    }
    Ok(Phase::ALL
        .iter()
        .zip(&samples)
        .map(|(&phase, s)| BenchRow {
            batch_size: b,
            phase,
            trials,
            stats: TimingStats::from_samples(s),
        })
        .collect())
}

/// Times the pieces of one GGN step and one SGD step at every batch size.
///
/// Each measurement is preceded by [`WARMUP_TRIALS`] untimed repetitions.
/// Checks: the Gram time ratio for every `b → 4b` pair present, and the
/// GGN/SGD step ratio at `b = 32`. Both are informational on a loaded host.
pub fn bench_overhead(cfg: &BenchConfig) -> Result<BenchTable, HarnessError> {
    let trials = cfg.trials.max(MIN_TRIALS);
    if cfg.trials < MIN_TRIALS {
        log::warn!("raising trials from {} to {MIN_TRIALS}", cfg.trials);
    }
    let params = init_network(&cfg.arch, cfg.seed)?;
    let mut rows = Vec::new();
    for &b in &cfg.batch_sizes {
        if b == 0 {
            continue;
        }
        log::info!("bench b = {b}");
        rows.extend(bench_one(&params, b, trials, cfg.seed)?);
    }
    let mut table = BenchTable {
        param_count: params.param_count(),
        rows,
        checks: Vec::new(),
    };
    let loaded = host_is_loaded();
    let soften = |c: Check| {
        if loaded && c.verdict == Verdict::Fail {
            Check {
                verdict: Verdict::Informational,
                detail: format!("{} (host loaded)", c.detail),
                ..c
            }
        } else {
            c
        }
    };
    let mut checks = Vec::new();
    for &b in &cfg.batch_sizes {
        if let (Some(lo), Some(hi)) = (table.stats(b, Phase::Gram), table.stats(4 * b, Phase::Gram)) {
            if b == 1 {
                continue;
            }
            let ratio = hi.median / lo.median;
            let (min, max) = GRAM_SCALING_RANGE;
            checks.push(soften(
                Check::pass_if(
                    format!("gram_scaling_b{b}_to_b{}", 4 * b),
                    (min..=max).contains(&ratio),
                    format!("median Gram time ratio in [{min}, {max}]"),
                )
                .with_value(ratio),
            ));
        }
    }
    if let (Some(g), Some(s)) = (table.stats(32, Phase::GgnStep), table.stats(32, Phase::SgdStep)) {
        let ratio = g.median / s.median;
        checks.push(soften(
            Check::pass_if("step_ratio_b32", ratio < STEP_RATIO_LIMIT, "median GGN / SGD step time at b = 32")
                .with_value(ratio)
                .with_threshold(STEP_RATIO_LIMIT),
        ));
    }
    table.checks = checks;
    Ok(table)
}
