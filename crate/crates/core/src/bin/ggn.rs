use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ggn::harness::{
    bench_overhead, run_experiment, run_ntk, run_verify, BenchConfig, ExperimentConfig, Outcome, Suite,
    DEFAULT_OUT_DIR, OUT_DIR_ENV,
};
use ggn::model::{Activation, ArchKind, ArchSpec};
use ggn::ntk::Check;
use ggn::optim::{Algorithm, GradientReduction};

/// Gram-Gauss-Newton training and wide-network diagnostics.
///
/// Output directory precedence: --out, then the config's output.dir, then
/// $GGN_OUT_DIR, then ./runs.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write metrics.csv, timing.csv and report.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Average SGD gradients over the batch instead of summing them.
        #[arg(long)]
        mean_reduction: bool,
    },
    /// Run one verification suite.
    Verify {
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(["linear_oracle", "dynamics", "kernel", "rates"]))]
        suite: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Limit kernel, initial Gram matrix and iteration-matrix statistics.
    Ntk {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Time the Jacobian, Gram, solve and full steps of GGN and SGD.
    Bench {
        #[arg(long = "b", value_delimiter = ',', default_value = "1,8,32,128")]
        batch_sizes: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value = "mlp")]
        arch: ArchKind,
        #[arg(long, default_value_t = 64)]
        input_dim: usize,
        #[arg(long, default_value_t = 286)]
        width: usize,
        #[arg(long, default_value_t = 2)]
        hidden_layers: usize,
        #[arg(long, default_value = "tanh")]
        activation: Activation,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::load(path).map_err(|e| e.to_string())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn print_checks(checks: &[Check]) {
    for c in checks {
        println!("{c}");
    }
}

fn conclude(outcome: Outcome) -> ExitCode {
    print_checks(&outcome.report.verdicts);
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    if let Some(e) = &outcome.report.error {
        eprintln!("error: {e}");
    }
    if outcome.report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Train {
            config,
            out,
            seed,
            mean_reduction,
        } => {
            let mut cfg = load(&config, seed)?;
            if mean_reduction {
                if let Algorithm::Sgd(s) = &mut cfg.algorithm {
                    s.reduction = GradientReduction::Mean;
                }
            }
            let dir = cfg.resolve_out_dir(out.as_deref());
            Ok(conclude(run_experiment(&cfg, &dir).map_err(|e| e.to_string())?))
        }
        Command::Verify {
            suite,
            config,
            out,
            seed,
        } => {
            let cfg = load(&config, seed)?;
            let suite: Suite = suite.parse()?;
            let dir = cfg.resolve_out_dir(out.as_deref());
            Ok(conclude(run_verify(&cfg, suite, &dir).map_err(|e| e.to_string())?))
        }
        Command::Ntk { config, out, seed } => {
            let cfg = load(&config, seed)?;
            let dir = cfg.resolve_out_dir(out.as_deref());
            Ok(conclude(run_ntk(&cfg, &dir).map_err(|e| e.to_string())?))
        }
        Command::Bench {
            batch_sizes,
            trials,
            arch,
            input_dim,
            width,
            hidden_layers,
            activation,
            out,
            seed,
        } => {
            let spec = match arch {
                ArchKind::TwoLayer => ArchSpec::two_layer(input_dim, width, activation),
                ArchKind::Mlp => ArchSpec::mlp(input_dim, width, hidden_layers, activation),
            };
            let cfg = BenchConfig {
                arch: spec,
                batch_sizes,
                trials,
                seed: seed.unwrap_or(0),
            };
            let table = bench_overhead(&cfg).map_err(|e| e.to_string())?;
            let dir = out
                .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
            std::fs::create_dir_all(&dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
            let path = dir.join("bench.csv");
            table.write_csv(&path).map_err(|e| e.to_string())?;
            println!("m = {}", table.param_count);
            println!("{:>5} {:<11} {:>12} {:>12} {:>12}", "b", "phase", "median_ms", "mad_ms", "mean_ms");
            for r in &table.rows {
                println!(
                    "{:>5} {:<11} {:>12.4} {:>12.4} {:>12.4}",
                    r.batch_size,
                    r.phase.name(),
                    r.stats.median,
                    r.stats.mad,
                    r.stats.mean
                );
            }
            print_checks(&table.checks);
            println!("wrote {}", path.display());
            let failed = table.checks.iter().any(|c| c.verdict.is_failure());
            Ok(if failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
