//! Runs a JSON experiment config the same way `ggn train` does.
//!
//! ```text
//! cargo run --release --example train_from_config -- crates/core/examples/configs/wide_tanh_full_batch.json /tmp/ggn-run
//! ```

use std::path::PathBuf;

use ggn::harness::{run_experiment, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let config = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/linear_full_batch.json")));
    let cfg = ExperimentConfig::load(&config)?;
    let out = cfg.resolve_out_dir(args.next().map(PathBuf::from).as_deref());
    let outcome = run_experiment(&cfg, &out)?;
    for c in &outcome.report.verdicts {
        println!("{c}");
    }
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    println!("passed: {}", outcome.report.passed);
    Ok(())
}
