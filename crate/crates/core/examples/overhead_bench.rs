//! Per-step cost of GGN against SGD for a 1e5-parameter MLP.
//!
//! ```text
//! cargo run --release --example overhead_bench
//! ```

use ggn::harness::{bench_overhead, BenchConfig, Phase};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = BenchConfig::default();
    let table = bench_overhead(&cfg)?;
    println!("m = {}", table.param_count);
    for &b in &cfg.batch_sizes {
        let get = |p| table.stats(b, p).map_or(f64::NAN, |s| s.median);
        println!(
            "b = {b:4}  jacobian {:8.3} ms  gram {:8.3} ms  ggn step {:8.3} ms  sgd step {:8.3} ms",
            get(Phase::Jacobian),
            get(Phase::Gram),
            get(Phase::GgnStep),
            get(Phase::SgdStep)
        );
    }
    for c in &table.checks {
        println!("{c}");
    }
    Ok(())
}
