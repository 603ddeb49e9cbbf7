//! Round-trips a synthetic dataset through CSV and fits it with damped GGN.
//!
//! ```text
//! cargo run --release --example csv_dataset
//! ```

use ggn::harness::{generate_synthetic, load_csv, TargetKind};
use ggn::model::{init_network, Activation, ArchSpec};
use ggn::optim::{run_training, Algorithm, GgnConfig, Schedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("ggn-csv-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("data.csv");
    generate_synthetic(32, 3, 11, TargetKind::Random).write_csv(&path)?;

    let data = load_csv(&path)?;
    println!("loaded n = {}, d = {} from {}", data.n(), data.d(), path.display());
    let params = init_network(&ArchSpec::mlp(3, 64, 2, Activation::Softplus), 11)?;
    let config = GgnConfig {
        lambda: 1.0,
        alpha: 1e-3,
        batch_size: 32,
        schedule: Schedule::Cyclic,
        max_epochs: 30,
        target_residual: 1e-8,
    };
    let run = run_training(&params, &data, &config, &Algorithm::Ggn, 11)?;
    for (t, r) in run.report.epoch_residuals.iter().enumerate() {
        println!("epoch {t:2}  ‖f − y‖ = {r:.3e}");
    }
    Ok(())
}
