//! The initial Gram matrix of a two-layer network approaches the
//! infinite-width kernel as the hidden layer widens.
//!
//! ```text
//! cargo run --release --example kernel_concentration
//! ```

use ggn::harness::{generate_synthetic, TargetKind};
use ggn::model::{init_network, Activation, ArchSpec};
use ggn::ntk::{init_diagnostics, limit_kernel_mc, DEFAULT_MC_SAMPLES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate_synthetic(20, 5, 0, TargetKind::TeacherNet);
    for activation in [Activation::Tanh, Activation::Softplus] {
        let kernel = limit_kernel_mc(&data.x, activation, DEFAULT_MC_SAMPLES, 0)?;
        println!(
            "{}: λ₀ = {:.4e}, max stderr = {:.2e} over {} samples",
            activation.name(),
            kernel.lambda0,
            kernel.max_stderr(),
            kernel.mc_samples
        );
        for width in [100, 400, 1600, 6400, 25600] {
            let params = init_network(&ArchSpec::two_layer(5, width, activation), 0)?;
            let diag = init_diagnostics(&params, &data.x, &kernel)?;
            println!(
                "  M = {width:6}  max |G₀ − K̂| = {:.3e}  λ_min(G₀) = {:.4e}",
                diag.kernel_deviation, diag.gram_lambda_min
            );
        }
    }
    Ok(())
}
