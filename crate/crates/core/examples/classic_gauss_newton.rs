//! Classic Gauss-Newton in the under-parameterized regime, next to GGN in
//! the over-parameterized one.
//!
//! With an identity activation and a single hidden unit the model is linear
//! in its inputs, so one classic step solves the least-squares problem.
//!
//! ```text
//! cargo run --example classic_gauss_newton
//! ```

use ggn::linalg::{norm2, DenseMatrix};
use ggn::model::{Activation, NetworkParams};
use ggn::optim::{classic_gn_step, ggn_full_step, residual};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])?;
    let y = [1.0, 2.0, 3.0];

    let params = NetworkParams::two_layer(DenseMatrix::from_rows(&[[0.0, 0.0]])?, vec![1.0], Activation::Identity)?;
    let solved = classic_gn_step(&params, &x, &y)?;
    let w = solved.flat();
    println!("classic GN: w = ({:.6}, {:.6}), residual {:.2e}", w[0], w[1], norm2(&residual(&solved, &x, &y)?));

    let x2 = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]])?;
    let params2 = NetworkParams::two_layer(DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]])?, vec![1.0, 1.0], Activation::Identity)?;
    let step = ggn_full_step(&params2, &x2, &[2.0, 2.0])?;
    println!(
        "GGN on two samples: residual {:.2e} -> {:.2e}, new parameters {:?}",
        step.residual_before,
        step.residual_after,
        step.params.flat()
    );
    Ok(())
}
