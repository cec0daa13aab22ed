//! Fits the augmented transition matrix of a two-state system by least
//! squares and compares the full and structured estimators.
//!
//! Run with `cargo run --example identify_ols`.

use fodsid::frac::{augment, FracSystem};
use fodsid::ident::{
    ols_fit, ols_fit_with, operator_norm_error, submatrix_error_report, OlsOptions,
};
use fodsid::sim::simulate_augmented;
use nalgebra::{dmatrix, dvector};

fn main() -> fodsid::Result<()> {
    let system = FracSystem::new(vec![0.5, 0.7], dmatrix![-0.4, 0.1; 0.0, -0.6], None, 0.1)?;
    let truth = augment(&system, 3)?;
    let traj = simulate_augmented(&truth, system.sigma(), &dvector![1.0, 1.0], 2000, 1, None)?;

    let full = ols_fit(&traj, 3)?;
    let structured = ols_fit_with(
        &traj,
        3,
        &OlsOptions {
            structured: true,
            ..OlsOptions::default()
        },
    )?;
    println!("true top block row:\n{}", truth.atilde().rows(0, 2));
    println!("estimated top block row:\n{}", full.atilde_hat.rows(0, 2));
    println!(
        "full       ||A_hat - A||_op = {:.4}",
        operator_norm_error(&full, &truth)?
    );
    println!(
        "structured ||A_hat - A||_op = {:.4}",
        operator_norm_error(&structured, &truth)?
    );

    let report = submatrix_error_report(&full, &truth)?;
    for (j, e) in report.blocks.iter().enumerate() {
        println!("lag {j}: block error {e:.4} (full {:.4})", report.full);
    }
    Ok(())
}
