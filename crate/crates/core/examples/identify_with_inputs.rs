//! Identification of an input-driven system: the known input matrix is
//! subtracted before the transition matrix is regressed.
//!
//! Run with `cargo run --example identify_with_inputs`.

use fodsid::frac::{augment, FracSystem};
use fodsid::ident::{ols_fit_with_inputs, operator_norm_error};
use fodsid::sim::{gaussian_inputs, simulate_augmented};
use nalgebra::{dmatrix, dvector};

fn main() -> fodsid::Result<()> {
    let system = FracSystem::new(vec![0.5], dmatrix![0.2], Some(dmatrix![1.0]), 0.1)?;
    let truth = augment(&system, 2)?;
    let btilde = truth.btilde().expect("system has inputs").clone();
    for horizon in [250, 1000, 4000] {
        let u = gaussian_inputs(1, horizon, 1.0, 3)?;
        let traj =
            simulate_augmented(&truth, system.sigma(), &dvector![0.0], horizon, 3, Some(&u))?;
        let est = ols_fit_with_inputs(&traj, 2, &btilde)?;
        println!(
            "K = {horizon:>4}: ||A_hat - A||_op = {:.4}",
            operator_norm_error(&est, &truth)?
        );
    }
    Ok(())
}
