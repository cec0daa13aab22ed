//! Shows how the augmented approximation converges to the full-memory
//! trajectory as the number of retained lags grows.
//!
//! Run with `cargo run --example truncation_sweep`.

use fodsid::frac::FracSystem;
use fodsid::sim::truncation_error_sweep;
use nalgebra::{dmatrix, dvector};

fn main() -> fodsid::Result<()> {
    let system = FracSystem::new(vec![0.4, 0.8], dmatrix![-0.3, 0.1; 0.05, -0.5], None, 0.05)?;
    let rows = truncation_error_sweep(
        &system,
        &dvector![1.0, -1.0],
        300,
        &[1, 2, 5, 10, 50, 100, 300],
        7,
    )?;
    println!("{:>5} {:>14}", "p", "max |x - x_p|");
    for row in rows {
        println!("{:>5} {:>14.3e}", row.p, row.max_error);
    }
    Ok(())
}
