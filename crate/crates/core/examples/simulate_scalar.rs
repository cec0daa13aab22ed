//! Simulates the scalar system `Δ^0.5 x[k+1] = 0.2 x[k] + w[k]` with the
//! full-memory recursion and with its two-lag augmented approximation.
//!
//! Run with `cargo run --example simulate_scalar`.

use fodsid::frac::{augment, FracSystem};
use fodsid::sim::{simulate_augmented, simulate_exact};
use nalgebra::{dmatrix, dvector};

fn main() -> fodsid::Result<()> {
    let system = FracSystem::new(vec![0.5], dmatrix![0.2], None, 0.0)?;
    let x0 = dvector![1.0];
    let exact = simulate_exact(&system, &x0, 10, 0, None)?;
    let approx = simulate_augmented(&augment(&system, 2)?, 0.0, &x0, 10, 0, None)?;

    println!("{:>3} {:>12} {:>12}", "k", "exact", "p = 2");
    for k in 0..=10 {
        println!(
            "{k:>3} {:>12.6} {:>12.6}",
            exact.state(k)[0],
            approx.state(k)[0]
        );
    }

    // The lag weights sum to A + 1, so this system drifts upward under full
    // memory while its two-lag truncation decays. A negative A is stable.
    let stable = FracSystem::new(vec![0.5], dmatrix![-0.3], None, 0.1)?;
    let noisy = simulate_exact(&stable, &x0, 1000, 42, None)?;
    let tail = noisy.states().rows(500, 501);
    let rms = (tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64).sqrt();
    println!("A = -0.3, sigma = 0.1, seed 42: RMS of x[500..=1000] = {rms:.4}");
    Ok(())
}
