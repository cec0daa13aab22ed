//! Runs a seeded Monte-Carlo campaign and prints the error-versus-K table,
//! the fitted log-log slope and the bound coverage.
//!
//! Run with `cargo run --release --example monte_carlo`.

use fodsid::certify::{monte_carlo_campaign, CampaignConfig};
use fodsid::frac::FracSystem;
use nalgebra::dmatrix;

fn main() -> fodsid::Result<()> {
    let system = FracSystem::new(vec![0.5], dmatrix![0.2], None, 0.1)?;
    let config = CampaignConfig {
        master_seed: 2024,
        trials: 100,
        ..CampaignConfig::default()
    };
    let table = monte_carlo_campaign(&system, &config)?;
    for w in &table.warnings {
        println!("warning: {w}");
    }
    table.write_csv(std::io::stdout().lock())?;
    if let Some(slope) = table.median_slope() {
        println!("median-error slope in log-log: {slope:.3} (1/sqrt(K) gives -0.5)");
    }
    Ok(())
}
