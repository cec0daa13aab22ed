//! Evaluates the high-probability estimation-error certificate for the
//! scalar example, with and without input excitation.
//!
//! Run with `cargo run --example certify_bound`.

use fodsid::certify::{
    evaluate_bound, gramian, spectral_radius, tightest_certificate, BoundConstants,
};
use fodsid::frac::{augment, FracSystem};
use nalgebra::dmatrix;

fn main() -> fodsid::Result<()> {
    let system = FracSystem::new(vec![0.5], dmatrix![0.2], Some(dmatrix![1.0]), 0.1)?;
    let aug = augment(&system, 2)?;
    let constants = BoundConstants::default();

    println!("A~ = {}", aug.atilde());
    println!("stability: {:?}", spectral_radius(aug.atilde())?);
    println!("W_2 = {}", gramian(aug.atilde(), 2)?);

    for big_k in [1_000, 10_000, 100_000] {
        let cert = evaluate_bound(aug.atilde(), big_k, 2, 0.1, system.sigma(), &constants)?;
        println!(
            "K = {big_k:>6}, k = 2: bound {:.4}, burn-in satisfied: {}",
            cert.bound_value, cert.burn_in_satisfied
        );
    }
    let btilde = aug.btilde().expect("inputs");
    let cert = tightest_certificate(
        aug.atilde(),
        Some((btilde, 1.0)),
        100_000,
        0.1,
        system.sigma(),
        &constants,
    )?;
    println!(
        "{}",
        serde_json::to_string_pretty(&cert).expect("serializable")
    );
    Ok(())
}
