//! Randomized and cross-checked properties of the public API.

use fodsid::certify::{evaluate_bound, evaluate_bound_with_inputs, BoundConstants};
use fodsid::frac::{augment, gl_weights, FracSystem};
use fodsid::ident::{ols_fit, operator_norm_error, submatrix_error_report};
use fodsid::linalg::operator_norm;
use fodsid::sim::simulate_augmented;
use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use proptest::prelude::*;
use statrs::function::gamma::gamma;

fn scalar_atilde() -> DMatrix<f64> {
    dmatrix![0.7, 0.125; 1.0, 0.0]
}

proptest! {
    #[test]
    fn gl_recurrence_matches_gamma_ratio(alpha in 0.01f64..1.99, j in 0usize..=50) {
        prop_assume!((alpha - 1.0).abs() > 1e-6);
        let w = gl_weights(alpha, j).unwrap();
        let oracle = gamma(j as f64 - alpha) / (gamma(-alpha) * gamma(j as f64 + 1.0));
        let got = w.get(j).unwrap();
        prop_assert!(((got - oracle) / oracle).abs() <= 1e-10, "{got} vs {oracle}");
    }

    #[test]
    fn block_errors_never_exceed_full_error(
        n in 1usize..=3,
        p in 1usize..=4,
        entries in proptest::collection::vec(-1.0f64..1.0, 144),
    ) {
        let d = n * p;
        let truth_a = DMatrix::from_fn(n, n, |i, j| 0.2 * entries[i * n + j] - if i == j { 0.5 } else { 0.0 });
        let sys = FracSystem::new(vec![0.6; n], truth_a, None, 0.3).unwrap();
        let truth = augment(&sys, p).unwrap();
        let bump = DMatrix::from_fn(d, d, |i, j| entries[(9 + i * d + j) % 144]);
        let est_matrix = truth.atilde() + bump;
        let diff = &est_matrix - truth.atilde();
        let full = operator_norm(&diff);
        for j in 0..p {
            let block = operator_norm(&diff.view((0, j * n), (n, n)).into_owned());
            prop_assert!(block <= full * (1.0 + 1e-9), "block {j}: {block} > {full}");
        }
    }
}

#[test]
fn submatrix_report_on_fitted_estimates() {
    let sys = FracSystem::new(vec![0.5, 0.7], dmatrix![-0.4, 0.1; 0.0, -0.6], None, 0.5).unwrap();
    for seed in 0..20 {
        let truth = augment(&sys, 3).unwrap();
        let traj = simulate_augmented(&truth, 0.5, &dvector![1.0, 1.0], 20, seed, None).unwrap();
        let est = ols_fit(&traj, 3).unwrap();
        let report = submatrix_error_report(&est, &truth).unwrap();
        assert!(report.max_block() <= report.full * (1.0 + 1e-9));
    }
}

#[test]
fn error_shrinks_with_more_data_on_average() {
    let sys = FracSystem::new(vec![0.5], dmatrix![0.2], None, 0.1).unwrap();
    let truth = augment(&sys, 2).unwrap();
    let mean_err = |k: usize| {
        (0..50u64)
            .map(|seed| {
                let traj = simulate_augmented(&truth, 0.1, &dvector![1.0], k, seed, None).unwrap();
                operator_norm_error(&ols_fit(&traj, 2).unwrap(), &truth).unwrap()
            })
            .sum::<f64>()
            / 50.0
    };
    let errs: Vec<f64> = [100, 400, 1600].iter().map(|&k| mean_err(k)).collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    // quadrupling K roughly halves the error
    let ratio = errs[0] / errs[2];
    assert!((2.5..6.5).contains(&ratio), "{ratio}");
}

#[test]
fn autonomous_bound_matches_independent_evaluation() {
    // reference values computed independently in double precision
    let cert = evaluate_bound(
        &scalar_atilde(),
        2000,
        100,
        0.1,
        1.0,
        &BoundConstants::default(),
    )
    .unwrap();
    assert!((cert.lambda_min_wk - 1.0193062392819798).abs() < 1e-12);
    assert!(cert.logdet_ratio.abs() < 1e-12);
    assert!(
        (cert.bound_value - 32.527479226428035).abs() < 1e-9,
        "{}",
        cert.bound_value
    );
    assert!((cert.small_c - 444.44444444444446).abs() < 1e-9);
    assert!(!cert.burn_in_satisfied);
}

#[test]
fn input_bound_matches_independent_evaluation() {
    let b = dmatrix![1.0; 0.0];
    let cert = evaluate_bound_with_inputs(
        &scalar_atilde(),
        &b,
        2000,
        100,
        0.1,
        1.0,
        1.0,
        &BoundConstants::default(),
    )
    .unwrap();
    assert!((cert.lambda_min_wk - 1.6101776344206513).abs() < 1e-12);
    assert!((cert.trace_wbig.unwrap() - 12.37566137566138).abs() < 1e-9);
    assert!(
        (cert.bound_value - 31.15716122927906).abs() < 1e-9,
        "{}",
        cert.bound_value
    );
    assert!(!cert.burn_in_satisfied);
}

#[test]
fn bound_decreases_in_k_at_fixed_small_ball_index() {
    let c = BoundConstants::default();
    let mut prev = f64::INFINITY;
    for big_k in [100, 200, 400, 800, 1600, 3200] {
        let b = evaluate_bound(&scalar_atilde(), big_k, 50, 0.1, 0.1, &c)
            .unwrap()
            .bound_value;
        assert!(b < prev, "K = {big_k}: {b} >= {prev}");
        prev = b;
    }
}

#[test]
fn bound_scales_linearly_in_sigma_for_autonomous_variant() {
    let c = BoundConstants::default();
    let one = evaluate_bound(&scalar_atilde(), 1000, 10, 0.1, 1.0, &c)
        .unwrap()
        .bound_value;
    let tenth = evaluate_bound(&scalar_atilde(), 1000, 10, 0.1, 0.1, &c)
        .unwrap()
        .bound_value;
    assert!((tenth / one - 0.1).abs() < 1e-12);
}

#[test]
fn truncation_error_decreases_with_memory() {
    let sys = FracSystem::new(vec![0.4], dmatrix![-0.2], None, 0.0).unwrap();
    let rows = fodsid::sim::truncation_error_sweep(
        &sys,
        &DVector::from_element(1, 1.0),
        100,
        &[1, 5, 20, 100],
        0,
    )
    .unwrap();
    for w in rows.windows(2) {
        assert!(w[1].max_error <= w[0].max_error);
    }
    assert_eq!(rows.last().unwrap().max_error, 0.0);
}
