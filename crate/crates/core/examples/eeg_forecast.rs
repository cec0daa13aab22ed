//! Windowed one-step forecasting on a multichannel CSV, written to a
//! temporary directory: disjoint windows, a window-size sweep and an
//! out-of-sample sliding run compared against persistence.
//!
//! Run with `cargo run --example eeg_forecast [path/to/series.csv]`.

use fodsid::forecast::{
    default_p, load_series, window_size_sweep, windowed_fit_predict, ForecastOptions, LoadOptions,
};
use fodsid::frac::FracSystem;
use fodsid::sim::simulate_exact;
use nalgebra::{dmatrix, dvector};

fn synthetic_csv(path: &std::path::Path) -> fodsid::Result<()> {
    let a = dmatrix![
        -0.6, 0.1, 0.0, 0.05;
        0.0, -0.5, 0.1, 0.0;
        0.05, 0.0, -0.7, 0.1;
        0.0, 0.05, 0.0, -0.4
    ];
    let system = FracSystem::new(vec![0.5, 0.6, 0.7, 0.8], a, None, 0.1)?;
    let traj = simulate_exact(&system, &dvector![1.0, -0.5, 0.8, 0.3], 149, 5, None)?;
    let mut text = String::from("k,Fz,Cz,Pz,Oz\n");
    for k in 0..150 {
        let row: Vec<String> = traj.states().row(k).iter().map(|v| v.to_string()).collect();
        text += &format!("{k},{}\n", row.join(","));
    }
    std::fs::write(path, text).map_err(|e| fodsid::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn main() -> fodsid::Result<()> {
    let dir = std::env::temp_dir().join("fodsid-eeg-forecast");
    std::fs::create_dir_all(&dir).ok();
    let path = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => {
            let p = dir.join("series.csv");
            synthetic_csv(&p)?;
            p
        }
    };
    let series = load_series(&path, &LoadOptions::default())?;
    let alpha = vec![0.5; series.channels()];
    println!(
        "{}: {} samples x {} channels",
        path.display(),
        series.len(),
        series.channels()
    );

    let fc = windowed_fit_predict(
        &series,
        &alpha,
        default_p(10),
        10,
        &ForecastOptions::default(),
    )?;
    let degenerate = fc
        .per_window_estimates
        .iter()
        .filter(|e| e.degenerate)
        .count();
    println!(
        "window 10, p = {}: {} window fits ({degenerate} rank deficient), in-window RMSE {:.2e}",
        fc.p, fc.metrics.num_windows, fc.metrics.rmse_total
    );
    // with p = W - 2 each window has more unknowns than equations, so the
    // in-window fit interpolates; a short memory gives a meaningful error

    let out = dir.join("predictions.csv");
    fc.write_predictions_csv(
        &series,
        std::fs::File::create(&out).map_err(|e| fodsid::Error::Io {
            path: out.clone(),
            source: e,
        })?,
    )?;
    println!("predictions written to {}", out.display());

    for row in window_size_sweep(
        &series,
        &alpha,
        Some(2),
        &[10, 15, 25, 30],
        &ForecastOptions::default(),
    ) {
        println!(
            "window {:>3}, p = 2: in-window rmse {:?}",
            row.window_size, row.rmse
        );
    }

    let sliding = ForecastOptions {
        sliding: true,
        ..ForecastOptions::default()
    };
    let oos = windowed_fit_predict(&series, &alpha, 2, 30, &sliding)?;
    println!(
        "out-of-sample (window 30, p = 2): RMSE {:.4} vs persistence {:.4}",
        oos.metrics.rmse_total, oos.metrics.persistence_rmse
    );
    Ok(())
}
