//! Windowed OLS forecasting on multichannel time series.
//!
//! The series is cut into consecutive, disjoint windows. Each window is
//! treated as an independent record: augmented regressors are built from
//! the window alone (zero history before its first sample), the transition
//! matrix is fit by OLS, and one-step-ahead predictions `x̂[k+1] = Â x̃[k]`
//! are produced for the window's interior.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ident::{augmented_state, ols_fit_with, OlsEstimate, OlsOptions, Padding};
use crate::sim::Trajectory;

/// A `T x n` multichannel series with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
}

impl Series {
    pub fn new(names: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if names.len() != values.ncols() {
            return Err(Error::data("one name per channel required"));
        }
        Ok(Series { names, values })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadOptions {
    pub delimiter: char,
    /// Columns to read, by header name. `None` reads every column except a
    /// leading index column named `k`, `t`, `time` or `index`.
    pub channel_columns: Option<Vec<String>>,
    pub max_rows: Option<usize>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            delimiter: ',',
            channel_columns: None,
            max_rows: None,
        }
    }
}

const INDEX_COLUMNS: [&str; 4] = ["k", "t", "time", "index"];

/// Reads a headed CSV into a `T x n` series.
///
/// Rows are numbered from 1 at the first data row in error messages.
pub fn load_series(path: &Path, opts: &LoadOptions) -> Result<Series> {
    if !opts.delimiter.is_ascii() {
        return Err(Error::config("delimiter must be a single ASCII character"));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter as u8)
        .from_reader(file);
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::data(format!("{}: empty file", path.display())));
    }
    let selected: Vec<usize> = match &opts.channel_columns {
        Some(cols) => {
            cols.iter()
                .map(|c| {
                    headers.iter().position(|h| h == c).ok_or_else(|| {
                        Error::data(format!("{}: missing column {c:?}", path.display()))
                    })
                })
                .collect::<Result<_>>()?
        }
        None => {
            let skip_first = headers.len() > 1
                && INDEX_COLUMNS.contains(&headers[0].to_ascii_lowercase().as_str());
            (usize::from(skip_first)..headers.len()).collect()
        }
    };
    if selected.is_empty() {
        return Err(Error::data(format!(
            "{}: no channel columns selected",
            path.display()
        )));
    }

    let mut data: Vec<f64> = Vec::new();
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        if opts.max_rows.is_some_and(|m| rows >= m) {
            break;
        }
        let rec = rec?;
        let row = i + 1;
        for &c in &selected {
            let cell = rec.get(c).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| {
                Error::data(format!(
                    "{}: row {row}, column {:?}: not a number: {cell:?}",
                    path.display(),
                    headers[c]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::data(format!(
                    "{}: row {row}, column {:?}: non-finite value {cell:?}",
                    path.display(),
                    headers[c]
                )));
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::data(format!("{}: no data rows", path.display())));
    }
    let n = selected.len();
    Ok(Series {
        names: selected.iter().map(|&c| headers[c].clone()).collect(),
        values: DMatrix::from_row_slice(rows, n, &data),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastOptions {
    pub ols: OlsOptions,
    /// Fit on every window `[s, s + W)` and predict the first sample after
    /// it, instead of disjoint windows with in-window predictions.
    pub sliding: bool,
    /// Standardize each channel before fitting; predictions are mapped back.
    pub zscore: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForecastMetrics {
    pub rmse_total: f64,
    pub rmse_per_channel: Vec<f64>,
    pub num_windows: usize,
    /// RMSE of `x̂[k+1] = x[k]` on the same predicted steps.
    pub persistence_rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedForecast {
    pub window_size: usize,
    pub p: usize,
    pub channels: usize,
    /// Time index of each predicted sample, ascending.
    pub predicted_index: Vec<usize>,
    /// One row per entry of `predicted_index`.
    pub predictions: DMatrix<f64>,
    pub per_window_estimates: Vec<OlsEstimate>,
    pub metrics: ForecastMetrics,
}

impl WindowedForecast {
    /// Writes `k,x1..xn,xhat1..xhatn` for every time index; `xhat` cells are
    /// empty where no prediction was made.
    pub fn write_predictions_csv<W: Write>(&self, series: &Series, out: W) -> Result<()> {
        let n = series.channels();
        let mut header = vec!["k".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("xhat{i}")));
        let mut pred_row = vec![None; series.len()];
        for (r, &k) in self.predicted_index.iter().enumerate() {
            pred_row[k] = Some(r);
        }
        let rows: Vec<Vec<String>> = (0..series.len())
            .map(|k| {
                let mut rec = vec![k.to_string()];
                rec.extend(series.values.row(k).iter().map(|v| v.to_string()));
                match pred_row[k] {
                    Some(r) => rec.extend(self.predictions.row(r).iter().map(|v| v.to_string())),
                    None => rec.extend(std::iter::repeat_n(String::new(), n)),
                }
                rec
            })
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        crate::io::write_table(out, &header, &rows)
    }
}

fn standardize(values: &DMatrix<f64>) -> (DMatrix<f64>, Vec<(f64, f64)>) {
    let t = values.nrows() as f64;
    let stats: Vec<(f64, f64)> = values
        .column_iter()
        .map(|c| {
            let mean = c.sum() / t;
            let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t;
            let sd = var.sqrt();
            (mean, if sd > 0.0 { sd } else { 1.0 })
        })
        .collect();
    let z = DMatrix::from_fn(values.nrows(), values.ncols(), |r, c| {
        (values[(r, c)] - stats[c].0) / stats[c].1
    });
    (z, stats)
}

fn validate_alpha(alpha: &[f64], channels: usize) -> Result<()> {
    if alpha.len() != channels {
        return Err(Error::domain(format!(
            "{} fractional orders for {channels} channels",
            alpha.len()
        )));
    }
    for &a in alpha {
        crate::frac::gl_weights(a, 0)?;
    }
    Ok(())
}

struct WindowResult {
    estimate: OlsEstimate,
    predictions: Vec<(usize, DVector<f64>)>,
}

fn fit_window(
    data: &DMatrix<f64>,
    start: usize,
    window_size: usize,
    p: usize,
    opts: &ForecastOptions,
) -> Result<WindowResult> {
    let n = data.ncols();
    let local = data.rows(start, window_size).into_owned();
    let traj = Trajectory::observed(local.clone(), None)?;
    let estimate = ols_fit_with(&traj, p, &opts.ols)?;
    let top = estimate.atilde_hat.rows(0, n).into_owned();
    let predict_at =
        |k: usize| -> DVector<f64> { &top * DVector::from_vec(augmented_state(&local, k, p)) };
    let predictions = if opts.sliding {
        vec![(start + window_size, predict_at(window_size - 1))]
    } else {
        let first = match opts.ols.padding {
            Padding::Zero => 0,
            Padding::Discard => p - 1,
        };
        (first..window_size - 1)
            .map(|k| (start + k + 1, predict_at(k)))
            .collect()
    };
    Ok(WindowResult {
        estimate,
        predictions,
    })
}

/// Fits OLS per window and predicts one step ahead.
///
/// `alpha` must hold one admissible order per channel. The full-matrix and
/// structured estimators do not use the orders numerically; they are
/// validated and carried for provenance.
pub fn windowed_fit_predict(
    series: &Series,
    alpha: &[f64],
    p: usize,
    window_size: usize,
    opts: &ForecastOptions,
) -> Result<WindowedForecast> {
    let t = series.len();
    let n = series.channels();
    validate_alpha(alpha, n)?;
    if p < 1 {
        return Err(Error::domain("truncation length p must be >= 1"));
    }
    if window_size < p + 2 {
        return Err(Error::domain(format!(
            "window size {window_size} is below p + 2 = {}",
            p + 2
        )));
    }
    if window_size > t {
        return Err(Error::domain(format!(
            "window size {window_size} exceeds series length {t}"
        )));
    }
    if opts.sliding && window_size == t {
        return Err(Error::domain(
            "sliding mode needs at least one sample after the window",
        ));
    }

    let (data, stats) = if opts.zscore {
        let (z, s) = standardize(&series.values);
        (z, Some(s))
    } else {
        (series.values.clone(), None)
    };

    let starts: Vec<usize> = if opts.sliding {
        (0..t - window_size).collect()
    } else {
        (0..t / window_size).map(|w| w * window_size).collect()
    };
    let results: Vec<WindowResult> = starts
        .par_iter()
        .map(|&s| fit_window(&data, s, window_size, p, opts))
        .collect::<Result<_>>()?;

    let mut predicted_index = Vec::new();
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut per_window_estimates = Vec::with_capacity(results.len());
    for r in results {
        for (k, mut xhat) in r.predictions {
            if let Some(stats) = &stats {
                for (i, v) in xhat.iter_mut().enumerate() {
                    *v = *v * stats[i].1 + stats[i].0;
                }
            }
            predicted_index.push(k);
            rows.push(xhat);
        }
        per_window_estimates.push(r.estimate);
    }
    let predictions = DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c]);

    let steps = predicted_index.len();
    let mut sq = vec![0.0; n];
    let mut sq_persist = 0.0;
    for (r, &k) in predicted_index.iter().enumerate() {
        for c in 0..n {
            let obs = series.values[(k, c)];
            sq[c] += (predictions[(r, c)] - obs).powi(2);
            sq_persist += (series.values[(k - 1, c)] - obs).powi(2);
        }
    }
    let denom = steps.max(1) as f64;
    let metrics = ForecastMetrics {
        rmse_total: (sq.iter().sum::<f64>() / (denom * n as f64)).sqrt(),
        rmse_per_channel: sq.iter().map(|s| (s / denom).sqrt()).collect(),
        num_windows: starts.len(),
        persistence_rmse: (sq_persist / (denom * n as f64)).sqrt(),
    };

    Ok(WindowedForecast {
        window_size,
        p,
        channels: n,
        predicted_index,
        predictions,
        per_window_estimates,
        metrics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub window_size: usize,
    pub p: usize,
    pub rmse: Option<f64>,
    pub num_windows: usize,
    pub error: Option<String>,
}

/// Default truncation for a window: the longest memory it can support.
pub fn default_p(window_size: usize) -> usize {
    window_size.saturating_sub(2).max(1)
}

/// One [`windowed_fit_predict`] per window size; failures are recorded per row.
/// With `p = None` each size uses [`default_p`].
pub fn window_size_sweep(
    series: &Series,
    alpha: &[f64],
    p: Option<usize>,
    window_sizes: &[usize],
    opts: &ForecastOptions,
) -> Vec<SweepRow> {
    window_sizes
        .iter()
        .map(|&w| {
            let p = p.unwrap_or_else(|| default_p(w));
            match windowed_fit_predict(series, alpha, p, w, opts) {
                Ok(f) => SweepRow {
                    window_size: w,
                    p,
                    rmse: Some(f.metrics.rmse_total),
                    num_windows: f.metrics.num_windows,
                    error: None,
                },
                Err(e) => SweepRow {
                    window_size: w,
                    p,
                    rmse: None,
                    num_windows: 0,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Writes `window_size,rmse`; failed rows leave `rmse` empty.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.window_size.to_string(),
                r.rmse.map(|v| v.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    crate::io::write_table(out, &["window_size", "rmse"], &cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frac::FracSystem;
    use crate::sim::simulate_exact;
    use nalgebra::{dmatrix, dvector};

    fn synthetic(t: usize, sigma: f64, seed: u64) -> Series {
        let a = dmatrix![
            -0.6, 0.1, 0.0, 0.05;
            0.0, -0.5, 0.1, 0.0;
            0.05, 0.0, -0.7, 0.1;
            0.0, 0.05, 0.0, -0.4
        ];
        let sys = FracSystem::new(vec![0.5, 0.6, 0.7, 0.8], a, None, sigma).unwrap();
        let traj = simulate_exact(&sys, &dvector![1.0, -0.5, 0.8, 0.3], t - 1, seed, None).unwrap();
        Series::new(
            (1..=4).map(|i| format!("c{i}")).collect(),
            traj.states().clone(),
        )
        .unwrap()
    }

    #[test]
    fn fifteen_windows_for_150_samples() {
        let s = synthetic(150, 0.1, 1);
        let f = windowed_fit_predict(&s, &[0.5; 4], 8, 10, &ForecastOptions::default()).unwrap();
        assert_eq!(f.metrics.num_windows, 15);
        assert_eq!(f.per_window_estimates.len(), 15);
        assert_eq!(f.predicted_index.len(), 15 * 9);
        assert_eq!(f.predictions.nrows(), f.predicted_index.len());
    }

    #[test]
    fn noiseless_full_window_is_exact() {
        let s = synthetic(60, 0.0, 0);
        let f = windowed_fit_predict(
            &s,
            &[0.5; 4],
            default_p(60),
            60,
            &ForecastOptions::default(),
        )
        .unwrap();
        assert!(f.metrics.rmse_total <= 1e-6, "{}", f.metrics.rmse_total);
    }

    #[test]
    fn beats_persistence_on_noisy_fractional_data() {
        let s = synthetic(150, 0.1, 2);
        let f = windowed_fit_predict(&s, &[0.5; 4], 2, 30, &ForecastOptions::default()).unwrap();
        assert!(f.metrics.rmse_total < f.metrics.persistence_rmse);
    }

    #[test]
    fn no_lookahead_across_windows() {
        let s = synthetic(100, 0.1, 3);
        let opts = ForecastOptions::default();
        let base = windowed_fit_predict(&s, &[0.5; 4], 3, 20, &opts).unwrap();
        let mut perturbed = s.clone();
        for k in 40..100 {
            for c in 0..4 {
                perturbed.values[(k, c)] += 5.0;
            }
        }
        let pert = windowed_fit_predict(&perturbed, &[0.5; 4], 3, 20, &opts).unwrap();
        for (r, &k) in base.predicted_index.iter().enumerate() {
            if k < 40 {
                assert_eq!(base.predictions.row(r), pert.predictions.row(r));
            }
        }
    }

    #[test]
    fn sliding_predicts_after_each_window() {
        let s = synthetic(80, 0.05, 4);
        let opts = ForecastOptions {
            sliding: true,
            ..Default::default()
        };
        let f = windowed_fit_predict(&s, &[0.5; 4], 2, 40, &opts).unwrap();
        assert_eq!(f.metrics.num_windows, 40);
        assert_eq!(f.predicted_index, (40..80).collect::<Vec<_>>());
    }

    #[test]
    fn zscore_roundtrips_units() {
        let mut s = synthetic(60, 0.0, 0);
        s.values.column_mut(2).scale_mut(1000.0);
        let opts = ForecastOptions {
            zscore: true,
            ..Default::default()
        };
        let f = windowed_fit_predict(&s, &[0.5; 4], default_p(60), 60, &opts).unwrap();
        assert!(f.metrics.rmse_per_channel[2] <= 1e-6 * 1000.0);
    }

    #[test]
    fn argument_errors() {
        let s = synthetic(50, 0.1, 0);
        let o = ForecastOptions::default();
        assert!(matches!(
            windowed_fit_predict(&s, &[0.5; 4], 2, 60, &o),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            windowed_fit_predict(&s, &[0.5; 4], 8, 9, &o),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            windowed_fit_predict(&s, &[0.5; 3], 2, 10, &o),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            windowed_fit_predict(&s, &[0.5, 0.5, 0.5, 3.0], 2, 10, &o),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn sweep_rows() {
        let s = synthetic(150, 0.0, 0);
        let rows = window_size_sweep(
            &s,
            &[0.5; 4],
            None,
            &[10, 15, 25, 30],
            &ForecastOptions::default(),
        );
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.rmse.unwrap() <= 1e-6), "{rows:?}");
        let single = window_size_sweep(&s, &[0.5; 4], Some(3), &[25], &ForecastOptions::default());
        let direct =
            windowed_fit_predict(&s, &[0.5; 4], 3, 25, &ForecastOptions::default()).unwrap();
        assert_eq!(single[0].rmse, Some(direct.metrics.rmse_total));
        let bad = window_size_sweep(&s, &[0.5; 4], None, &[500], &ForecastOptions::default());
        assert!(bad[0].error.is_some() && bad[0].rmse.is_none());
    }

    #[test]
    fn load_series_cases() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let mut text = String::from("time,c1,c2\n");
        for k in 0..5 {
            text.push_str(&format!("{k},{},{}\n", k as f64 * 0.5, -(k as f64)));
        }
        std::fs::write(&p, &text).unwrap();
        let s = load_series(&p, &LoadOptions::default()).unwrap();
        assert_eq!(s.names, vec!["c1", "c2"]);
        assert_eq!(s.values.shape(), (5, 2));
        assert_eq!(s.values[(4, 1)], -4.0);

        let opts = LoadOptions {
            channel_columns: Some(vec!["c2".into()]),
            max_rows: Some(3),
            ..Default::default()
        };
        let s = load_series(&p, &opts).unwrap();
        assert_eq!(s.values.shape(), (3, 1));

        let opts = LoadOptions {
            channel_columns: Some(vec!["nope".into()]),
            ..Default::default()
        };
        assert!(load_series(&p, &opts)
            .unwrap_err()
            .to_string()
            .contains("missing column"));

        std::fs::write(&p, "a;b\n1;2\n3;NaN\n").unwrap();
        let opts = LoadOptions {
            delimiter: ';',
            ..Default::default()
        };
        let err = load_series(&p, &opts).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");

        std::fs::write(&p, "a\n1\nx\n").unwrap();
        assert!(load_series(&p, &LoadOptions::default())
            .unwrap_err()
            .to_string()
            .contains("row 2"));
        std::fs::write(&p, "").unwrap();
        assert!(load_series(&p, &LoadOptions::default()).is_err());
        std::fs::write(&p, "a,b\n").unwrap();
        assert!(load_series(&p, &LoadOptions::default()).is_err());
    }
}
