//! Ordinary least squares identification of the augmented transition matrix.
//!
//! The regression uses augmented regressors `x̃[k] = [x[k]; …; x[k-p+1]]`
//! built from an observed trajectory and solves
//! `min_Ã Σ_k ½ ‖x̃[k+1] - Ã x̃[k] (- B̃ u[k])‖²` through an SVD of the
//! regressor matrix. Rank-deficient problems get the minimum-norm solution.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::frac::AugmentedSystem;
use crate::io::matrix_to_rows;
use crate::linalg::operator_norm;
use crate::sim::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMode {
    Autonomous,
    WithInputs,
    /// Only the top block row `[A_0 … A_{p-1}]` is regressed; the shift
    /// structure below it is imposed.
    Structured,
}

/// How regressors whose history reaches before `x[0]` are handled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Missing history is zero (causal system at rest before `k = 0`).
    #[default]
    Zero,
    /// Drop the first `p - 1` transitions.
    Discard,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OlsOptions {
    pub structured: bool,
    pub padding: Padding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsEstimate {
    pub atilde_hat: DMatrix<f64>,
    pub n: usize,
    pub p: usize,
    pub mode: EstimateMode,
    /// Sum of squared residuals over all regressed coordinates.
    pub residual_rss: f64,
    /// Smallest singular value of the `K_used x d` regressor matrix (zero
    /// when there are fewer rows than columns).
    pub regressor_min_singular_value: f64,
    pub rank: usize,
    pub degenerate: bool,
    pub k_used: usize,
}

impl OlsEstimate {
    pub fn d(&self) -> usize {
        self.n * self.p
    }

    /// Block `(0, j)` of the estimate.
    pub fn top_block(&self, j: usize) -> DMatrix<f64> {
        self.atilde_hat
            .view((0, j * self.n), (self.n, self.n))
            .into_owned()
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "Atilde_hat": matrix_to_rows(&self.atilde_hat),
            "p": self.p,
            "mode": self.mode,
            "residual_rss": self.residual_rss,
            "min_singular_value": self.regressor_min_singular_value,
            "degenerate": self.degenerate,
            "rank": self.rank,
            "K_used": self.k_used,
        })
    }
}

/// Augmented state `x̃[k]`, zero beyond the start of the record.
pub fn augmented_state(states: &DMatrix<f64>, k: usize, p: usize) -> Vec<f64> {
    let n = states.ncols();
    let mut v = vec![0.0; n * p];
    for lag in 0..p.min(k + 1) {
        for i in 0..n {
            v[lag * n + i] = states[(k - lag, i)];
        }
    }
    v
}

pub fn ols_fit(traj: &Trajectory, p: usize) -> Result<OlsEstimate> {
    ols_fit_with(traj, p, &OlsOptions::default())
}

pub fn ols_fit_with(traj: &Trajectory, p: usize, opts: &OlsOptions) -> Result<OlsEstimate> {
    fit(traj, p, None, opts)
}

/// OLS with a known input channel: the known `B̃ u[k]` is subtracted from
/// each target before regressing.
pub fn ols_fit_with_inputs(
    traj: &Trajectory,
    p: usize,
    btilde: &DMatrix<f64>,
) -> Result<OlsEstimate> {
    ols_fit_with_inputs_opts(traj, p, btilde, &OlsOptions::default())
}

pub fn ols_fit_with_inputs_opts(
    traj: &Trajectory,
    p: usize,
    btilde: &DMatrix<f64>,
    opts: &OlsOptions,
) -> Result<OlsEstimate> {
    let u = traj
        .inputs()
        .ok_or_else(|| Error::config("trajectory carries no inputs"))?;
    let d = traj.n() * p;
    if btilde.nrows() != d || btilde.ncols() != u.ncols() {
        return Err(Error::domain(format!(
            "B̃ must be {d}x{}, got {}x{}",
            u.ncols(),
            btilde.nrows(),
            btilde.ncols()
        )));
    }
    fit(traj, p, Some((btilde, u)), opts)
}

fn fit(
    traj: &Trajectory,
    p: usize,
    known_input: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
    opts: &OlsOptions,
) -> Result<OlsEstimate> {
    if p < 1 {
        return Err(Error::domain("truncation length p must be >= 1"));
    }
    let horizon = traj.horizon();
    if horizon < 2 {
        return Err(Error::domain(format!(
            "need at least 2 transitions to fit, trajectory has {horizon}"
        )));
    }
    let n = traj.n();
    let d = n * p;
    let start = match opts.padding {
        Padding::Zero => 0,
        Padding::Discard => p - 1,
    };
    if start >= horizon {
        return Err(Error::domain(format!(
            "discarding {start} warm-up transitions leaves nothing of {horizon}"
        )));
    }
    let rows = horizon - start;
    if rows < d {
        log::warn!(
            "only {rows} regression rows for {d} unknown columns; solution will be minimum-norm"
        );
    }
    let q = if opts.structured { n } else { d };

    let states = traj.states();
    let mut x = DMatrix::zeros(rows, d);
    let mut y = DMatrix::zeros(rows, q);
    for (r, k) in (start..horizon).enumerate() {
        let reg = augmented_state(states, k, p);
        let tgt = augmented_state(states, k + 1, p);
        for c in 0..d {
            x[(r, c)] = reg[c];
        }
        for c in 0..q {
            y[(r, c)] = tgt[c];
        }
        if let Some((bt, u)) = known_input {
            let bu = bt * u.row(k).transpose();
            for c in 0..q {
                y[(r, c)] -= bu[c];
            }
        }
    }

    let svd = x.clone().svd(true, true);
    let (Some(uu), Some(vt)) = (&svd.u, &svd.v_t) else {
        return Err(Error::Numerical(
            "SVD did not return singular vectors".into(),
        ));
    };
    let s = &svd.singular_values;
    let s_max = s.iter().copied().fold(0.0, f64::max);
    let tol = f64::EPSILON * rows.max(d) as f64 * s_max;
    let rank = s.iter().filter(|&&v| v > tol).count();
    let min_sv = if rows < d {
        0.0
    } else {
        s.iter().copied().fold(f64::INFINITY, f64::min)
    };

    // Θ = V S⁺ Uᵀ Y, keeping only singular values above the rank threshold
    let mut uty = uu.transpose() * &y;
    for (i, mut row) in uty.row_iter_mut().enumerate() {
        if s[i] > tol {
            row /= s[i];
        } else {
            row.fill(0.0);
        }
    }
    let theta = vt.transpose() * uty;
    let residual = &y - &x * &theta;
    let residual_rss = residual.norm_squared();

    let atilde_hat = if opts.structured {
        let mut full = DMatrix::zeros(d, d);
        full.view_mut((0, 0), (n, d)).copy_from(&theta.transpose());
        for blk in 1..p {
            full.view_mut((blk * n, (blk - 1) * n), (n, n))
                .fill_with_identity();
        }
        full
    } else {
        theta.transpose()
    };

    let mode = if opts.structured {
        EstimateMode::Structured
    } else if known_input.is_some() {
        EstimateMode::WithInputs
    } else {
        EstimateMode::Autonomous
    };

    Ok(OlsEstimate {
        atilde_hat,
        n,
        p,
        mode,
        residual_rss,
        regressor_min_singular_value: min_sv,
        rank,
        degenerate: rank < d,
        k_used: rows,
    })
}

fn check_dims(estimate: &OlsEstimate, truth: &AugmentedSystem) -> Result<()> {
    if estimate.atilde_hat.shape() != truth.atilde().shape() || estimate.n != truth.n() {
        return Err(Error::domain(format!(
            "estimate is {:?} with block {}, truth is {:?} with block {}",
            estimate.atilde_hat.shape(),
            estimate.n,
            truth.atilde().shape(),
            truth.n()
        )));
    }
    Ok(())
}

/// `‖Â - Ã‖_op`.
pub fn operator_norm_error(estimate: &OlsEstimate, truth: &AugmentedSystem) -> Result<f64> {
    check_dims(estimate, truth)?;
    Ok(operator_norm(&(&estimate.atilde_hat - truth.atilde())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubmatrixReport {
    pub full: f64,
    /// `‖Â_j - A_j‖_op` for each block of the top row.
    pub blocks: Vec<f64>,
}

impl SubmatrixReport {
    pub fn max_block(&self) -> f64 {
        self.blocks.iter().copied().fold(0.0, f64::max)
    }
}

/// Per-lag errors of the top block row; each is bounded by the full-matrix
/// error because every block is a submatrix of `Â - Ã`.
pub fn submatrix_error_report(
    estimate: &OlsEstimate,
    truth: &AugmentedSystem,
) -> Result<SubmatrixReport> {
    check_dims(estimate, truth)?;
    let diff = &estimate.atilde_hat - truth.atilde();
    let full = operator_norm(&diff);
    let n = truth.n();
    let blocks: Vec<f64> = (0..truth.p())
        .map(|j| operator_norm(&diff.view((0, j * n), (n, n)).into_owned()))
        .collect();
    // both norms carry the power-iteration tolerance
    let slack = 4.0 * crate::linalg::OPNORM_TOL * full + f64::MIN_POSITIVE;
    if let Some((j, &b)) = blocks.iter().enumerate().find(|(_, &b)| b > full + slack) {
        return Err(Error::Numerical(format!(
            "block {j} error {b} exceeds full-matrix error {full}"
        )));
    }
    Ok(SubmatrixReport { full, blocks })
}
