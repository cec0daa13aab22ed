//! Sample-complexity certificates for OLS identification of the augmented
//! system, and Monte-Carlo campaigns that compare them with realized
//! estimation error.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frac::{augment, FracSystem};
use crate::ident::{ols_fit_with, ols_fit_with_inputs_opts, operator_norm_error, OlsOptions};
use crate::linalg::{lambda_min, logdet_spd, symmetrize};
use crate::rng::SeedStream;
use crate::sim::{gaussian_inputs, simulate_augmented, simulate_exact};

/// Small-ball probability constant of the excitation argument behind the bound.
pub const SMALL_BALL_P: f64 = 3.0 / 20.0;
/// Tolerance on `ρ(Ã) ≤ 1` when certifying marginal stability.
pub const MARGINAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramianKind {
    Noise,
    Input,
}

/// Finite-time Gramians `W_1 … W_{t_max}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramianSeries {
    pub kind: GramianKind,
    values: Vec<DMatrix<f64>>,
}

impl GramianSeries {
    pub fn t_max(&self) -> usize {
        self.values.len()
    }

    /// `W_t` for `1 <= t <= t_max`.
    pub fn get(&self, t: usize) -> Option<&DMatrix<f64>> {
        t.checked_sub(1).and_then(|i| self.values.get(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = &DMatrix<f64>> {
        self.values.iter()
    }
}

fn accumulate_series(atilde: &DMatrix<f64>, seed: DMatrix<f64>, t_max: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(t_max);
    let mut m = seed;
    let mut w = &m * m.transpose();
    out.push(w.clone());
    for _ in 1..t_max {
        m = atilde * m;
        w += &m * m.transpose();
        out.push(w.clone());
    }
    out
}

fn check_square(atilde: &DMatrix<f64>) -> Result<()> {
    if atilde.is_square() && !atilde.is_empty() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "transition matrix must be square and non-empty, got {}x{}",
            atilde.nrows(),
            atilde.ncols()
        )))
    }
}

/// `W_t = Σ_{j=0}^{t-1} Ãʲ (Ãʲ)ᵀ` for every `t <= t_max`.
pub fn gramian_series(atilde: &DMatrix<f64>, t_max: usize) -> Result<GramianSeries> {
    check_square(atilde)?;
    if t_max < 1 {
        return Err(Error::domain("Gramian horizon must be >= 1"));
    }
    let d = atilde.nrows();
    Ok(GramianSeries {
        kind: GramianKind::Noise,
        values: accumulate_series(atilde, DMatrix::identity(d, d), t_max),
    })
}

/// `W_tᴮ = Σ_{j=0}^{t-1} Ãʲ B̃ B̃ᵀ (Ãʲ)ᵀ` for every `t <= t_max`.
pub fn gramian_input_series(
    atilde: &DMatrix<f64>,
    btilde: &DMatrix<f64>,
    t_max: usize,
) -> Result<GramianSeries> {
    check_square(atilde)?;
    if btilde.nrows() != atilde.nrows() {
        return Err(Error::domain(format!(
            "B̃ has {} rows, expected {}",
            btilde.nrows(),
            atilde.nrows()
        )));
    }
    if t_max < 1 {
        return Err(Error::domain("Gramian horizon must be >= 1"));
    }
    Ok(GramianSeries {
        kind: GramianKind::Input,
        values: accumulate_series(atilde, btilde.clone(), t_max),
    })
}

pub fn gramian(atilde: &DMatrix<f64>, t: usize) -> Result<DMatrix<f64>> {
    let mut s = gramian_series(atilde, t)?;
    Ok(s.values.pop().expect("t >= 1"))
}

pub fn gramian_input(
    atilde: &DMatrix<f64>,
    btilde: &DMatrix<f64>,
    t: usize,
) -> Result<DMatrix<f64>> {
    let mut s = gramian_input_series(atilde, btilde, t)?;
    Ok(s.values.pop().expect("t >= 1"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport {
    pub spectral_radius: f64,
    pub marginally_stable: bool,
}

pub fn spectral_radius(atilde: &DMatrix<f64>) -> Result<StabilityReport> {
    let rho = crate::linalg::spectral_radius(atilde)?;
    Ok(StabilityReport {
        spectral_radius: rho,
        marginally_stable: rho <= 1.0 + MARGINAL_TOL,
    })
}

/// Which Gramian plays the small-ball role in the bound.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramianIndex {
    /// `W_k`.
    #[default]
    K,
    /// `W_{⌊k/2⌋}`.
    HalfK,
}

impl GramianIndex {
    fn apply(self, k: usize) -> usize {
        match self {
            GramianIndex::K => k,
            GramianIndex::HalfK => k / 2,
        }
    }
}

/// Constants of the high-probability bound.
///
/// Defaults: `C = 90 / p_sb = 600` (times σ when `sigma_in_C`) and
/// `c = 10 / p_sb² ≈ 444.4`, with `p_sb = 3/20`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundConstants {
    #[serde(rename = "C_const")]
    pub big_c: f64,
    #[serde(rename = "c_const")]
    pub small_c: f64,
    /// Multiply `C` by σ in the autonomous bound.
    #[serde(rename = "sigma_in_C")]
    pub sigma_in_c: bool,
    pub gramian_index: GramianIndex,
}

impl Default for BoundConstants {
    fn default() -> Self {
        BoundConstants {
            big_c: 90.0 / SMALL_BALL_P,
            small_c: 10.0 / (SMALL_BALL_P * SMALL_BALL_P),
            sigma_in_c: true,
            gramian_index: GramianIndex::K,
        }
    }
}

impl BoundConstants {
    fn validate(&self) -> Result<()> {
        if !(self.big_c > 0.0 && self.small_c > 0.0)
            || !self.big_c.is_finite()
            || !self.small_c.is_finite()
        {
            return Err(Error::domain("bound constants must be positive and finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundVariant {
    Autonomous,
    WithInputs,
}

/// An evaluated bound on `‖Â[K] - Ã‖_op` holding with probability `1 - δ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCertificate {
    pub variant: BoundVariant,
    #[serde(rename = "K")]
    pub big_k: usize,
    pub k: usize,
    pub d: usize,
    pub delta: f64,
    /// Prefactor actually applied (`C σ` when σ is folded into `C`).
    #[serde(rename = "C_const")]
    pub big_c: f64,
    #[serde(rename = "c_const")]
    pub small_c: f64,
    pub gramian_index: GramianIndex,
    /// `λ_min` of the small-ball Gramian (the σ/σ_u mixture for inputs).
    #[serde(rename = "lambda_min_Wk")]
    pub lambda_min_wk: f64,
    /// `log det(W_K W_k⁻¹)` of the Gramians entering the bound.
    pub logdet_ratio: f64,
    /// `tr(σ² W_K + σ_u² W_Kᴮ)`; only for the input variant.
    pub trace_wbig: Option<f64>,
    /// The bracketed complexity term shared by the bound and burn-in.
    pub complexity: f64,
    pub bound_value: f64,
    pub burn_in_satisfied: bool,
    /// False when the small-ball Gramian is numerically singular.
    pub valid: bool,
    pub sigma: f64,
    pub sigma_u: Option<f64>,
}

fn check_bound_args(big_k: usize, k: usize, delta: f64, constants: &BoundConstants) -> Result<()> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::domain(format!(
            "delta must lie in (0, 1/2), got {delta}"
        )));
    }
    if k < 1 || k > big_k {
        return Err(Error::domain(format!(
            "need 1 <= k <= K, got k = {k}, K = {big_k}"
        )));
    }
    constants.validate()
}

fn logdet_ratio(w_big: &DMatrix<f64>, w_small: &DMatrix<f64>) -> Option<f64> {
    let r = logdet_spd(w_big)? - logdet_spd(w_small)?;
    // W_K ⪰ W_k; tiny negatives are rounding
    Some(r.max(0.0))
}

fn autonomous_certificate(
    w_big: &DMatrix<f64>,
    w_small: Option<&DMatrix<f64>>,
    big_k: usize,
    k: usize,
    delta: f64,
    sigma: f64,
    constants: &BoundConstants,
) -> BoundCertificate {
    let d = w_big.nrows();
    let big_c = if constants.sigma_in_c {
        constants.big_c * sigma
    } else {
        constants.big_c
    };
    let base = d as f64 * (d as f64 / delta).ln();
    let lmin = w_small.map_or(0.0, lambda_min);
    let ratio = w_small.and_then(|ws| logdet_ratio(w_big, ws));
    let (valid, logdet, complexity, bound) = match ratio {
        Some(ld) if lmin > 0.0 => {
            let cx = base + ld;
            (
                true,
                ld,
                cx,
                big_c / (big_k as f64 * lmin).sqrt() * cx.sqrt(),
            )
        }
        _ => (false, f64::NAN, f64::NAN, f64::INFINITY),
    };
    BoundCertificate {
        variant: BoundVariant::Autonomous,
        big_k,
        k,
        d,
        delta,
        big_c,
        small_c: constants.small_c,
        gramian_index: constants.gramian_index,
        lambda_min_wk: lmin,
        logdet_ratio: logdet,
        trace_wbig: None,
        complexity,
        bound_value: bound,
        burn_in_satisfied: valid && big_k as f64 / k as f64 >= constants.small_c * complexity,
        valid,
        sigma,
        sigma_u: None,
    }
}

/// Evaluates the autonomous bound
/// `C / sqrt(K λ_min(W_k)) · sqrt(d log(d/δ) + log det(W_K W_k⁻¹))`
/// and its burn-in condition `K/k ≥ c (d log(d/δ) + log det(W_K W_k⁻¹))`.
pub fn evaluate_bound(
    atilde: &DMatrix<f64>,
    big_k: usize,
    k: usize,
    delta: f64,
    sigma: f64,
    constants: &BoundConstants,
) -> Result<BoundCertificate> {
    check_bound_args(big_k, k, delta, constants)?;
    let series = gramian_series(atilde, big_k)?;
    Ok(autonomous_from_series(
        &series, big_k, k, delta, sigma, constants,
    ))
}

fn autonomous_from_series(
    series: &GramianSeries,
    big_k: usize,
    k: usize,
    delta: f64,
    sigma: f64,
    constants: &BoundConstants,
) -> BoundCertificate {
    let w_big = series.get(big_k).expect("series covers K");
    let w_small = series.get(constants.gramian_index.apply(k));
    autonomous_certificate(w_big, w_small, big_k, k, delta, sigma, constants)
}

/// Evaluates the input-excited bound
/// `C σ² / sqrt(K λ_min(M_k)) · sqrt(d log(tr(M_K) / (δ λ_min(M_k))))` with
/// `M_t = σ² W_t + σ_u² W_tᴮ`, and its burn-in `K/k ≥ c d log(…)`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_bound_with_inputs(
    atilde: &DMatrix<f64>,
    btilde: &DMatrix<f64>,
    big_k: usize,
    k: usize,
    delta: f64,
    sigma: f64,
    sigma_u: f64,
    constants: &BoundConstants,
) -> Result<BoundCertificate> {
    check_bound_args(big_k, k, delta, constants)?;
    if !(sigma_u >= 0.0 && sigma_u.is_finite()) {
        return Err(Error::domain(format!(
            "sigma_u must be finite and >= 0, got {sigma_u}"
        )));
    }
    let noise = gramian_series(atilde, big_k)?;
    let input = gramian_input_series(atilde, btilde, big_k)?;
    Ok(inputs_from_series(
        &noise, &input, big_k, k, delta, sigma, sigma_u, constants,
    ))
}

#[allow(clippy::too_many_arguments)]
fn inputs_from_series(
    noise: &GramianSeries,
    input: &GramianSeries,
    big_k: usize,
    k: usize,
    delta: f64,
    sigma: f64,
    sigma_u: f64,
    constants: &BoundConstants,
) -> BoundCertificate {
    let s2 = sigma * sigma;
    let u2 = sigma_u * sigma_u;
    let mix = |t: usize| -> Option<DMatrix<f64>> {
        Some(symmetrize(&(noise.get(t)? * s2 + input.get(t)? * u2)))
    };
    let m_big = mix(big_k).expect("series covers K");
    let m_small = mix(constants.gramian_index.apply(k));
    let d = m_big.nrows();
    let lmin = m_small.as_ref().map_or(0.0, lambda_min);
    let trace = m_big.trace();
    let scale = lmin.abs().max(m_big.norm()) * 1e-12;
    let (valid, logdet, complexity, bound) = match &m_small {
        Some(ms) if lmin > scale => {
            let cx = d as f64 * (trace / (delta * lmin)).ln();
            let ld = logdet_ratio(&m_big, ms).unwrap_or(f64::NAN);
            let b = constants.big_c * s2 / (big_k as f64 * lmin).sqrt() * cx.sqrt();
            (true, ld, cx, b)
        }
        _ => (false, f64::NAN, f64::NAN, f64::INFINITY),
    };
    BoundCertificate {
        variant: BoundVariant::WithInputs,
        big_k,
        k,
        d,
        delta,
        big_c: constants.big_c,
        small_c: constants.small_c,
        gramian_index: constants.gramian_index,
        lambda_min_wk: lmin,
        logdet_ratio: logdet,
        trace_wbig: Some(trace),
        complexity,
        bound_value: bound,
        burn_in_satisfied: valid && big_k as f64 / k as f64 >= constants.small_c * complexity,
        valid,
        sigma,
        sigma_u: Some(sigma_u),
    }
}

/// Certificate at the smallest `k ≥ d` whose burn-in holds; when none
/// does, the certificate at `k = min(d, K)` with `burn_in_satisfied = false`.
pub fn tightest_certificate(
    atilde: &DMatrix<f64>,
    btilde: Option<(&DMatrix<f64>, f64)>,
    big_k: usize,
    delta: f64,
    sigma: f64,
    constants: &BoundConstants,
) -> Result<BoundCertificate> {
    check_square(atilde)?;
    let d = atilde.nrows();
    let k_min = d.min(big_k).max(1);
    check_bound_args(big_k, k_min, delta, constants)?;
    let noise = gramian_series(atilde, big_k)?;
    let input = match btilde {
        Some((b, _)) => Some(gramian_input_series(atilde, b, big_k)?),
        None => None,
    };
    let at = |k: usize| match (&input, btilde) {
        (Some(input), Some((_, su))) => {
            inputs_from_series(&noise, input, big_k, k, delta, sigma, su, constants)
        }
        _ => autonomous_from_series(&noise, big_k, k, delta, sigma, constants),
    };
    // the complexity term never drops below d log(d/δ), while K/k only shrinks
    let floor = constants.small_c * d as f64 * (d as f64 / delta).ln();
    for k in k_min..=big_k {
        if (big_k as f64 / k as f64) < floor {
            break;
        }
        let cert = at(k);
        if cert.burn_in_satisfied {
            return Ok(cert);
        }
    }
    Ok(at(k_min))
}

/// Which model generates the campaign's trajectories.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignSimulator {
    /// The `p`-augmented LTI the bound is stated for.
    #[default]
    Augmented,
    /// The full-memory fractional recursion.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub p: usize,
    #[serde(rename = "K_list")]
    pub k_list: Vec<usize>,
    pub trials: usize,
    pub delta: f64,
    pub constants: BoundConstants,
    pub master_seed: u64,
    /// Initial state; all ones when absent.
    pub x0: Option<Vec<f64>>,
    /// Input excitation scale; autonomous campaign when absent.
    pub sigma_u: Option<f64>,
    pub simulator: CampaignSimulator,
    pub ols: OlsOptions,
    /// Worker threads; rayon's default when absent.
    pub threads: Option<usize>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            p: 2,
            k_list: vec![250, 500, 1000, 2000, 4000],
            trials: 100,
            delta: 0.1,
            constants: BoundConstants::default(),
            master_seed: 0,
            x0: None,
            sigma_u: None,
            simulator: CampaignSimulator::Augmented,
            ols: OlsOptions::default(),
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignRow {
    #[serde(rename = "K")]
    pub big_k: usize,
    pub k: usize,
    pub median_err: f64,
    pub p90_err: f64,
    pub bound: f64,
    pub coverage: f64,
    pub burn_in: bool,
    /// Per-trial `‖Â - Ã‖_op`, `None` for trials that failed.
    pub errors: Vec<Option<f64>>,
    pub failures: Vec<TrialFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignTable {
    pub variant: BoundVariant,
    pub stability: StabilityReport,
    pub warnings: Vec<String>,
    pub rows: Vec<CampaignRow>,
}

impl CampaignTable {
    pub const HEADER: [&'static str; 7] = [
        "K",
        "k",
        "median_err",
        "p90_err",
        "bound",
        "coverage",
        "burn_in",
    ];

    /// Writes `K,k,median_err,p90_err,bound,coverage,burn_in`, preceded by
    /// `#` comment lines for warnings and failed trials.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut comments = String::new();
        for w in &self.warnings {
            comments.push_str(&format!("# warning: {w}\n"));
        }
        for row in &self.rows {
            for f in &row.failures {
                comments.push_str(&format!(
                    "# failed: K={} trial={}: {}\n",
                    row.big_k, f.trial, f.message
                ));
            }
        }
        out.write_all(comments.as_bytes())
            .map_err(|e| Error::io("<campaign csv>", e))?;
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.big_k.to_string(),
                    r.k.to_string(),
                    r.median_err.to_string(),
                    r.p90_err.to_string(),
                    r.bound.to_string(),
                    r.coverage.to_string(),
                    r.burn_in.to_string(),
                ]
            })
            .collect();
        crate::io::write_table(out, &Self::HEADER, &rows)
    }

    /// Least-squares slope of `log(median_err)` against `log(K)`.
    pub fn median_slope(&self) -> Option<f64> {
        let (ks, es): (Vec<f64>, Vec<f64>) = self
            .rows
            .iter()
            .map(|r| (r.big_k as f64, r.median_err))
            .unzip();
        loglog_slope(&ks, &es)
    }
}

/// Linear-interpolation quantile (`q ∈ [0, 1]`) of unsorted samples.
pub fn quantile(samples: &[f64], q: f64) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Slope of the least-squares line through `(ln x, ln y)`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|&v| v.is_nan() || v <= 0.0)
    {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Runs `trials` independent simulate-and-fit experiments at every horizon
/// in `k_list` and tabulates error quantiles against the certified bound.
///
/// Trial `t` at horizon index `i` uses seed stream
/// `(master_seed, i · trials + t)`, and results are reduced in trial order,
/// so the table does not depend on the thread count.
pub fn monte_carlo_campaign(system: &FracSystem, config: &CampaignConfig) -> Result<CampaignTable> {
    if config.trials < 1 {
        return Err(Error::domain("trials must be >= 1"));
    }
    if config.k_list.is_empty() {
        return Err(Error::domain("K_list must not be empty"));
    }
    let n = system.n();
    let d = n * config.p;
    if let Some(&bad) = config.k_list.iter().find(|&&k| k < d + 1) {
        return Err(Error::domain(format!(
            "horizon {bad} is below d + 1 = {}",
            d + 1
        )));
    }
    let system = match (system.b(), config.sigma_u) {
        (Some(_), Some(_)) => system.clone(),
        (None, Some(_)) => {
            return Err(Error::config(
                "sigma_u given but the system has no input matrix",
            ))
        }
        _ => system.clone().without_input(),
    };
    let aug = augment(&system, config.p)?;
    let x0 = match &config.x0 {
        Some(v) if v.len() != n => {
            return Err(Error::domain(format!(
                "x0 has length {}, expected {n}",
                v.len()
            )))
        }
        Some(v) => DVector::from_row_slice(v),
        None => DVector::from_element(n, 1.0),
    };

    let stability = spectral_radius(aug.atilde())?;
    let mut warnings = Vec::new();
    if !stability.marginally_stable {
        warnings.push(format!(
            "spectral radius {} exceeds 1; the marginal-stability hypothesis of the bound is violated",
            stability.spectral_radius
        ));
    }
    let variant = if config.sigma_u.is_some() {
        BoundVariant::WithInputs
    } else {
        BoundVariant::Autonomous
    };

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = config.threads {
        pool = pool.num_threads(t.max(1));
    }
    let pool = pool
        .build()
        .map_err(|e| Error::config(format!("cannot build thread pool: {e}")))?;

    let sigma = system.sigma();
    let run_trial = |big_k: usize, index: u64| -> Result<f64> {
        let seed = SeedStream::new(config.master_seed, index);
        let inputs = match (system.b(), config.sigma_u) {
            (Some(b), Some(su)) => Some(gaussian_inputs(b.ncols(), big_k, su, seed)?),
            _ => None,
        };
        let traj = match config.simulator {
            CampaignSimulator::Augmented => {
                simulate_augmented(&aug, sigma, &x0, big_k, seed, inputs.as_ref())?
            }
            CampaignSimulator::Exact => simulate_exact(&system, &x0, big_k, seed, inputs.as_ref())?,
        };
        let est = match aug.btilde() {
            Some(bt) if inputs.is_some() => {
                ols_fit_with_inputs_opts(&traj, config.p, bt, &config.ols)?
            }
            _ => ols_fit_with(&traj, config.p, &config.ols)?,
        };
        operator_norm_error(&est, &aug)
    };

    let mut rows = Vec::with_capacity(config.k_list.len());
    for (ki, &big_k) in config.k_list.iter().enumerate() {
        let base = (ki * config.trials) as u64;
        let results: Vec<Result<f64>> = pool.install(|| {
            (0..config.trials)
                .into_par_iter()
                .map(|t| run_trial(big_k, base + t as u64))
                .collect()
        });
        let mut errors = Vec::with_capacity(config.trials);
        let mut failures = Vec::new();
        for (trial, r) in results.into_iter().enumerate() {
            match r {
                Ok(e) => errors.push(Some(e)),
                Err(e) => {
                    errors.push(None);
                    failures.push(TrialFailure {
                        trial,
                        message: e.to_string(),
                    });
                }
            }
        }
        let ok: Vec<f64> = errors.iter().flatten().copied().collect();
        let cert = tightest_certificate(
            aug.atilde(),
            aug.btilde().zip(config.sigma_u),
            big_k,
            config.delta,
            sigma,
            &config.constants,
        )?;
        let covered = ok.iter().filter(|&&e| e <= cert.bound_value).count();
        rows.push(CampaignRow {
            big_k,
            k: cert.k,
            median_err: quantile(&ok, 0.5),
            p90_err: quantile(&ok, 0.9),
            bound: cert.bound_value,
            coverage: if ok.is_empty() {
                f64::NAN
            } else {
                covered as f64 / ok.len() as f64
            },
            burn_in: cert.burn_in_satisfied,
            errors,
            failures,
        });
    }

    Ok(CampaignTable {
        variant,
        stability,
        warnings,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn scalar_atilde() -> DMatrix<f64> {
        dmatrix![0.7, 0.125; 1.0, 0.0]
    }

    #[test]
    fn gramian_hand_values() {
        let a = scalar_atilde();
        assert_eq!(gramian(&a, 1).unwrap(), DMatrix::identity(2, 2));
        let w2 = gramian(&a, 2).unwrap();
        assert!((w2 - dmatrix![1.505625, 0.7; 0.7, 2.0]).abs().max() < 1e-12);
        assert_eq!(
            gramian(&DMatrix::zeros(3, 3), 9).unwrap(),
            DMatrix::identity(3, 3)
        );
        assert!(gramian(&a, 0).is_err());
        assert!(gramian(&DMatrix::zeros(2, 3), 2).is_err());
    }

    #[test]
    fn input_gramian_hand_values() {
        let a = scalar_atilde();
        let b = dmatrix![1.0; 0.0];
        assert_eq!(gramian_input(&a, &b, 1).unwrap(), &b * b.transpose());
        let w2 = gramian_input(&a, &b, 2).unwrap();
        assert!((w2 - dmatrix![1.49, 0.7; 0.7, 1.0]).abs().max() < 1e-12);
        let e1 = dmatrix![1.0; 0.0; 0.0];
        let w3 = gramian_input(&DMatrix::identity(3, 3), &e1, 3).unwrap();
        assert_eq!(w3, &e1 * e1.transpose() * 3.0);
        assert!(gramian_input(&a, &dmatrix![1.0; 0.0; 0.0], 2).is_err());
    }

    #[test]
    fn gramian_monotone() {
        let s = gramian_series(&scalar_atilde(), 50).unwrap();
        let mut prev: Option<&DMatrix<f64>> = None;
        for w in s.iter() {
            let sym = (w - w.transpose()).abs().max();
            assert!(sym <= 1e-12 * w.norm());
            if let Some(p) = prev {
                assert!(lambda_min(&(w - p)) >= -1e-10 * w.norm());
                assert!(lambda_min(w) >= lambda_min(p));
                assert!(w.trace() >= p.trace());
            }
            prev = Some(w);
        }
    }

    #[test]
    fn spectral_radius_verdicts() {
        let r = spectral_radius(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(r.spectral_radius, 1.0);
        assert!(r.marginally_stable);
        let r = spectral_radius(&scalar_atilde()).unwrap();
        assert!((r.spectral_radius - 0.847_493_718_553_31).abs() < 1e-8);
        assert!(r.marginally_stable);
        assert!(!spectral_radius(&dmatrix![1.1]).unwrap().marginally_stable);
    }

    #[test]
    fn default_constants() {
        let c = BoundConstants::default();
        assert!((c.big_c - 600.0).abs() < 1e-9);
        assert!((c.small_c - 444.444_444_444).abs() < 1e-6);
        let json = serde_json::to_value(c).unwrap();
        assert!(json.get("C_const").is_some() && json.get("c_const").is_some());
        let back: BoundConstants = serde_json::from_value(json).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<BoundConstants>(r#"{"C": 1}"#).is_err());
    }

    #[test]
    fn nilpotent_collapse() {
        let d = 2;
        let delta = 0.1;
        let c = BoundConstants::default();
        let big_k = d * (c.small_c * (d as f64 / delta).ln()).ceil() as usize;
        let cert = evaluate_bound(&DMatrix::zeros(d, d), big_k, big_k, delta, 1.0, &c).unwrap();
        assert_eq!(cert.logdet_ratio, 0.0);
        assert_eq!(cert.lambda_min_wk, 1.0);
        let expected = 600.0 * (d as f64 * (d as f64 / delta).ln()).sqrt() / (big_k as f64).sqrt();
        assert!((cert.bound_value - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn k_equals_big_k_has_zero_logdet() {
        let cert = evaluate_bound(
            &scalar_atilde(),
            300,
            300,
            0.05,
            0.5,
            &BoundConstants::default(),
        )
        .unwrap();
        assert_eq!(cert.logdet_ratio, 0.0);
    }

    #[test]
    fn argument_checks() {
        let a = scalar_atilde();
        let c = BoundConstants::default();
        assert!(matches!(
            evaluate_bound(&a, 100, 10, 0.5, 1.0, &c),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            evaluate_bound(&a, 100, 10, 0.0, 1.0, &c),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            evaluate_bound(&a, 100, 0, 0.1, 1.0, &c),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            evaluate_bound(&a, 100, 101, 0.1, 1.0, &c),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn half_k_index_can_be_invalid() {
        let c = BoundConstants {
            gramian_index: GramianIndex::HalfK,
            ..Default::default()
        };
        let cert = evaluate_bound(&scalar_atilde(), 100, 1, 0.1, 1.0, &c).unwrap();
        assert!(!cert.valid);
        assert!(!cert.burn_in_satisfied);
        let cert = evaluate_bound(&scalar_atilde(), 100, 10, 0.1, 1.0, &c).unwrap();
        assert!(cert.valid);
    }

    #[test]
    fn inputs_variant_collapses_without_excitation() {
        let a = scalar_atilde();
        let b = dmatrix![1.0; 0.0];
        let c = BoundConstants::default();
        let z = evaluate_bound_with_inputs(&a, &b, 500, 20, 0.1, 0.7, 0.0, &c).unwrap();
        let zb = evaluate_bound_with_inputs(&a, &DMatrix::zeros(2, 1), 500, 20, 0.1, 0.7, 3.0, &c)
            .unwrap();
        assert_eq!(z.bound_value, zb.bound_value);
        assert_eq!(z.lambda_min_wk, zb.lambda_min_wk);
        // σ² λ_min(W_k) structure
        let wk = gramian(&a, 20).unwrap();
        assert!((z.lambda_min_wk - 0.49 * lambda_min(&wk)).abs() < 1e-12);
        // singular mixture
        let s = evaluate_bound_with_inputs(&a, &b, 500, 1, 0.1, 0.0, 1.0, &c).unwrap();
        assert!(!s.valid);
    }

    #[test]
    fn quantiles_and_slope() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!((quantile(&v, 0.9) - 3.7).abs() < 1e-12);
        let ks = [100.0, 400.0, 1600.0];
        let es: Vec<f64> = ks.iter().map(|k: &f64| 2.0 / k.sqrt()).collect();
        assert!((loglog_slope(&ks, &es).unwrap() + 0.5).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_none());
    }
}
