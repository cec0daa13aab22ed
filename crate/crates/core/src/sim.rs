//! Trajectory generation from the exact infinite-memory recursion and from
//! its `p`-augmented LTI approximation.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::frac::{lag_matrices, A0Convention, AugmentedSystem, FracSystem};
use crate::rng::SeedStream;

/// Which model produced a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Exact,
    Augmented(usize),
    /// Measured or otherwise externally supplied data.
    Observed,
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::Exact => f.write_str("exact"),
            Generator::Augmented(p) => write!(f, "augmented:{p}"),
            Generator::Observed => f.write_str("observed"),
        }
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Generator::Exact),
            "observed" => Ok(Generator::Observed),
            _ => s
                .strip_prefix("augmented:")
                .and_then(|p| p.parse().ok())
                .map(Generator::Augmented)
                .ok_or_else(|| Error::data(format!("unknown generator tag {s:?}"))),
        }
    }
}

impl Serialize for Generator {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Generator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Provenance of a trajectory; unknown keys in a sidecar are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub seed: Option<u64>,
    #[serde(default)]
    pub stream: u64,
    pub generator: Generator,
    pub sigma: Option<f64>,
    #[serde(default)]
    pub sigma_u: Option<f64>,
}

/// States `x[0..=K]` with optional inputs `u[0..K]` and realized noise `w[0..K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: DMatrix<f64>,
    inputs: Option<DMatrix<f64>>,
    noises: Option<DMatrix<f64>>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    /// Wraps observed data; `states` holds one time step per row.
    pub fn observed(states: DMatrix<f64>, inputs: Option<DMatrix<f64>>) -> Result<Self> {
        if states.nrows() == 0 || states.ncols() == 0 {
            return Err(Error::data("trajectory has no samples"));
        }
        if let Some(u) = &inputs {
            if u.nrows() + 1 != states.nrows() && u.nrows() != states.nrows() {
                return Err(Error::data(format!(
                    "{} input rows do not match {} state rows",
                    u.nrows(),
                    states.nrows()
                )));
            }
        }
        // u[K] (if recorded) never drives a stored transition
        let inputs = inputs.map(|u| {
            let k = states.nrows() - 1;
            u.rows(0, k).into_owned()
        });
        Ok(Trajectory {
            states,
            inputs,
            noises: None,
            meta: TrajectoryMeta {
                seed: None,
                stream: 0,
                generator: Generator::Observed,
                sigma: None,
                sigma_u: None,
            },
        })
    }

    pub fn n(&self) -> usize {
        self.states.ncols()
    }

    /// Number of recorded transitions `K`.
    pub fn horizon(&self) -> usize {
        self.states.nrows() - 1
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn state(&self, k: usize) -> DVector<f64> {
        self.states.row(k).transpose()
    }

    pub fn inputs(&self) -> Option<&DMatrix<f64>> {
        self.inputs.as_ref()
    }

    pub fn noises(&self) -> Option<&DMatrix<f64>> {
        self.noises.as_ref()
    }

    pub fn with_sigma_u(mut self, sigma_u: f64) -> Self {
        self.meta.sigma_u = Some(sigma_u);
        self
    }

    pub fn with_inputs(mut self, inputs: DMatrix<f64>) -> Result<Self> {
        if inputs.nrows() != self.horizon() {
            return Err(Error::data("inputs must have one row per transition"));
        }
        self.inputs = Some(inputs);
        Ok(self)
    }
}

/// `horizon x m` i.i.d. `N(0, σ_u²)` excitation drawn from the seed's input stream.
pub fn gaussian_inputs(
    m: usize,
    horizon: usize,
    sigma_u: f64,
    seed: impl Into<SeedStream>,
) -> Result<DMatrix<f64>> {
    if !(sigma_u >= 0.0 && sigma_u.is_finite()) {
        return Err(Error::domain(format!(
            "sigma_u must be finite and >= 0, got {sigma_u}"
        )));
    }
    if sigma_u == 0.0 {
        return Ok(DMatrix::zeros(horizon, m));
    }
    Ok(seed.into().inputs().matrix(horizon, m, sigma_u))
}

fn draw_noise(seed: SeedStream, horizon: usize, n: usize, sigma: f64) -> DMatrix<f64> {
    if sigma == 0.0 {
        DMatrix::zeros(horizon, n)
    } else {
        seed.noise().matrix(horizon, n, sigma)
    }
}

fn check_common(
    n: usize,
    x0: &DVector<f64>,
    horizon: usize,
    b: Option<&DMatrix<f64>>,
    inputs: Option<&DMatrix<f64>>,
) -> Result<()> {
    if horizon < 1 {
        return Err(Error::domain("horizon K must be >= 1"));
    }
    if x0.len() != n {
        return Err(Error::domain(format!(
            "x0 has length {}, expected {n}",
            x0.len()
        )));
    }
    match (b, inputs) {
        (Some(_), None) => Err(Error::config(
            "system has an input matrix but no inputs were supplied",
        )),
        (None, Some(_)) => Err(Error::config(
            "inputs supplied but the system has no input matrix",
        )),
        (Some(b), Some(u)) if u.nrows() != horizon || u.ncols() != b.ncols() => {
            Err(Error::domain(format!(
                "inputs must be {horizon}x{}, got {}x{}",
                b.ncols(),
                u.nrows(),
                u.ncols()
            )))
        }
        _ => Ok(()),
    }
}

// Shared by both simulators so identical terms are summed in identical order.
#[inline]
fn accumulate(acc: &mut [f64], m: &DMatrix<f64>, x: &[f64]) {
    for (i, a) in acc.iter_mut().enumerate() {
        let mut s = *a;
        for (l, xl) in x.iter().enumerate() {
            s += m[(i, l)] * xl;
        }
        *a = s;
    }
}

fn row(m: &DMatrix<f64>, k: usize) -> Vec<f64> {
    m.row(k).iter().copied().collect()
}

/// Simulates `x[k+1] = Σ_{j=0}^{k} A_j x[k-j] + B u[k] + w[k]` over the full history.
pub fn simulate_exact(
    system: &FracSystem,
    x0: &DVector<f64>,
    horizon: usize,
    seed: impl Into<SeedStream>,
    inputs: Option<&DMatrix<f64>>,
) -> Result<Trajectory> {
    simulate_exact_with(system, x0, horizon, seed, inputs, A0Convention::PlusAlpha)
}

pub fn simulate_exact_with(
    system: &FracSystem,
    x0: &DVector<f64>,
    horizon: usize,
    seed: impl Into<SeedStream>,
    inputs: Option<&DMatrix<f64>>,
    convention: A0Convention,
) -> Result<Trajectory> {
    let seed = seed.into();
    let n = system.n();
    check_common(n, x0, horizon, system.b(), inputs)?;
    let blocks = lag_matrices(system, horizon, convention);
    let noises = draw_noise(seed, horizon, n, system.sigma());

    let mut states: Vec<Vec<f64>> = Vec::with_capacity(horizon + 1);
    states.push(x0.iter().copied().collect());
    for k in 0..horizon {
        let mut acc = vec![0.0; n];
        for (j, aj) in blocks.iter().enumerate().take(k + 1) {
            accumulate(&mut acc, aj, &states[k - j]);
        }
        if let (Some(b), Some(u)) = (system.b(), inputs) {
            accumulate(&mut acc, b, &row(u, k));
        }
        for (a, w) in acc.iter_mut().zip(noises.row(k).iter()) {
            *a += w;
        }
        states.push(acc);
    }

    Ok(Trajectory {
        states: DMatrix::from_fn(horizon + 1, n, |k, i| states[k][i]),
        inputs: inputs.cloned(),
        noises: Some(noises),
        meta: TrajectoryMeta {
            seed: Some(seed.seed),
            stream: seed.index,
            generator: Generator::Exact,
            sigma: Some(system.sigma()),
            sigma_u: None,
        },
    })
}

/// Propagates `x̃[k+1] = Ã x̃[k] + B̃ u[k] + B̃ʷ w[k]` from `x̃[0] = [x0; 0; …; 0]`
/// and records the leading block of each augmented state.
pub fn simulate_augmented(
    aug: &AugmentedSystem,
    sigma: f64,
    x0: &DVector<f64>,
    horizon: usize,
    seed: impl Into<SeedStream>,
    inputs: Option<&DMatrix<f64>>,
) -> Result<Trajectory> {
    let seed = seed.into();
    let n = aug.n();
    let p = aug.p();
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::domain(format!(
            "sigma must be finite and >= 0, got {sigma}"
        )));
    }
    let b_top = aug.btilde().map(|b| b.rows(0, n).into_owned());
    check_common(n, x0, horizon, b_top.as_ref(), inputs)?;
    let noises = draw_noise(seed, horizon, n, sigma);

    let blocks: Vec<Vec<DMatrix<f64>>> = (0..p)
        .map(|r| {
            (0..p)
                .map(|c| aug.atilde().view((r * n, c * n), (n, n)).into_owned())
                .collect()
        })
        .collect();

    let mut xt: Vec<Vec<f64>> = vec![vec![0.0; n]; p];
    xt[0] = x0.iter().copied().collect();
    let mut states = DMatrix::zeros(horizon + 1, n);
    states.row_mut(0).copy_from(&x0.transpose());
    for k in 0..horizon {
        let mut next: Vec<Vec<f64>> = Vec::with_capacity(p);
        for (r, block_row) in blocks.iter().enumerate() {
            let mut acc = vec![0.0; n];
            for (c, blk) in block_row.iter().enumerate() {
                accumulate(&mut acc, blk, &xt[c]);
            }
            if r == 0 {
                if let (Some(b), Some(u)) = (&b_top, inputs) {
                    accumulate(&mut acc, b, &row(u, k));
                }
                for (a, w) in acc.iter_mut().zip(noises.row(k).iter()) {
                    *a += w;
                }
            }
            next.push(acc);
        }
        xt = next;
        for i in 0..n {
            states[(k + 1, i)] = xt[0][i];
        }
    }

    Ok(Trajectory {
        states,
        inputs: inputs.cloned(),
        noises: Some(noises),
        meta: TrajectoryMeta {
            seed: Some(seed.seed),
            stream: seed.index,
            generator: Generator::Augmented(p),
            sigma: Some(sigma),
            sigma_u: None,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationRow {
    pub p: usize,
    /// `max_k ‖x_exact[k] - x_aug[k]‖₂` over the horizon.
    pub max_error: f64,
}

/// Worst-case state deviation of each `p`-augmented approximation from the
/// exact recursion, under one shared noise realization.
pub fn truncation_error_sweep(
    system: &FracSystem,
    x0: &DVector<f64>,
    horizon: usize,
    p_list: &[usize],
    seed: impl Into<SeedStream>,
) -> Result<Vec<TruncationRow>> {
    if p_list.is_empty() {
        return Err(Error::domain("p_list must not be empty"));
    }
    if let Some(&bad) = p_list.iter().find(|&&p| p < 1) {
        return Err(Error::domain(format!("truncation length {bad} < 1")));
    }
    let seed = seed.into();
    let sys = system.clone().without_input();
    let exact = simulate_exact(&sys, x0, horizon, seed, None)?;
    p_list
        .iter()
        .map(|&p| {
            let aug = crate::frac::augment(&sys, p)?;
            let approx = simulate_augmented(&aug, sys.sigma(), x0, horizon, seed, None)?;
            let max_error = (0..=horizon)
                .map(|k| (exact.states.row(k) - approx.states.row(k)).norm())
                .fold(0.0, f64::max);
            Ok(TruncationRow { p, max_error })
        })
        .collect()
}
