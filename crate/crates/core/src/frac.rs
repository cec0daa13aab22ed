//! Fractional-calculus primitives: Grünwald–Letnikov weights, the lag
//! matrices `A_j` of the convolutional state recursion, and the
//! block-companion `p`-augmented LTI realization.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{matrix_from_rows, matrix_to_rows};

/// Largest accepted fractional order.
pub const MAX_ORDER: f64 = 2.0;

/// Ground-truth discrete-time fractional-order system
///
/// `Δ^α x[k+1] = A x[k] + B u[k] + w[k]`, with `w[k] ~ N(0, σ² I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FracSystem {
    alpha: Vec<f64>,
    a: DMatrix<f64>,
    b: Option<DMatrix<f64>>,
    sigma: f64,
}

impl FracSystem {
    pub fn new(
        alpha: Vec<f64>,
        a: DMatrix<f64>,
        b: Option<DMatrix<f64>>,
        sigma: f64,
    ) -> Result<Self> {
        let n = alpha.len();
        if n == 0 {
            return Err(Error::domain("system must have at least one state"));
        }
        for (i, &ai) in alpha.iter().enumerate() {
            check_order(ai).map_err(|e| Error::domain(format!("alpha[{i}]: {e}")))?;
        }
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::domain(format!(
                "A must be {n}x{n}, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if let Some(b) = &b {
            if b.nrows() != n || b.ncols() == 0 {
                return Err(Error::domain(format!(
                    "B must have {n} rows and at least one column, got {}x{}",
                    b.nrows(),
                    b.ncols()
                )));
            }
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::domain(format!(
                "sigma must be finite and >= 0, got {sigma}"
            )));
        }
        if a.iter()
            .chain(b.iter().flat_map(|b| b.iter()))
            .any(|v| !v.is_finite())
        {
            return Err(Error::domain("system matrices must be finite"));
        }
        Ok(FracSystem { alpha, a, b, sigma })
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> Option<&DMatrix<f64>> {
        self.b.as_ref()
    }

    /// Number of input channels, zero for an autonomous system.
    pub fn m(&self) -> usize {
        self.b.as_ref().map_or(0, |b| b.ncols())
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::domain(format!(
                "sigma must be finite and >= 0, got {sigma}"
            )));
        }
        self.sigma = sigma;
        Ok(self)
    }

    /// Drops the input matrix, leaving the autonomous part of the system.
    pub fn without_input(mut self) -> Self {
        self.b = None;
        self
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: SystemFile = serde_json::from_str(s)?;
        file.try_into()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&SystemFile::from(self)).expect("system serializes")
    }
}

/// On-disk form of [`FracSystem`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub n: usize,
    pub alpha: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B", default)]
    pub b: Option<Vec<Vec<f64>>>,
    pub sigma: f64,
}

impl TryFrom<SystemFile> for FracSystem {
    type Error = Error;

    fn try_from(file: SystemFile) -> Result<Self> {
        if file.alpha.len() != file.n {
            return Err(Error::domain(format!(
                "alpha has {} entries but n = {}",
                file.alpha.len(),
                file.n
            )));
        }
        let a = matrix_from_rows(&file.a).map_err(|e| Error::domain(format!("A: {e}")))?;
        let b = file
            .b
            .as_deref()
            .map(matrix_from_rows)
            .transpose()
            .map_err(|e| Error::domain(format!("B: {e}")))?;
        FracSystem::new(file.alpha, a, b, file.sigma)
    }
}

impl From<&FracSystem> for SystemFile {
    fn from(sys: &FracSystem) -> Self {
        SystemFile {
            n: sys.n(),
            alpha: sys.alpha.clone(),
            a: matrix_to_rows(&sys.a),
            b: sys.b.as_ref().map(matrix_to_rows),
            sigma: sys.sigma,
        }
    }
}

fn check_order(alpha: f64) -> Result<()> {
    if alpha.is_nan() || alpha <= 0.0 || !alpha.is_finite() {
        return Err(Error::domain(format!(
            "fractional order must be > 0, got {alpha}"
        )));
    }
    if alpha > MAX_ORDER {
        return Err(Error::domain(format!(
            "fractional order {alpha} exceeds the supported maximum {MAX_ORDER}"
        )));
    }
    Ok(())
}

/// Grünwald–Letnikov weights `ψ(α, 0..=J)` for a single order.
#[derive(Debug, Clone, PartialEq)]
pub struct GlWeights {
    alpha: f64,
    values: Vec<f64>,
}

impl GlWeights {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn max_lag(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, j: usize) -> Option<f64> {
        self.values.get(j).copied()
    }
}

/// Computes `ψ(α, j) = (-1)^j binom(α, j)` for `j = 0..=max_lag`.
///
/// Uses the product recurrence `ψ(α, j) = ψ(α, j-1) (j-1-α) / j`, which is
/// equal to the Gamma-ratio form but has no poles at integer `α` and no
/// overflow for long memories.
pub fn gl_weights(alpha: f64, max_lag: usize) -> Result<GlWeights> {
    check_order(alpha)?;
    let mut values = Vec::with_capacity(max_lag + 1);
    values.push(1.0);
    let mut prev = 1.0;
    for j in 1..=max_lag {
        let jf = j as f64;
        prev = prev * (jf - 1.0 - alpha) / jf;
        values.push(prev);
    }
    Ok(GlWeights { alpha, values })
}

/// Which sign the fractional order carries in `A_0`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum A0Convention {
    /// `A_0 = A - D(α, 1) = A + diag(α)`; `α = 1` recovers `x[k+1] = (A + I) x[k]`.
    #[default]
    PlusAlpha,
    /// `A_0 = A - diag(α)`, the opposite sign, kept for comparison studies.
    MinusAlpha,
}

/// Lag matrix `A_j` of `x[k+1] = Σ_j A_j x[k-j] + w[k]`.
pub fn build_aj(system: &FracSystem, j: usize) -> DMatrix<f64> {
    build_aj_with(system, j, A0Convention::PlusAlpha)
}

pub fn build_aj_with(system: &FracSystem, j: usize, convention: A0Convention) -> DMatrix<f64> {
    let weights: Vec<GlWeights> = system
        .alpha
        .iter()
        .map(|&a| gl_weights(a, j + 1).expect("orders validated at construction"))
        .collect();
    lag_matrix(system, &weights, j, convention)
}

/// `A_0 .. A_{count-1}`, with the weight recurrences run once per order.
pub fn lag_matrices(
    system: &FracSystem,
    count: usize,
    convention: A0Convention,
) -> Vec<DMatrix<f64>> {
    let weights: Vec<GlWeights> = system
        .alpha
        .iter()
        .map(|&a| gl_weights(a, count).expect("orders validated at construction"))
        .collect();
    (0..count)
        .map(|j| lag_matrix(system, &weights, j, convention))
        .collect()
}

fn lag_matrix(
    system: &FracSystem,
    weights: &[GlWeights],
    j: usize,
    convention: A0Convention,
) -> DMatrix<f64> {
    // D(α, j) = diag(ψ(α_i, j))
    let d_next = DVector::from_iterator(weights.len(), weights.iter().map(|w| w.values[j + 1]));
    if j == 0 {
        match convention {
            A0Convention::PlusAlpha => &system.a - DMatrix::from_diagonal(&d_next),
            A0Convention::MinusAlpha => {
                &system.a - DMatrix::from_diagonal(&DVector::from_row_slice(&system.alpha))
            }
        }
    } else {
        -DMatrix::from_diagonal(&d_next)
    }
}

/// The `p`-augmented LTI approximation `x̃[k+1] = Ã x̃[k] + B̃ u[k] + B̃ʷ w[k]`
/// acting on `x̃[k] = [x[k]; x[k-1]; …; x[k-p+1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystem {
    p: usize,
    n: usize,
    alpha: Vec<f64>,
    atilde: DMatrix<f64>,
    btilde: Option<DMatrix<f64>>,
    btilde_w: DMatrix<f64>,
}

impl AugmentedSystem {
    /// Wraps an arbitrary `d x d` transition matrix (e.g. an estimate) with
    /// the canonical input maps for block size `n`.
    pub fn from_parts(
        n: usize,
        alpha: Vec<f64>,
        atilde: DMatrix<f64>,
        b: Option<&DMatrix<f64>>,
    ) -> Result<Self> {
        if n == 0 || atilde.nrows() != atilde.ncols() || !atilde.nrows().is_multiple_of(n) {
            return Err(Error::domain(format!(
                "transition matrix {}x{} is not square with block size {n}",
                atilde.nrows(),
                atilde.ncols()
            )));
        }
        if alpha.len() != n {
            return Err(Error::domain("alpha length must equal the block size"));
        }
        let d = atilde.nrows();
        let p = d / n;
        let btilde = match b {
            Some(b) if b.nrows() != n => {
                return Err(Error::domain(format!(
                    "B must have {n} rows, got {}",
                    b.nrows()
                )))
            }
            Some(b) => Some(stack_top(b, d)),
            None => None,
        };
        let btilde_w = stack_top(&DMatrix::identity(n, n), d);
        Ok(AugmentedSystem {
            p,
            n,
            alpha,
            atilde,
            btilde,
            btilde_w,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Augmented dimension `d = n p`.
    pub fn d(&self) -> usize {
        self.n * self.p
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn atilde(&self) -> &DMatrix<f64> {
        &self.atilde
    }

    pub fn btilde(&self) -> Option<&DMatrix<f64>> {
        self.btilde.as_ref()
    }

    pub fn btilde_w(&self) -> &DMatrix<f64> {
        &self.btilde_w
    }

    /// Block `(0, j)` of `Ã`, i.e. `A_j` for a genuine augmentation.
    pub fn top_block(&self, j: usize) -> DMatrix<f64> {
        self.atilde
            .view((0, j * self.n), (self.n, self.n))
            .into_owned()
    }

    pub fn without_input(mut self) -> Self {
        self.btilde = None;
        self
    }
}

fn stack_top(top: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, top.ncols());
    m.view_mut((0, 0), (top.nrows(), top.ncols()))
        .copy_from(top);
    m
}

/// Assembles the block-companion `Ã` from `A_0 … A_{p-1}`.
pub fn augment(system: &FracSystem, p: usize) -> Result<AugmentedSystem> {
    augment_with(system, p, A0Convention::PlusAlpha)
}

pub fn augment_with(
    system: &FracSystem,
    p: usize,
    convention: A0Convention,
) -> Result<AugmentedSystem> {
    if p < 1 {
        return Err(Error::domain("truncation length p must be >= 1"));
    }
    let n = system.n();
    let d = n * p;
    let mut atilde = DMatrix::zeros(d, d);
    for (j, aj) in lag_matrices(system, p, convention).iter().enumerate() {
        atilde.view_mut((0, j * n), (n, n)).copy_from(aj);
    }
    for blk in 1..p {
        atilde
            .view_mut((blk * n, (blk - 1) * n), (n, n))
            .fill_with_identity();
    }
    AugmentedSystem::from_parts(n, system.alpha.clone(), atilde, system.b.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn scalar() -> FracSystem {
        FracSystem::new(vec![0.5], dmatrix![0.2], None, 0.0).unwrap()
    }

    #[test]
    fn weights_half_order() {
        let w = gl_weights(0.5, 3).unwrap();
        assert_eq!(w.values(), &[1.0, -0.5, -0.125, -0.0625]);
    }

    #[test]
    fn weights_zero_lag_and_integer_order() {
        assert_eq!(gl_weights(1.3, 0).unwrap().values(), &[1.0]);
        assert_eq!(
            gl_weights(1.0, 4).unwrap().values(),
            &[1.0, -1.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn weights_reject_bad_orders() {
        assert!(matches!(gl_weights(0.0, 3), Err(Error::Domain(_))));
        assert!(matches!(gl_weights(-0.5, 3), Err(Error::Domain(_))));
        assert!(matches!(gl_weights(2.5, 3), Err(Error::Domain(_))));
        assert!(matches!(gl_weights(f64::NAN, 3), Err(Error::Domain(_))));
        assert!(gl_weights(2.0, 3).is_ok());
    }

    #[test]
    fn weights_decay_and_sum_rule() {
        let w = gl_weights(0.5, 1000).unwrap();
        for j in 2..=1000 {
            assert!(w.values()[j] < 0.0);
            assert!(w.values()[j].abs() < w.values()[j - 1].abs());
        }
        let s: f64 = w.values().iter().sum();
        assert!(s.abs() < 0.02, "partial sum {s}");
    }

    #[test]
    fn lag_matrices_scalar() {
        let sys = scalar();
        assert!((build_aj(&sys, 0)[(0, 0)] - 0.7).abs() < 1e-15);
        assert_eq!(build_aj(&sys, 1)[(0, 0)], 0.125);
        let minus = build_aj_with(&sys, 0, A0Convention::MinusAlpha);
        assert!((minus[(0, 0)] + 0.3).abs() < 1e-15);
    }

    #[test]
    fn lag_matrices_match_single_builds() {
        let sys =
            FracSystem::new(vec![0.3, 1.7], dmatrix![0.1, -0.2; 0.05, 0.3], None, 0.0).unwrap();
        let all = lag_matrices(&sys, 12, A0Convention::PlusAlpha);
        for (j, m) in all.iter().enumerate() {
            assert_eq!(m, &build_aj(&sys, j));
        }
    }

    #[test]
    fn integer_order_has_no_memory() {
        let sys =
            FracSystem::new(vec![1.0, 1.0], dmatrix![0.1, 0.2; -0.3, 0.4], None, 0.0).unwrap();
        assert_eq!(build_aj(&sys, 0), sys.a() + DMatrix::identity(2, 2));
        for j in 1..6 {
            assert_eq!(build_aj(&sys, j), DMatrix::zeros(2, 2));
        }
    }

    #[test]
    fn augment_scalar() {
        let aug = augment(&scalar(), 2).unwrap();
        assert_eq!(aug.d(), 2);
        let expected = dmatrix![0.7, 0.125; 1.0, 0.0];
        assert!((aug.atilde() - expected).abs().max() < 1e-15);
        assert_eq!(aug.btilde_w(), &dmatrix![1.0; 0.0]);
        assert!(aug.btilde().is_none());
    }

    #[test]
    fn augment_integer_order() {
        let a = 0.37;
        let sys = FracSystem::new(vec![1.0], dmatrix![a], None, 0.0).unwrap();
        let aug = augment(&sys, 3).unwrap();
        let expected = dmatrix![a + 1.0, 0.0, 0.0; 1.0, 0.0, 0.0; 0.0, 1.0, 0.0];
        assert_eq!(aug.atilde(), &expected);
    }

    #[test]
    fn augment_p1_is_a0() {
        let sys = FracSystem::new(
            vec![0.4, 0.9],
            dmatrix![0.1, 0.2; 0.3, 0.4],
            Some(dmatrix![1.0; 2.0]),
            0.1,
        )
        .unwrap();
        let aug = augment(&sys, 1).unwrap();
        assert_eq!(aug.d(), 2);
        assert_eq!(aug.atilde(), &build_aj(&sys, 0));
        assert_eq!(aug.btilde().unwrap(), sys.b().unwrap());
        assert!(matches!(augment(&sys, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn augment_block_layout() {
        let sys = FracSystem::new(
            vec![0.4, 0.9],
            dmatrix![0.1, 0.2; 0.3, 0.4],
            Some(dmatrix![1.0; 2.0]),
            0.1,
        )
        .unwrap();
        let p = 4;
        let aug = augment(&sys, p).unwrap();
        let n = 2;
        for br in 0..p {
            for bc in 0..p {
                let blk = aug.atilde().view((br * n, bc * n), (n, n)).into_owned();
                let expected = if br == 0 {
                    build_aj(&sys, bc)
                } else if br == bc + 1 {
                    DMatrix::identity(n, n)
                } else {
                    DMatrix::zeros(n, n)
                };
                assert_eq!(blk, expected, "block ({br},{bc})");
                if br == 0 && bc >= 1 {
                    assert_eq!(blk, DMatrix::from_diagonal(&blk.diagonal()));
                }
            }
        }
        let bt = aug.btilde().unwrap();
        assert_eq!(bt.nrows(), 8);
        assert_eq!(bt.view((0, 0), (2, 1)).into_owned(), dmatrix![1.0; 2.0]);
        assert!(bt.rows(2, 6).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn system_validation() {
        assert!(FracSystem::new(vec![], DMatrix::zeros(0, 0), None, 0.0).is_err());
        assert!(FracSystem::new(vec![0.5], dmatrix![1.0, 2.0], None, 0.0).is_err());
        assert!(FracSystem::new(vec![0.5], dmatrix![1.0], Some(dmatrix![1.0; 2.0]), 0.0).is_err());
        assert!(FracSystem::new(vec![0.5], dmatrix![1.0], None, -1.0).is_err());
        assert!(FracSystem::new(vec![3.0], dmatrix![1.0], None, 0.0).is_err());
    }

    #[test]
    fn system_json_roundtrip() {
        let text = r#"{"n": 2, "alpha": [0.5, 0.7], "A": [[0.1, 0.2], [0.3, 0.4]], "B": [[1.0], [0.0]], "sigma": 0.1}"#;
        let sys = FracSystem::from_json_str(text).unwrap();
        assert_eq!(sys.m(), 1);
        assert_eq!(sys.a()[(1, 0)], 0.3);
        let back = FracSystem::from_json_str(&sys.to_json_string()).unwrap();
        assert_eq!(back, sys);

        let null_b = r#"{"n": 1, "alpha": [0.5], "A": [[0.2]], "B": null, "sigma": 0}"#;
        assert!(FracSystem::from_json_str(null_b).unwrap().b().is_none());

        let mismatch = r#"{"n": 2, "alpha": [0.5], "A": [[0.2]], "sigma": 0}"#;
        assert!(matches!(
            FracSystem::from_json_str(mismatch),
            Err(Error::Domain(_))
        ));
        let unknown = r#"{"n": 1, "alpha": [0.5], "A": [[0.2]], "sigma": 0, "extra": 1}"#;
        assert!(matches!(
            FracSystem::from_json_str(unknown),
            Err(Error::Json(_))
        ));
    }
}
