//! Discrepancy estimates between a target batch and a source batch.
//!
//! Classification uses a domain classifier: `disc = 2 (1 - eps)` where `eps`
//! is the classifier's (logistic surrogate) loss. Regression with squared loss
//! uses the spectral norm of the difference of feature second-moment
//! matrices, obtained by power iteration.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{DarnError, Result};
use crate::nn::loss::softplus;
use crate::nn::matrix::{dot, norm2, Matrix};
use crate::nn::rng;

/// Defaults for the power iteration inside the trainer.
pub const DEFAULT_POWER_ITERS: usize = 20;
pub const DEFAULT_POWER_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscKind {
    Classification,
    Regression,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscEstimate {
    pub value: f64,
    pub kind: DiscKind,
    pub domain_index: usize,
}

/// `(1/m) F^T F` for a batch of feature rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondMomentMatrix(Matrix);

impl SecondMomentMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }
}

/// Mean logistic loss of a domain classifier; target rows are labelled 1,
/// source rows 0.
pub fn domain_classifier_error(logits: &[f64], is_target: &[bool]) -> Result<f64> {
    if logits.is_empty() {
        return Err(DarnError::EmptyBatch);
    }
    if logits.len() != is_target.len() {
        return Err(DarnError::DimensionMismatch {
            expected: logits.len(),
            got: is_target.len(),
        });
    }
    let total: f64 = logits
        .iter()
        .zip(is_target)
        .map(|(&x, &t)| if t { softplus(-x) } else { softplus(x) })
        .sum();
    Ok(total / logits.len() as f64)
}

/// `2 (1 - eps)`, clamped at zero.
pub fn disc_classification(eps_hat: f64) -> f64 {
    (2.0 * (1.0 - eps_hat)).max(0.0)
}

pub fn second_moment(features: &Matrix) -> Result<SecondMomentMatrix> {
    if features.rows() == 0 {
        return Err(DarnError::EmptyBatch);
    }
    let mut m = features.t_matmul(features)?;
    m.scale(1.0 / features.rows() as f64);
    // symmetrise away accumulation-order noise
    let d = m.rows();
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    Ok(SecondMomentMatrix(m))
}

/// Result of [`power_iteration`].
#[derive(Clone, Debug, PartialEq)]
pub struct Eigenpair {
    /// `|lambda|` of the largest-magnitude eigenvalue.
    pub magnitude: f64,
    /// Sign of the Rayleigh quotient at the returned vector.
    pub sign: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
}

/// Largest-magnitude eigenvalue of a symmetric matrix.
///
/// Starts from a seeded random unit vector. The magnitude estimate is
/// `||M v||` for the current unit iterate; iteration stops when two
/// successive estimates differ by less than `tol` or after `max_iters`.
pub fn power_iteration(m: &Matrix, max_iters: usize, tol: f64, seed: u64) -> Result<Eigenpair> {
    let d = m.rows();
    if m.cols() != d {
        return Err(DarnError::DimensionMismatch {
            expected: d,
            got: m.cols(),
        });
    }
    if max_iters == 0 {
        return Err(DarnError::invalid("max_iters must be at least 1"));
    }
    if d == 0 {
        return Err(DarnError::invalid("empty matrix"));
    }
    if !m.is_finite() {
        return Err(DarnError::NonFinite("power iteration input".into()));
    }
    let mut rng = rng::seeded(seed);
    let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n = norm2(&v);
    v.iter_mut().for_each(|x| *x /= n);

    let mut estimate = f64::NAN;
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        let w = m.mul_vec(&v);
        let w_norm = norm2(&w);
        if w_norm == 0.0 {
            return Ok(Eigenpair {
                magnitude: 0.0,
                sign: 1.0,
                vector: v,
                iterations,
            });
        }
        let previous = estimate;
        estimate = w_norm;
        v = w.into_iter().map(|x| x / w_norm).collect();
        if (estimate - previous).abs() < tol {
            break;
        }
    }
    let rayleigh = dot(&v, &m.mul_vec(&v));
    Ok(Eigenpair {
        magnitude: estimate,
        sign: if rayleigh < 0.0 { -1.0 } else { 1.0 },
        vector: v,
        iterations,
    })
}

/// Largest-magnitude eigenvalue of `M_T - M_S`, with its eigenvector.
pub fn disc_regression_eigen(
    m_target: &SecondMomentMatrix,
    m_source: &SecondMomentMatrix,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<Eigenpair> {
    if m_target.dim() != m_source.dim() {
        return Err(DarnError::DimensionMismatch {
            expected: m_target.dim(),
            got: m_source.dim(),
        });
    }
    let diff = m_target.0.sub(&m_source.0)?;
    power_iteration(&diff, max_iters, tol, seed)
}

/// `||M_T - M_S||_2` via [`power_iteration`].
pub fn disc_regression(
    m_target: &SecondMomentMatrix,
    m_source: &SecondMomentMatrix,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<f64> {
    disc_regression_eigen(m_target, m_source, max_iters, tol, seed).map(|e| e.magnitude)
}
