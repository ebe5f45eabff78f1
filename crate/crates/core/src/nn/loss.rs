//! Mean losses returning `(value, gradient w.r.t. the network output)`.

use super::matrix::Matrix;
use crate::error::{DarnError, Result};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy on logits, targets in `{0, 1}` (or `[0, 1]`).
pub fn logistic_loss(logits: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if logits.is_empty() {
        return Err(DarnError::EmptyBatch);
    }
    if logits.len() != targets.len() {
        return Err(DarnError::DimensionMismatch {
            expected: logits.len(),
            got: targets.len(),
        });
    }
    let n = logits.len() as f64;
    let total: f64 = logits
        .iter()
        .zip(targets)
        .map(|(&x, &t)| softplus(x) - t * x)
        .sum();
    let grad = logits
        .iter()
        .zip(targets)
        .map(|(&x, &t)| (sigmoid(x) - t) / n)
        .collect();
    Ok((total / n, grad))
}

/// Mean softmax cross-entropy over the rows of `logits`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if logits.rows() == 0 {
        return Err(DarnError::EmptyBatch);
    }
    if logits.rows() != labels.len() {
        return Err(DarnError::DimensionMismatch {
            expected: logits.rows(),
            got: labels.len(),
        });
    }
    let n = logits.rows() as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        if label >= logits.cols() {
            return Err(DarnError::invalid(format!(
                "label {label} out of range for {} classes",
                logits.cols()
            )));
        }
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|x| (x - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        total += log_z - row[label];
        let g = grad.row_mut(r);
        for (c, x) in row.iter().enumerate() {
            g[c] = (x - log_z).exp() / n;
        }
        g[label] -= 1.0 / n;
    }
    Ok((total / n, grad))
}

/// Mean squared error for a single-output regression head (`m x 1`).
pub fn squared_loss(predictions: &Matrix, targets: &[f64]) -> Result<(f64, Matrix)> {
    if predictions.rows() == 0 {
        return Err(DarnError::EmptyBatch);
    }
    if predictions.cols() != 1 || predictions.rows() != targets.len() {
        return Err(DarnError::DimensionMismatch {
            expected: predictions.rows(),
            got: targets.len(),
        });
    }
    let n = targets.len() as f64;
    let residual: Vec<f64> = predictions
        .as_slice()
        .iter()
        .zip(targets)
        .map(|(p, t)| p - t)
        .collect();
    let loss = residual.iter().map(|r| r * r).sum::<f64>() / n;
    let grad = Matrix::from_vec(
        targets.len(),
        1,
        residual.iter().map(|r| 2.0 * r / n).collect(),
    )?;
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn logistic_at_zero_is_ln2() {
        let (l, g) = logistic_loss(&[0.0; 4], &[1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(l, std::f64::consts::LN_2);
        assert_abs_diff_eq!(g[0], -0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 0.125, epsilon = 1e-15);
    }

    #[test]
    fn logistic_gradient_matches_finite_difference() {
        let x = [0.7, -2.0, 3.5];
        let t = [1.0, 1.0, 0.0];
        let (_, g) = logistic_loss(&x, &t).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (logistic_loss(&xp, &t).unwrap().0 - logistic_loss(&xm, &t).unwrap().0) / (2.0 * h);
            assert_abs_diff_eq!(g[i], fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let logits = Matrix::zeros(3, 4);
        let (l, g) = softmax_cross_entropy(&logits, &[0, 1, 3]).unwrap();
        assert_abs_diff_eq!(l, 4f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(g[(0, 0)], (0.25 - 1.0) / 3.0, epsilon = 1e-15);
        assert!(softmax_cross_entropy(&logits, &[0, 1, 4]).is_err());
    }

    #[test]
    fn squared_loss_zero_residual() {
        let p = Matrix::zeros(4, 1);
        let (l, g) = squared_loss(&p, &[0.0; 4]).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.as_slice().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn empty_batches_error() {
        assert!(matches!(logistic_loss(&[], &[]), Err(DarnError::EmptyBatch)));
        assert!(matches!(
            squared_loss(&Matrix::zeros(0, 1), &[]),
            Err(DarnError::EmptyBatch)
        ));
    }
}
