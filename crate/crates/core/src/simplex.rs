//! Projection of score vectors onto the probability simplex.
//!
//! The main entry point is [`darn_project`], the minimiser of
//! `-<z, a> + ||a||_2` over the simplex. Its solution has the form
//! `a = [z - nu]_+ / ||[z - nu]_+||_1` where the threshold `nu` satisfies
//! `||[z - nu]_+||_2 = 1`; the threshold is found by bisection in
//! [`find_nu`]. [`darn_jacobian`] and [`darn_jvp`] give the derivative of the
//! projection for a fixed support, which is what backpropagation needs.
//!
//! [`sparsemax_project`] (squared-distance projection) and [`softmax`] are
//! kept as baselines.

use std::ops::Deref;

use crate::error::{DarnError, Result};

/// Absolute tolerance on the threshold used throughout the crate.
pub const DEFAULT_NU_TOL: f64 = 1e-12;

/// Scores `z = -g / tau`; non-empty and finite.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        validate_scores(&z)?;
        Ok(ScoreVector(z))
    }

    /// Scales per-domain losses `g` into scores `-g / tau`.
    pub fn from_losses(g: &[f64], tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(DarnError::invalid(format!("tau must be positive, got {tau}")));
        }
        Self::new(g.iter().map(|&gi| -gi / tau).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ScoreVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A point on the probability simplex together with its support.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexWeights {
    alpha: Vec<f64>,
    support: Vec<usize>,
}

impl SimplexWeights {
    /// Wraps `alpha` without renormalising. Entries must be finite, non-negative
    /// and sum to one within `1e-9`.
    pub fn from_alpha(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(DarnError::invalid("weight vector is empty"));
        }
        if alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(DarnError::invalid("weights must be finite and non-negative"));
        }
        let sum: f64 = alpha.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DarnError::invalid(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self::from_alpha_unchecked(alpha))
    }

    fn from_alpha_unchecked(alpha: Vec<f64>) -> Self {
        let support = alpha
            .iter()
            .enumerate()
            .filter(|(_, a)| **a > 0.0)
            .map(|(i, _)| i)
            .collect();
        SimplexWeights { alpha, support }
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k > 0, "uniform weights need k >= 1");
        Self::from_alpha_unchecked(vec![1.0 / k as f64; k])
    }

    pub fn one_hot(k: usize, index: usize) -> Self {
        assert!(index < k, "one-hot index {index} out of range for k = {k}");
        let mut alpha = vec![0.0; k];
        alpha[index] = 1.0;
        Self::from_alpha_unchecked(alpha)
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Indices with strictly positive weight, ascending.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn l2_norm(&self) -> f64 {
        self.alpha.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.alpha
    }
}

impl Deref for SimplexWeights {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.alpha
    }
}

/// Output of [`darn_project`].
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionResult {
    pub weights: SimplexWeights,
    /// Threshold `nu` with `||[z - nu]_+||_2 ~= 1`.
    pub nu: f64,
    /// `||[z - nu]_+||_2` at the returned `nu`.
    pub residual_norm: f64,
    /// `||[z - nu]_+||_1`, the normaliser of the positive part.
    pub mass: f64,
    /// Bisection steps spent in the threshold search.
    pub steps: usize,
}

/// Dense `k x k` Jacobian `J[i][j] = d alpha_i / d z_j`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobianMatrix {
    k: usize,
    entries: Vec<f64>,
}

impl JacobianMatrix {
    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.k + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.k..(i + 1) * self.k]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.k)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

fn validate_scores(z: &[f64]) -> Result<()> {
    if z.is_empty() {
        return Err(DarnError::invalid("score vector is empty"));
    }
    if let Some(i) = z.iter().position(|x| !x.is_finite()) {
        return Err(DarnError::invalid(format!("score {i} is not finite ({})", z[i])));
    }
    Ok(())
}

fn min_max(z: &[f64]) -> (f64, f64) {
    z.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Upper bound on the number of bisection steps for a given spread and tolerance.
pub fn bisection_step_bound(z: &[f64], tol: f64) -> usize {
    let (zmin, zmax) = min_max(z);
    let ratio = (zmax - zmin + 1.0) / tol;
    if ratio <= 1.0 {
        0
    } else {
        ratio.log2().ceil() as usize
    }
}

/// Bisection in coordinates shifted by `max(z)`, so the search interval is
/// `[min - max - 1, 0]` regardless of the magnitude of `z`. Returns the
/// shifted threshold and the number of steps.
fn bisect_shifted(z: &[f64], tol: f64) -> (f64, usize) {
    let (zmin, zmax) = min_max(z);
    let norm_at = |t: f64| -> f64 {
        z.iter()
            .map(|&x| ((x - zmax) - t).max(0.0))
            .map(|d| d * d)
            .sum::<f64>()
            .sqrt()
    };
    let max_steps = bisection_step_bound(z, tol);
    let mut lo = (zmin - zmax) - 1.0;
    let mut hi = 0.0_f64;
    let mut steps = 0;
    while hi - lo > tol && steps < max_steps {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        // norm is non-increasing in t: keep norm(lo) >= 1 >= norm(hi)
        if norm_at(mid) >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
    }
    (0.5 * (lo + hi), steps)
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(DarnError::invalid(format!("tolerance must be positive, got {tol}")))
    }
}

fn check_spread(z: &[f64]) -> Result<()> {
    let (zmin, zmax) = min_max(z);
    if (zmax - zmin + 1.0).is_finite() {
        Ok(())
    } else {
        Err(DarnError::invalid("score spread overflows"))
    }
}

/// Threshold `nu` with `||[z - nu]_+||_2 = 1`, found by bisection on
/// `[min(z) - 1, max(z)]` to absolute tolerance `tol`.
pub fn find_nu(z: &[f64], tol: f64) -> Result<f64> {
    find_nu_with_steps(z, tol).map(|(nu, _)| nu)
}

/// Like [`find_nu`] but also returns the number of bisection steps taken.
pub fn find_nu_with_steps(z: &[f64], tol: f64) -> Result<(f64, usize)> {
    validate_scores(z)?;
    check_tol(tol)?;
    check_spread(z)?;
    if z.len() == 1 {
        return Ok((z[0] - 1.0, 0));
    }
    let zmax = min_max(z).1;
    let (t, steps) = bisect_shifted(z, tol);
    Ok((zmax + t, steps))
}

/// Minimiser of `-<z, a> + ||a||_2` over the probability simplex.
///
/// The positive part `[z - nu]_+` is renormalised by its L1 norm, so the
/// weights sum to one independently of how precisely `nu` was found.
pub fn darn_project(z: &[f64], tol: f64) -> Result<ProjectionResult> {
    validate_scores(z)?;
    check_tol(tol)?;
    check_spread(z)?;
    if z.len() == 1 {
        return Ok(ProjectionResult {
            weights: SimplexWeights::one_hot(1, 0),
            nu: z[0] - 1.0,
            residual_norm: 1.0,
            mass: 1.0,
            steps: 0,
        });
    }
    let zmax = min_max(z).1;
    let (t, steps) = bisect_shifted(z, tol);
    let positive: Vec<f64> = z.iter().map(|&x| ((x - zmax) - t).max(0.0)).collect();
    let mass: f64 = positive.iter().sum();
    let residual_norm = positive.iter().map(|d| d * d).sum::<f64>().sqrt();
    let alpha = positive.into_iter().map(|d| d / mass).collect();
    Ok(ProjectionResult {
        weights: SimplexWeights::from_alpha_unchecked(alpha),
        nu: zmax + t,
        residual_norm,
        mass,
        steps,
    })
}

/// Support-dependent quantities shared by the dense Jacobian and the JVP.
struct JacobianParts {
    support_size: f64,
    inv_mass: f64,
    /// `|S| / sqrt(A)`
    rank_one_scale: f64,
}

fn jacobian_parts(z: &[f64], result: &ProjectionResult) -> Result<JacobianParts> {
    let alpha = result.weights.alpha();
    if z.len() != alpha.len() {
        return Err(DarnError::DimensionMismatch {
            expected: alpha.len(),
            got: z.len(),
        });
    }
    let support = result.weights.support();
    let n = support.len() as f64;
    // Shift-free form of A = (sum z_S)^2 - |S| (sum z_S^2 - 1), written via the
    // positive part d = alpha * K, which equals z - nu on the support.
    let d: Vec<f64> = support.iter().map(|&i| alpha[i] * result.mass).collect();
    let mean = d.iter().sum::<f64>() / n;
    let spread: f64 = d.iter().map(|x| (x - mean) * (x - mean)).sum();
    let a = n * (1.0 - spread);
    if !(a > 0.0) || !a.is_finite() {
        return Err(DarnError::Degenerate(format!(
            "A = {a} is not positive on a support of size {}",
            support.len()
        )));
    }
    Ok(JacobianParts {
        support_size: n,
        inv_mass: 1.0 / result.mass,
        rank_one_scale: n / a.sqrt(),
    })
}

/// Dense Jacobian of [`darn_project`] at `z`, for the support held in `result`:
///
/// `J = (1/K) (Diag(s) - s s^T / |S|) + (|S| / sqrt(A)) u u^T`,
/// `u = s / |S| - alpha o s`.
///
/// At support boundaries this is the one-sided derivative for the current support.
pub fn darn_jacobian(z: &[f64], result: &ProjectionResult) -> Result<JacobianMatrix> {
    let k = z.len();
    let parts = jacobian_parts(z, result)?;
    let alpha = result.weights.alpha();
    let support = result.weights.support();
    let mut entries = vec![0.0; k * k];
    let u: Vec<f64> = support
        .iter()
        .map(|&i| 1.0 / parts.support_size - alpha[i])
        .collect();
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            let delta = if i == j { 1.0 } else { 0.0 };
            entries[i * k + j] = parts.inv_mass * (delta - 1.0 / parts.support_size)
                + parts.rank_one_scale * (u[a] * u[b]);
        }
    }
    Ok(JacobianMatrix { k, entries })
}

/// `J v` in O(k) time and space, without forming `J`.
pub fn darn_jvp(z: &[f64], result: &ProjectionResult, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != z.len() {
        return Err(DarnError::DimensionMismatch {
            expected: z.len(),
            got: v.len(),
        });
    }
    let parts = jacobian_parts(z, result)?;
    let alpha = result.weights.alpha();
    let support = result.weights.support();
    let v_mean = support.iter().map(|&i| v[i]).sum::<f64>() / parts.support_size;
    let u_dot_v: f64 = support
        .iter()
        .map(|&i| (1.0 / parts.support_size - alpha[i]) * v[i])
        .sum();
    let mut out = vec![0.0; z.len()];
    for &i in support {
        let u_i = 1.0 / parts.support_size - alpha[i];
        out[i] = parts.inv_mass * (v[i] - v_mean) + parts.rank_one_scale * u_i * u_dot_v;
    }
    Ok(out)
}

/// `||J (z - alpha / ||alpha||_2)||_inf`, which vanishes at an exact optimum:
/// backpropagating through the projection then adds nothing beyond `alpha`.
pub fn danskin_residual(z: &[f64], result: &ProjectionResult) -> Result<f64> {
    let norm = result.weights.l2_norm();
    let direction: Vec<f64> = z
        .iter()
        .zip(result.weights.alpha())
        .map(|(zi, ai)| zi - ai / norm)
        .collect();
    let jv = darn_jvp(z, result, &direction)?;
    Ok(jv.iter().fold(0.0_f64, |m, x| m.max(x.abs())))
}

/// Euclidean projection onto the simplex (`argmin ||z - a||_2^2`), using the
/// sort-based threshold.
pub fn sparsemax_project(z: &[f64]) -> Result<SimplexWeights> {
    validate_scores(z)?;
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = sorted[0] - 1.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    let positive: Vec<f64> = z.iter().map(|&x| (x - theta).max(0.0)).collect();
    let total: f64 = positive.iter().sum();
    Ok(SimplexWeights::from_alpha_unchecked(
        positive.into_iter().map(|p| p / total).collect(),
    ))
}

pub fn softmax(z: &[f64]) -> Result<SimplexWeights> {
    validate_scores(z)?;
    let zmax = min_max(z).1;
    let exps: Vec<f64> = z.iter().map(|&x| (x - zmax).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(SimplexWeights::from_alpha_unchecked(
        exps.into_iter().map(|e| e / total).collect(),
    ))
}

/// Upper-bound objective `<g, alpha> + tau ||alpha||_2`.
pub fn aggregate_objective(g: &[f64], alpha: &[f64], tau: f64) -> Result<f64> {
    if g.len() != alpha.len() {
        return Err(DarnError::DimensionMismatch {
            expected: g.len(),
            got: alpha.len(),
        });
    }
    if !(tau > 0.0) {
        return Err(DarnError::invalid(format!("tau must be positive, got {tau}")));
    }
    let inner: f64 = g.iter().zip(alpha).map(|(a, b)| a * b).sum();
    let norm = alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
    Ok(inner + tau * norm)
}

/// `m / ||alpha||_2^2`: `k m` for uniform weights, `m` for one-hot weights.
pub fn effective_sample_size(alpha: &[f64], m: usize) -> f64 {
    let sq: f64 = alpha.iter().map(|a| a * a).sum();
    m as f64 / sq
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const TOL: f64 = DEFAULT_NU_TOL;

    /// Value of the inner problem, `-<z, a> + ||a||_2`.
    fn inner_value(z: &[f64], a: &[f64]) -> f64 {
        let dot: f64 = z.iter().zip(a).map(|(x, y)| x * y).sum();
        -dot + a.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn k2_closed_form(d: f64) -> f64 {
        0.5 + d / (2.0 * (2.0 - d * d).sqrt())
    }

    #[test]
    fn find_nu_equal_pair() {
        let nu = find_nu(&[0.0, 0.0], TOL).unwrap();
        assert_abs_diff_eq!(nu, -1.0 / 2f64.sqrt(), epsilon = 1e-11);
    }

    #[test]
    fn find_nu_collapsed_support() {
        let nu = find_nu(&[1.5, 0.0], TOL).unwrap();
        assert_abs_diff_eq!(nu, 0.5, epsilon = 1e-11);
    }

    #[test]
    fn find_nu_single_entry() {
        assert_eq!(find_nu(&[3.25], TOL).unwrap(), 2.25);
        let r = darn_project(&[-7.0], TOL).unwrap();
        assert_eq!(r.weights.alpha(), &[1.0]);
        assert_eq!(r.nu, -8.0);
        assert_eq!(r.steps, 0);
    }

    #[test]
    fn find_nu_rejects_non_finite() {
        assert!(matches!(
            find_nu(&[0.0, f64::NAN], TOL),
            Err(DarnError::InvalidInput(_))
        ));
        assert!(find_nu(&[f64::INFINITY], TOL).is_err());
        assert!(find_nu(&[], TOL).is_err());
        assert!(find_nu(&[1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn project_constant_is_uniform() {
        for c in [-4.0, 0.0, 2.5] {
            let r = darn_project(&[c, c, c], TOL).unwrap();
            for a in r.weights.alpha() {
                assert_abs_diff_eq!(*a, 1.0 / 3.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn project_k2_matches_closed_form_and_grid() {
        let r = darn_project(&[0.5, 0.0], TOL).unwrap();
        let expected = k2_closed_form(0.5);
        assert_abs_diff_eq!(expected, 0.68898, epsilon = 1e-5);
        assert_abs_diff_eq!(r.weights.alpha()[0], expected, epsilon = 1e-9);

        // brute force over a fine grid of the 1-simplex
        let n = 200_000;
        let best = (0..=n)
            .map(|i| i as f64 / n as f64)
            .min_by(|a, b| {
                inner_value(&[0.5, 0.0], &[*a, 1.0 - a])
                    .total_cmp(&inner_value(&[0.5, 0.0], &[*b, 1.0 - b]))
            })
            .unwrap();
        assert_abs_diff_eq!(best, expected, epsilon = 1e-4);
    }

    #[test]
    fn project_collapses_for_large_gap() {
        let r = darn_project(&[1.5, 0.0], TOL).unwrap();
        assert_eq!(r.weights.alpha(), &[1.0, 0.0]);
        assert_eq!(r.weights.support(), &[0]);
    }

    #[test]
    fn jacobian_equal_pair() {
        let z = [0.0, 0.0];
        let r = darn_project(&z, TOL).unwrap();
        let j = darn_jacobian(&z, &r).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let expected = [0.5 * s, -0.5 * s, -0.5 * s, 0.5 * s];
        for (a, b) in j.entries().iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-10);
        }
        let jv = darn_jvp(&z, &r, &[1.0, -1.0]).unwrap();
        assert_abs_diff_eq!(jv[0], s, epsilon = 1e-10);
        assert_abs_diff_eq!(jv[1], -s, epsilon = 1e-10);
    }

    #[test]
    fn jacobian_vanishes_on_one_hot() {
        let z = [1.5, 0.0];
        let r = darn_project(&z, TOL).unwrap();
        let j = darn_jacobian(&z, &r).unwrap();
        assert!(j.entries().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn jacobian_k1_is_zero() {
        let r = darn_project(&[0.3], TOL).unwrap();
        let j = darn_jacobian(&[0.3], &r).unwrap();
        assert_eq!(j.entries(), &[0.0]);
    }

    #[test]
    fn jvp_of_ones_is_zero() {
        let z = [0.3, -0.2, 0.1, 0.25];
        let r = darn_project(&z, TOL).unwrap();
        let jv = darn_jvp(&z, &r, &[1.0; 4]).unwrap();
        for x in jv {
            assert_abs_diff_eq!(x, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let z = [0.4, -0.1, 0.2, -0.35, 0.05];
        let r = darn_project(&z, TOL).unwrap();
        let j = darn_jacobian(&z, &r).unwrap();
        let h = 1e-6;
        for col in 0..z.len() {
            let mut zp = z;
            let mut zm = z;
            zp[col] += h;
            zm[col] -= h;
            let ap = darn_project(&zp, TOL).unwrap().weights.into_vec();
            let am = darn_project(&zm, TOL).unwrap().weights.into_vec();
            for row in 0..z.len() {
                let fd = (ap[row] - am[row]) / (2.0 * h);
                assert_abs_diff_eq!(j.get(row, col), fd, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn degenerate_residual_is_reported() {
        // a hand-built result whose positive part has norm far from one
        let weights = SimplexWeights::from_alpha(vec![0.5, 0.5]).unwrap();
        let result = ProjectionResult {
            weights,
            nu: 0.0,
            residual_norm: 0.0,
            mass: 0.0,
            steps: 0,
        };
        let mut bad = result.clone();
        bad.mass = f64::NAN;
        assert!(matches!(
            darn_jacobian(&[0.0, 0.0], &bad),
            Err(DarnError::Degenerate(_))
        ));
        let mut wide = result;
        wide.weights = SimplexWeights::from_alpha(vec![0.9, 0.1]).unwrap();
        wide.mass = 10.0;
        assert!(matches!(
            darn_jvp(&[0.0, 0.0], &wide, &[1.0, 0.0]),
            Err(DarnError::Degenerate(_))
        ));
    }

    #[test]
    fn sparsemax_examples() {
        assert_eq!(sparsemax_project(&[0.7, 0.7]).unwrap().alpha(), &[0.5, 0.5]);
        assert_eq!(sparsemax_project(&[2.0, 0.0]).unwrap().alpha(), &[1.0, 0.0]);
        let a = sparsemax_project(&[0.6, 0.4]).unwrap();
        assert_abs_diff_eq!(a.alpha()[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(a.alpha()[1], 0.4, epsilon = 1e-15);
    }

    #[test]
    fn sparsemax_differs_from_darn() {
        // squared-distance projection is sparser than the L2-norm one here
        let z = [0.5, 0.0];
        let sm = sparsemax_project(&z).unwrap();
        let dp = darn_project(&z, TOL).unwrap();
        assert_abs_diff_eq!(sm.alpha()[0], 0.75, epsilon = 1e-15);
        assert!((sm.alpha()[0] - dp.weights.alpha()[0]).abs() > 0.05);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap().alpha(), &[0.5, 0.5]);
        let a = softmax(&[2f64.ln(), 0.0]).unwrap();
        assert_abs_diff_eq!(a.alpha()[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a.alpha()[1], 1.0 / 3.0, epsilon = 1e-15);
        let big = softmax(&[1000.0, 999.0, -1000.0]).unwrap();
        assert!(big.alpha().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn aggregate_objective_examples() {
        let u = aggregate_objective(&[1.0, 1.0], &[0.5, 0.5], 1.0).unwrap();
        assert_abs_diff_eq!(u, 1.0 + 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        assert!(aggregate_objective(&[1.0], &[0.5, 0.5], 1.0).is_err());
    }

    #[test]
    fn small_tau_is_one_hot() {
        let g = [0.0, 10.0];
        let tau = 1e-3;
        let z = ScoreVector::from_losses(&g, tau).unwrap();
        let r = darn_project(&z, TOL).unwrap();
        assert_eq!(r.weights.alpha(), &[1.0, 0.0]);
        let u = aggregate_objective(&g, r.weights.alpha(), tau).unwrap();
        assert_abs_diff_eq!(u, 1e-3, epsilon = 1e-15);
    }

    #[test]
    fn projection_beats_vertices() {
        let g = [0.3, 0.2, 0.5, 0.25];
        let tau = 0.4;
        let z = ScoreVector::from_losses(&g, tau).unwrap();
        let r = darn_project(&z, TOL).unwrap();
        let u = aggregate_objective(&g, r.weights.alpha(), tau).unwrap();
        for gi in g {
            assert!(u <= gi + tau + 1e-12);
        }
    }

    #[test]
    fn effective_sample_size_examples() {
        assert_abs_diff_eq!(effective_sample_size(&[0.25; 4], 100), 400.0, epsilon = 1e-9);
        assert_eq!(effective_sample_size(&[0.0, 1.0, 0.0], 37), 37.0);
        assert_abs_diff_eq!(effective_sample_size(&[0.75, 0.25], 16), 25.6, epsilon = 1e-12);
    }

    #[test]
    fn step_count_respects_bound() {
        let z = [2.0, -1.0, 0.3, 0.0, -2.5];
        let (_, steps) = find_nu_with_steps(&z, 1e-12).unwrap();
        assert!(steps <= bisection_step_bound(&z, 1e-12));
        assert!(steps > 0);
    }

    proptest! {
        #[test]
        fn projection_lands_on_simplex(z in prop::collection::vec(-50.0..50.0f64, 1..40)) {
            let r = darn_project(&z, TOL).unwrap();
            let a = r.weights.alpha();
            prop_assert!(a.iter().all(|x| *x >= 0.0));
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!((r.residual_norm - 1.0).abs() <= 1e-10);
            let (zmin, zmax) = min_max(&z);
            prop_assert!(r.nu >= zmin - 1.0 && r.nu <= zmax);
            let expected: Vec<usize> = (0..z.len()).filter(|&i| a[i] > 0.0).collect();
            prop_assert_eq!(r.weights.support(), &expected[..]);
        }

        #[test]
        fn projection_is_shift_invariant(
            z in prop::collection::vec(-3.0..3.0f64, 2..12),
            c in -100.0..100.0f64,
        ) {
            let shifted: Vec<f64> = z.iter().map(|x| x + c).collect();
            let a = darn_project(&z, TOL).unwrap();
            let b = darn_project(&shifted, TOL).unwrap();
            for (x, y) in a.weights.alpha().iter().zip(b.weights.alpha()) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }

        #[test]
        fn raising_a_loss_never_raises_its_weight(
            g in prop::collection::vec(0.0..3.0f64, 2..8),
            bump in 0.0..2.0f64,
            tau in 0.1..5.0f64,
            pick in 0usize..8,
        ) {
            let i = pick % g.len();
            let before = darn_project(&ScoreVector::from_losses(&g, tau).unwrap(), TOL).unwrap();
            let mut g2 = g.clone();
            g2[i] += bump;
            let after = darn_project(&ScoreVector::from_losses(&g2, tau).unwrap(), TOL).unwrap();
            prop_assert!(after.weights.alpha()[i] <= before.weights.alpha()[i] + 1e-10);
        }

        #[test]
        fn jvp_matches_dense(z in prop::collection::vec(-2.0..2.0f64, 1..20), seed in 0u64..1000) {
            let r = darn_project(&z, TOL).unwrap();
            let v: Vec<f64> = (0..z.len()).map(|i| ((i as u64 * 7919 + seed) % 97) as f64 / 48.5 - 1.0).collect();
            let dense = darn_jacobian(&z, &r).unwrap();
            let jv = darn_jvp(&z, &r, &v).unwrap();
            for (a, b) in dense.mul_vec(&v).iter().zip(&jv) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            for i in 0..z.len() {
                for j in 0..z.len() {
                    prop_assert!((dense.get(i, j) - dense.get(j, i)).abs() <= 1e-14);
                }
            }
        }
    }
}
