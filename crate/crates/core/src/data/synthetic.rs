//! Rotated two-class Gaussian blobs.
//!
//! In a domain rotated by `theta`, class `c` is centred at
//! `R(theta) (CENTER_OFFSET, (2c - 1) CLASS_OFFSET)` with isotropic noise.
//! The Bayes boundary of each domain is the line through the origin at angle
//! `theta`, and since the blobs sit away from the origin, a boundary that is
//! off by a few tens of degrees misclassifies a large part of one class.

use rand_distr::{Distribution, Normal};
use rand::seq::SliceRandom;

use super::{flip_labels, DomainDataset, Features, MultiDomainDataset};
use crate::error::{DarnError, Result};
use crate::nn::matrix::Matrix;
use crate::nn::rng::{self, derive_seed};

pub const CENTER_OFFSET: f64 = 3.0;
pub const CLASS_OFFSET: f64 = 1.0;

fn rotate(theta_deg: f64, x: f64, y: f64) -> (f64, f64) {
    let (s, c) = theta_deg.to_radians().sin_cos();
    (c * x - s * y, s * x + c * y)
}

/// Normal of the Bayes decision boundary (`mu_1 - mu_0`, unit length) for a
/// domain rotated by `theta_deg`.
pub fn bayes_direction(theta_deg: f64) -> [f64; 2] {
    let (x, y) = rotate(theta_deg, 0.0, 1.0);
    [x, y]
}

fn gen_domain(
    name: String,
    m: usize,
    angle: f64,
    noise: f64,
    seed: u64,
) -> Result<(Matrix, Vec<f64>, String)> {
    let normal = Normal::new(0.0, noise).map_err(|e| DarnError::invalid(e.to_string()))?;
    let mut r = rng::seeded(seed);
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(m);
    for i in 0..m {
        let class = (i >= m / 2) as u8;
        let sign = if class == 1 { 1.0 } else { -1.0 };
        let (mx, my) = rotate(angle, CENTER_OFFSET, sign * CLASS_OFFSET);
        let x = mx + normal.sample(&mut r);
        let y = my + normal.sample(&mut r);
        rows.push((vec![x, y], class as f64));
    }
    rows.shuffle(&mut r);
    let labels = rows.iter().map(|(_, l)| *l).collect();
    let features = Matrix::from_rows(&rows.into_iter().map(|(x, _)| x).collect::<Vec<_>>())?;
    Ok((features, labels, name))
}

/// `k` sources and one target, each with `m` points (exactly `m/2` per class).
/// `angles_deg` holds the `k` source angles followed by the target angle.
/// The target sample is split in half: an unlabelled training part and a
/// labelled evaluation part.
pub fn gen_rotated_gaussians(
    k: usize,
    m: usize,
    angles_deg: &[f64],
    noise: f64,
    seed: u64,
) -> Result<MultiDomainDataset> {
    if k == 0 {
        return Err(DarnError::invalid("k must be at least 1"));
    }
    if m < 2 || !m.is_multiple_of(2) {
        return Err(DarnError::invalid(format!("m must be even and >= 2, got {m}")));
    }
    if angles_deg.len() != k + 1 {
        return Err(DarnError::DimensionMismatch {
            expected: k + 1,
            got: angles_deg.len(),
        });
    }
    if !(noise > 0.0 && noise.is_finite()) || angles_deg.iter().any(|a| !a.is_finite()) {
        return Err(DarnError::invalid("noise must be positive and angles finite"));
    }
    let mut sources = Vec::with_capacity(k);
    for (i, &angle) in angles_deg[..k].iter().enumerate() {
        let (x, y, name) = gen_domain(
            format!("source{i}@{angle}"),
            m,
            angle,
            noise,
            derive_seed(seed, i as u64),
        )?;
        sources.push(DomainDataset::new(name, Features::Dense(x), Some(y))?);
    }
    let target_angle = angles_deg[k];
    let (x, y, _) = gen_domain(
        String::new(),
        m,
        target_angle,
        noise,
        derive_seed(seed, k as u64),
    )?;
    let half = m / 2;
    let train_idx: Vec<usize> = (0..half).collect();
    let eval_idx: Vec<usize> = (half..m).collect();
    let target_train = DomainDataset::new(
        format!("target@{target_angle}"),
        Features::Dense(x.select_rows(&train_idx)),
        None,
    )?;
    let target_eval = DomainDataset::new(
        format!("target-eval@{target_angle}"),
        Features::Dense(x.select_rows(&eval_idx)),
        Some(eval_idx.iter().map(|&i| y[i]).collect()),
    )?;
    MultiDomainDataset::new(sources, target_train, target_eval)
}

/// Rotated-Gaussian sources plus label-flipped copies of chosen sources,
/// appended after the regular sources in the order given.
pub fn benchmark_with_adversary(
    source_angles: &[f64],
    target_angle: f64,
    m: usize,
    noise: f64,
    adversarial_copies: &[(usize, f64)],
    seed: u64,
) -> Result<MultiDomainDataset> {
    let mut angles = source_angles.to_vec();
    angles.push(target_angle);
    let mut data = gen_rotated_gaussians(source_angles.len(), m, &angles, noise, seed)?;
    for (n, &(of, fraction)) in adversarial_copies.iter().enumerate() {
        let original = data.sources.get(of).ok_or_else(|| {
            DarnError::invalid(format!("adversarial copy of missing source {of}"))
        })?;
        let flipped = flip_labels(original, fraction, derive_seed(seed, 1000 + n as u64))?;
        data.sources.push(flipped);
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class_means(d: &DomainDataset) -> [[f64; 2]; 2] {
        let x = d.features.to_dense();
        let y = d.labels.as_ref().unwrap();
        let mut sums = [[0.0; 2]; 2];
        let mut counts = [0.0; 2];
        for r in 0..x.rows() {
            let c = y[r] as usize;
            sums[c][0] += x[(r, 0)];
            sums[c][1] += x[(r, 1)];
            counts[c] += 1.0;
        }
        [
            [sums[0][0] / counts[0], sums[0][1] / counts[0]],
            [sums[1][0] / counts[1], sums[1][1] / counts[1]],
        ]
    }

    #[test]
    fn equal_angles_give_matching_statistics() {
        let m = 400;
        let noise = 0.5;
        let data = gen_rotated_gaussians(3, m, &[20.0; 4], noise, 5).unwrap();
        let reference = class_means(&data.sources[0]);
        // each class mean is over m/2 points: 3 sigma of the difference of two such means
        let bound = 3.0 * noise * (2.0 / (m as f64 / 2.0)).sqrt();
        for s in &data.sources[1..] {
            let means = class_means(s);
            for c in 0..2 {
                for j in 0..2 {
                    assert!((means[c][j] - reference[c][j]).abs() < bound);
                }
            }
        }
    }

    #[test]
    fn classes_are_exactly_balanced() {
        let data = gen_rotated_gaussians(2, 50, &[0.0, 10.0, 5.0], 0.3, 1).unwrap();
        for s in &data.sources {
            let ones = s.labels.as_ref().unwrap().iter().filter(|y| **y == 1.0).count();
            assert_eq!(ones, 25);
        }
        assert_eq!(data.target_train.len(), 25);
        assert_eq!(data.target_eval.len(), 25);
        assert!(!data.target_train.labelled());
    }

    #[test]
    fn half_turn_reverses_bayes_boundary() {
        let a = bayes_direction(10.0);
        let b = bayes_direction(190.0);
        let cos = a[0] * b[0] + a[1] * b[1];
        assert!((cos + 1.0).abs() < 1e-12);
        // empirical class means agree with the analytic boundary orientation
        let data = gen_rotated_gaussians(1, 2000, &[190.0, 10.0], 0.5, 3).unwrap();
        let means = class_means(&data.sources[0]);
        let w = [means[1][0] - means[0][0], means[1][1] - means[0][1]];
        assert!(w[0] * a[0] + w[1] * a[1] < -1.5);
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let a = gen_rotated_gaussians(2, 20, &[0.0, 15.0, 10.0], 0.5, 9).unwrap();
        let b = gen_rotated_gaussians(2, 20, &[0.0, 15.0, 10.0], 0.5, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_sizes_are_rejected() {
        assert!(gen_rotated_gaussians(0, 10, &[0.0], 0.5, 0).is_err());
        assert!(gen_rotated_gaussians(1, 11, &[0.0, 0.0], 0.5, 0).is_err());
        assert!(gen_rotated_gaussians(2, 10, &[0.0, 0.0], 0.5, 0).is_err());
        assert!(gen_rotated_gaussians(1, 10, &[0.0, 0.0], 0.0, 0).is_err());
    }

    #[test]
    fn adversarial_copy_shares_features() {
        let data = benchmark_with_adversary(&[0.0, 15.0], 10.0, 20, 0.5, &[(0, 1.0)], 4).unwrap();
        assert_eq!(data.num_sources(), 3);
        assert_eq!(data.sources[2].features, data.sources[0].features);
        for (a, b) in data.sources[2]
            .labels
            .as_ref()
            .unwrap()
            .iter()
            .zip(data.sources[0].labels.as_ref().unwrap())
        {
            assert_eq!(*a, 1.0 - b);
        }
    }
}
