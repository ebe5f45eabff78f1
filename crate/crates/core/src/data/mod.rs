//! Datasets, synthetic benchmarks and seeded mini-batching.

mod sparse;
mod synthetic;

use rand::seq::SliceRandom;

pub use sparse::{load_sparse_text, parse_sparse_text, write_sparse_text};
pub use synthetic::{
    bayes_direction, benchmark_with_adversary, gen_rotated_gaussians, CENTER_OFFSET, CLASS_OFFSET,
};

use crate::error::{DarnError, Result};
use crate::nn::matrix::Matrix;
use crate::nn::rng;

/// Sparse rows stored as `(index, value)` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRows {
    dim: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn new(dim: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        for row in &rows {
            if let Some((i, _)) = row.iter().find(|(i, _)| *i >= dim) {
                return Err(DarnError::invalid(format!(
                    "feature index {i} out of range for dimension {dim}"
                )));
            }
        }
        Ok(SparseRows { dim, rows })
    }

    pub fn row(&self, r: usize) -> &[(usize, f64)] {
        &self.rows[r]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Features {
    Dense(Matrix),
    Sparse(SparseRows),
}

impl Features {
    pub fn rows(&self) -> usize {
        match self {
            Features::Dense(m) => m.rows(),
            Features::Sparse(s) => s.rows.len(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Features::Dense(m) => m.cols(),
            Features::Sparse(s) => s.dim,
        }
    }

    /// Dense copy of the selected rows.
    pub fn gather(&self, indices: &[usize]) -> Matrix {
        match self {
            Features::Dense(m) => m.select_rows(indices),
            Features::Sparse(s) => {
                let mut out = Matrix::zeros(indices.len(), s.dim);
                for (r, &i) in indices.iter().enumerate() {
                    let row = out.row_mut(r);
                    for &(j, v) in &s.rows[i] {
                        row[j] = v;
                    }
                }
                out
            }
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let all: Vec<usize> = (0..self.rows()).collect();
        self.gather(&all)
    }
}

/// One domain's sample. Labels are class indices (stored as `f64`) for
/// classification or real targets for regression.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainDataset {
    pub name: String,
    pub features: Features,
    pub labels: Option<Vec<f64>>,
}

impl DomainDataset {
    pub fn new(name: impl Into<String>, features: Features, labels: Option<Vec<f64>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != features.rows() {
                return Err(DarnError::DimensionMismatch {
                    expected: features.rows(),
                    got: l.len(),
                });
            }
        }
        Ok(DomainDataset {
            name: name.into(),
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn labelled(&self) -> bool {
        self.labels.is_some()
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    /// Labels as class indices. `-1` is read as class 0 so `{-1, +1}` files work.
    pub fn class_labels(&self) -> Result<Vec<usize>> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| DarnError::invalid(format!("dataset `{}` is unlabelled", self.name)))?;
        labels
            .iter()
            .map(|&y| {
                if y == -1.0 {
                    Ok(0)
                } else if y >= 0.0 && y.fract() == 0.0 && y < u32::MAX as f64 {
                    Ok(y as usize)
                } else {
                    Err(DarnError::invalid(format!(
                        "label {y} in `{}` is not a class index",
                        self.name
                    )))
                }
            })
            .collect()
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        Batch {
            indices: indices.to_vec(),
            features: self.features.gather(indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }
}

/// `k` labelled sources, an unlabelled target sample for adaptation and a
/// labelled held-out target sample used only for reporting.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiDomainDataset {
    pub sources: Vec<DomainDataset>,
    pub target_train: DomainDataset,
    pub target_eval: DomainDataset,
}

impl MultiDomainDataset {
    pub fn new(
        sources: Vec<DomainDataset>,
        target_train: DomainDataset,
        target_eval: DomainDataset,
    ) -> Result<Self> {
        if sources.is_empty() {
            return Err(DarnError::invalid("need at least one source domain"));
        }
        let dim = target_train.dim();
        for d in sources.iter().chain([&target_eval]) {
            if d.dim() != dim {
                return Err(DarnError::DimensionMismatch {
                    expected: dim,
                    got: d.dim(),
                });
            }
        }
        if let Some(s) = sources.iter().find(|s| !s.labelled()) {
            return Err(DarnError::invalid(format!("source `{}` is unlabelled", s.name)));
        }
        if !target_eval.labelled() {
            return Err(DarnError::invalid("target evaluation set must be labelled"));
        }
        Ok(MultiDomainDataset {
            sources,
            target_train: target_train.without_labels(),
            target_eval,
        })
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn dim(&self) -> usize {
        self.target_train.dim()
    }
}

/// Flips the labels of `floor(fraction * m)` uniformly chosen rows. Binary
/// labels are inverted; with more classes a label moves to the next class.
pub fn flip_labels(dataset: &DomainDataset, fraction: f64, seed: u64) -> Result<DomainDataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(DarnError::invalid(format!("fraction {fraction} not in [0, 1]")));
    }
    let classes = dataset.class_labels()?;
    if fraction == 0.0 {
        return Ok(dataset.clone());
    }
    let num_classes = classes.iter().max().map_or(2, |c| (c + 1).max(2));
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng::seeded(seed));
    let count = (fraction * dataset.len() as f64).floor() as usize;
    let mut labels: Vec<f64> = classes.iter().map(|&c| c as f64).collect();
    for &i in &order[..count] {
        labels[i] = ((classes[i] + 1) % num_classes) as f64;
    }
    DomainDataset::new(
        format!("{}-flipped", dataset.name),
        dataset.features.clone(),
        Some(labels),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub features: Matrix,
    pub labels: Option<Vec<f64>>,
}

/// Row indices for one epoch: a seeded shuffle cut into batches, the final
/// short batch included.
pub fn epoch_batches(len: usize, batch_size: usize, epoch_seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(DarnError::invalid("batch size must be at least 1"));
    }
    if len == 0 {
        return Err(DarnError::EmptyBatch);
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng::seeded(epoch_seed));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

pub struct BatchIter<'a> {
    dataset: &'a DomainDataset,
    batches: std::vec::IntoIter<Vec<usize>>,
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        self.batches.next().map(|idx| self.dataset.batch(&idx))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.batches.size_hint()
    }
}

impl ExactSizeIterator for BatchIter<'_> {}

pub fn batch_iter(dataset: &DomainDataset, batch_size: usize, epoch_seed: u64) -> Result<BatchIter<'_>> {
    let batches = epoch_batches(dataset.len(), batch_size, epoch_seed)?;
    Ok(BatchIter {
        dataset,
        batches: batches.into_iter(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy(m: usize) -> DomainDataset {
        let rows: Vec<Vec<f64>> = (0..m).map(|i| vec![i as f64, -(i as f64)]).collect();
        let labels = (0..m).map(|i| (i % 2) as f64).collect();
        DomainDataset::new("toy", Features::Dense(Matrix::from_rows(&rows).unwrap()), Some(labels))
            .unwrap()
    }

    #[test]
    fn batch_sizes_include_short_tail() {
        let d = toy(10);
        let sizes: Vec<usize> = batch_iter(&d, 4, 3).unwrap().map(|b| b.indices.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn same_seed_same_order() {
        let d = toy(25);
        let a: Vec<_> = batch_iter(&d, 6, 11).unwrap().collect();
        let b: Vec<_> = batch_iter(&d, 6, 11).unwrap().collect();
        let c: Vec<_> = batch_iter(&d, 6, 12).unwrap().collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn batch_errors() {
        let d = toy(3);
        assert!(batch_iter(&d, 0, 0).is_err());
        let empty = DomainDataset::new("e", Features::Dense(Matrix::zeros(0, 2)), Some(vec![])).unwrap();
        assert!(matches!(batch_iter(&empty, 4, 0), Err(DarnError::EmptyBatch)));
    }

    #[test]
    fn batch_rows_follow_indices() {
        let d = toy(9);
        for b in batch_iter(&d, 4, 5).unwrap() {
            for (r, &i) in b.indices.iter().enumerate() {
                assert_eq!(b.features.row(r), &[i as f64, -(i as f64)]);
                assert_eq!(b.labels.as_ref().unwrap()[r], (i % 2) as f64);
            }
        }
    }

    #[test]
    fn flip_examples() {
        let d = toy(11);
        assert_eq!(flip_labels(&d, 0.0, 1).unwrap(), d);
        let all = flip_labels(&d, 1.0, 1).unwrap();
        for (a, b) in all.labels.unwrap().iter().zip(d.labels.as_ref().unwrap()) {
            assert_eq!(*a, 1.0 - b);
        }
        let half = flip_labels(&d, 0.5, 7).unwrap();
        let diff = half
            .labels
            .unwrap()
            .iter()
            .zip(d.labels.as_ref().unwrap())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(diff, 5);
        assert_eq!(flip_labels(&d, 0.5, 7).unwrap(), flip_labels(&d, 0.5, 7).unwrap());
        assert!(flip_labels(&d.clone().without_labels(), 0.5, 0).is_err());
    }

    #[test]
    fn sparse_gather_densifies() {
        let s = SparseRows::new(5, vec![vec![(0, 2.0), (4, 1.0)], vec![(2, -1.0)]]).unwrap();
        let f = Features::Sparse(s);
        let m = f.gather(&[1, 0]);
        assert_eq!(m.row(0), &[0.0, 0.0, -1.0, 0.0, 0.0]);
        assert_eq!(m.row(1), &[2.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(SparseRows::new(3, vec![vec![(3, 1.0)]]).is_err());
    }

    proptest! {
        #[test]
        fn every_row_once_per_epoch(len in 1usize..200, bs in 1usize..50, seed in any::<u64>()) {
            let batches = epoch_batches(len, bs, seed).unwrap();
            let mut seen: Vec<usize> = batches.concat();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..len).collect::<Vec<_>>());
            prop_assert!(batches.iter().all(|b| !b.is_empty() && b.len() <= bs));
        }
    }
}
