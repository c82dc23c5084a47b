//! k-nearest-neighbour classification under Euclidean distance.
//!
//! Neighbours are ranked by `(distance, label, row index)`, and the vote goes
//! to the most frequent label among the first `k`; equal vote counts go to
//! the smallest label. Because label precedes row index in the ranking, the
//! prediction does not depend on the order of the training rows.

use std::cmp::Ordering;

use crate::classifier::Classifier;
use crate::dataset::{FeatureMatrix, NUM_CLASSES};
use crate::error::{Error, Result};

/// Sweep range used by the experiment runner.
pub const K_RANGE: std::ops::RangeInclusive<usize> = 1..=30;

#[derive(Debug, Clone)]
pub struct KnnModel {
    train: FeatureMatrix,
    k: usize,
}

impl KnnModel {
    pub fn new(train: FeatureMatrix, k: usize) -> Result<Self> {
        if k == 0 || k > train.len() {
            return Err(Error::InvalidParameter(format!(
                "k = {k} must be in 1..={}",
                train.len()
            )));
        }
        Ok(KnnModel { train, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }
}

#[derive(Debug, Clone, Copy)]
struct Neighbour {
    dist: f64,
    label: usize,
    index: usize,
}

fn rank(a: &Neighbour, b: &Neighbour) -> Ordering {
    a.dist
        .total_cmp(&b.dist)
        .then(a.label.cmp(&b.label))
        .then(a.index.cmp(&b.index))
}

impl Classifier for KnnModel {
    fn n_features(&self) -> usize {
        self.train.n_features
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        self.check_dimension(x)?;
        let mut neighbours: Vec<Neighbour> = self
            .train
            .rows
            .iter()
            .enumerate()
            .map(|(index, row)| Neighbour {
                dist: Self::squared_distance(&row.features, x),
                label: row.label,
                index,
            })
            .collect();
        // keys are unique, so the k smallest form the same set as a full sort
        if self.k < neighbours.len() {
            neighbours.select_nth_unstable_by(self.k - 1, rank);
        }
        let mut votes = [0usize; NUM_CLASSES];
        for n in &neighbours[..self.k] {
            votes[n.label] += 1;
        }
        let best = votes.iter().copied().max().unwrap_or(0);
        Ok(votes.iter().position(|&v| v == best).unwrap_or(0))
    }
}
