//! Discriminant feature test: rank features by the best weighted binary
//! cross-entropy reachable with a single split, keep the lowest-loss ones.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform candidate split points tried per feature.
pub const SPLIT_CANDIDATES: usize = 31;

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionIndex {
    /// Selected feature indices, ascending loss (ties: lower index first).
    pub indices: Vec<usize>,
    /// Loss of each selected feature, same order as `indices`.
    pub losses: Vec<f64>,
}

impl SelectionIndex {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn parameter_count(&self) -> usize {
        self.indices.len()
    }

    pub fn apply<T: Real>(&self, raw: &[T]) -> Vec<T> {
        self.indices.iter().map(|&i| raw[i]).collect()
    }
}

/// Binary entropy in bits.
pub(crate) fn entropy(pos: f64, total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let p = pos / total;
    let mut h = 0.0;
    if p > 0.0 {
        h -= p * p.log2();
    }
    if p < 1.0 {
        h -= (1.0 - p) * (1.0 - p).log2();
    }
    h
}

/// Candidate thresholds `min + (max - min) * j / 32`, `j = 1..=31`.
pub(crate) fn split_points(min: f64, max: f64) -> Vec<f64> {
    let bins = (SPLIT_CANDIDATES + 1) as f64;
    (1..=SPLIT_CANDIDATES)
        .map(|j| min + (max - min) * j as f64 / bins)
        .collect()
}

/// Minimum over candidate splits of the sample-weighted entropy of the two
/// partitions `{x <= t}` and `{x > t}`.
pub fn feature_loss<T: Real>(values: &[T], labels: &[bool]) -> f64 {
    let n = values.len() as f64;
    let total_pos = labels.iter().filter(|&&l| l).count() as f64;
    let prior = entropy(total_pos, n);
    let mut order: Vec<(f64, bool)> = values
        .iter()
        .zip(labels)
        .map(|(v, l)| (v.as_f64(), *l))
        .collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let (min, max) = (order[0].0, order[order.len() - 1].0);
    if !(max > min) {
        return prior;
    }
    let mut best = f64::INFINITY;
    let mut cursor = 0usize;
    let mut left_pos = 0.0;
    for t in split_points(min, max) {
        while cursor < order.len() && order[cursor].0 <= t {
            if order[cursor].1 {
                left_pos += 1.0;
            }
            cursor += 1;
        }
        let left = cursor as f64;
        let right = n - left;
        let loss = (left * entropy(left_pos, left) + right * entropy(total_pos - left_pos, right)) / n;
        if loss < best {
            best = loss;
        }
    }
    best
}

/// Selects the `k` most discriminant columns of `samples` (rows are samples).
pub fn dft_select<T: Real>(samples: &[Vec<T>], labels: &[bool], k: usize) -> Result<SelectionIndex> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            need: 2,
            got: samples.len(),
        });
    }
    if samples.len() != labels.len() {
        return Err(Error::Shape {
            expected: format!("{} labels", samples.len()),
            got: format!("{}", labels.len()),
        });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass);
    }
    let dims = samples[0].len();
    let mut column = vec![T::zero(); samples.len()];
    let mut scored: Vec<(usize, f64)> = (0..dims)
        .map(|f| {
            for (dst, row) in column.iter_mut().zip(samples) {
                *dst = row[f];
            }
            (f, feature_loss(&column, labels))
        })
        .collect();
    scored.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    scored.truncate(k.min(dims));
    Ok(SelectionIndex {
        indices: scored.iter().map(|s| s.0).collect(),
        losses: scored.iter().map(|s| s.1).collect(),
    })
}
