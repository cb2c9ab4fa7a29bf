use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Row-stochastic `n x K` matrix of per-item class probabilities `Q(Y_j = c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    num_classes: usize,
    probs: Vec<f64>,
}

impl Posterior {
    pub fn uniform(num_items: usize, num_classes: usize) -> Self {
        let p = 1.0 / num_classes as f64;
        Self { num_classes, probs: alloc::vec![p; num_items * num_classes] }
    }

    /// Validates that every row is a probability vector (within 1e-9).
    pub fn from_rows(probs: Vec<f64>, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::TooFewClasses(num_classes));
        }
        if !probs.len().is_multiple_of(num_classes) {
            return Err(Error::DimensionMismatch {
                what: "posterior length",
                expected: (probs.len() / num_classes + 1) * num_classes,
                found: probs.len(),
            });
        }
        for row in probs.chunks(num_classes) {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) || math::abs(sum - 1.0) > 1e-9 {
                return Err(Error::InvalidConfig("posterior rows must be probability vectors"));
            }
        }
        Ok(Self { num_classes, probs })
    }

    /// Deterministic posterior placing all mass on `labels[j]`.
    pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<Self> {
        let mut probs = alloc::vec![0.0; labels.len() * num_classes];
        for (j, &label) in labels.iter().enumerate() {
            if label >= num_classes {
                return Err(Error::LabelOutOfRange { label, num_classes });
            }
            probs[j * num_classes + label] = 1.0;
        }
        Ok(Self { num_classes, probs })
    }

    /// Rows proportional to non-negative weights; all-zero rows become uniform.
    pub(crate) fn from_weights(mut weights: Vec<f64>, num_classes: usize) -> Self {
        let uniform = 1.0 / num_classes as f64;
        for row in weights.chunks_mut(num_classes) {
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                row.iter_mut().for_each(|p| *p /= sum);
            } else {
                row.iter_mut().for_each(|p| *p = uniform);
            }
        }
        Self { num_classes, probs: weights }
    }

    /// Rows from unnormalized log weights (normalized with max subtraction).
    pub(crate) fn from_log_weights(mut logs: Vec<f64>, num_classes: usize) -> Self {
        let uniform = 1.0 / num_classes as f64;
        for row in logs.chunks_mut(num_classes) {
            if row.iter().all(|v| *v == f64::NEG_INFINITY) {
                row.iter_mut().for_each(|p| *p = uniform);
            } else {
                math::softmax_in_place(row);
            }
        }
        Self { num_classes, probs: logs }
    }

    pub fn num_items(&self) -> usize {
        self.probs.len() / self.num_classes
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, item: usize) -> &[f64] {
        &self.probs[item * self.num_classes..(item + 1) * self.num_classes]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Argmax class per item, lowest index on exact ties.
    pub fn argmax_labels(&self) -> Vec<usize> {
        self.probs.chunks(self.num_classes).map(math::argmax).collect()
    }

    pub fn max_prob(&self, item: usize) -> f64 {
        self.row(item).iter().copied().fold(0.0, f64::max)
    }

    /// Deterministic posterior at the argmax labels.
    pub fn rounded(&self) -> Self {
        Self::one_hot(&self.argmax_labels(), self.num_classes).expect("argmax is in range")
    }

    /// `H(Y) = -Σ_j Σ_c Q log Q` with `0 log 0 = 0`.
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().map(|&p| math::xlogx(p)).sum::<f64>()
    }

    /// Largest `|Σ_c Q(Y_j = c) - 1|` over rows.
    pub fn max_row_deviation(&self) -> f64 {
        self.probs.chunks(self.num_classes).map(|row| math::abs(row.iter().sum::<f64>() - 1.0)).fold(0.0, f64::max)
    }
}
