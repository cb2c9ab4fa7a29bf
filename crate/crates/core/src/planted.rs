//! Synthetic crowds drawn from known per-worker confusion matrices.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::labels::{GoldLabels, LabelMatrix};

/// How each worker spreads its error mass `1 - accuracy` over the wrong classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorPattern {
    /// Evenly across all wrong classes.
    Uniform,
    /// A share `major` of the error mass goes to one wrong class drawn per worker and true
    /// class; the rest is spread evenly over the remaining wrong classes.
    Skewed { major: f64 },
}

/// Per-worker diagonal accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Accuracy {
    Fixed(f64),
    /// Drawn uniformly from `[low, high)` for every worker.
    Range {
        low: f64,
        high: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedConfig {
    pub num_workers: usize,
    pub num_items: usize,
    pub num_classes: usize,
    /// Distinct workers drawn per item.
    pub labels_per_item: usize,
    pub accuracy: Accuracy,
    pub errors: ErrorPattern,
    pub seed: u64,
}

impl PlantedConfig {
    pub fn new(num_workers: usize, num_items: usize, num_classes: usize, labels_per_item: usize) -> Self {
        Self {
            num_workers,
            num_items,
            num_classes,
            labels_per_item,
            accuracy: Accuracy::Fixed(0.8),
            errors: ErrorPattern::Uniform,
            seed: 0,
        }
    }

    pub fn with_accuracy(mut self, accuracy: Accuracy) -> Self {
        self.accuracy = accuracy;
        self
    }

    pub fn with_errors(mut self, errors: ErrorPattern) -> Self {
        self.errors = errors;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedData {
    pub labels: LabelMatrix,
    pub truth: Vec<usize>,
    pub gold: GoldLabels,
    /// The generating `workers x K x K` confusion matrices, row-major.
    pub worker_confusion: Vec<f64>,
}

fn sample(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (idx, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return idx;
        }
    }
    probs.len() - 1
}

pub fn generate(config: &PlantedConfig) -> Result<PlantedData> {
    let k = config.num_classes;
    if k < 2 {
        return Err(Error::TooFewClasses(k));
    }
    if config.labels_per_item > config.num_workers {
        return Err(Error::InvalidConfig("labels_per_item exceeds num_workers"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let kk = k * k;
    let mut worker_confusion = alloc::vec![0.0; config.num_workers * kk];
    for w in 0..config.num_workers {
        let acc = match config.accuracy {
            Accuracy::Fixed(a) => a,
            Accuracy::Range { low, high } => low + (high - low) * rng.random::<f64>(),
        };
        if !(0.0..=1.0).contains(&acc) {
            return Err(Error::InvalidConfig("accuracy must lie in [0, 1]"));
        }
        for c in 0..k {
            let row = &mut worker_confusion[w * kk + c * k..w * kk + (c + 1) * k];
            row[c] = acc;
            let wrong: Vec<usize> = (0..k).filter(|&x| x != c).collect();
            match config.errors {
                ErrorPattern::Uniform => {
                    for &x in &wrong {
                        row[x] = (1.0 - acc) / (k - 1) as f64;
                    }
                }
                ErrorPattern::Skewed { major } => {
                    let favourite = wrong[rng.random_range(0..wrong.len())];
                    let rest = if wrong.len() > 1 { (1.0 - major) / (wrong.len() - 1) as f64 } else { 0.0 };
                    let major = if wrong.len() > 1 { major } else { 1.0 };
                    for &x in &wrong {
                        row[x] = (1.0 - acc) * if x == favourite { major } else { rest };
                    }
                }
            }
        }
    }

    let truth: Vec<usize> = (0..config.num_items).map(|_| rng.random_range(0..k)).collect();
    let mut workers: Vec<usize> = (0..config.num_workers).collect();
    let mut triples = Vec::with_capacity(config.num_items * config.labels_per_item);
    for (item, &t) in truth.iter().enumerate() {
        let (chosen, _) = workers.partial_shuffle(&mut rng, config.labels_per_item);
        let mut chosen = chosen.to_vec();
        chosen.sort_unstable();
        for w in chosen {
            let row = &worker_confusion[w * kk + t * k..w * kk + (t + 1) * k];
            triples.push((w, item, sample(&mut rng, row)));
        }
    }
    let labels = LabelMatrix::from_indices(k, config.num_workers, config.num_items, &triples)?;
    let gold = GoldLabels::from_vec(&truth, k)?;
    Ok(PlantedData { labels, truth, gold, worker_confusion })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let cfg = PlantedConfig::new(30, 200, 3, 10).with_seed(3);
        let a = generate(&cfg).unwrap();
        assert_eq!(a.labels.num_labels(), 2000);
        assert!((0..200).all(|j| a.labels.item_label_count(j) == 10));
        assert_eq!(a, generate(&cfg).unwrap());
    }

    #[test]
    fn confusion_rows_are_stochastic() {
        let cfg = PlantedConfig::new(5, 10, 4, 3).with_errors(ErrorPattern::Skewed { major: 0.7 });
        let d = generate(&cfg).unwrap();
        for row in d.worker_confusion.chunks(4) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn too_many_labels_per_item() {
        assert!(generate(&PlantedConfig::new(3, 5, 2, 4)).is_err());
    }
}
