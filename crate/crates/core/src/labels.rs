//! Sparse crowd label storage, dataset summaries and empirical confusion counts.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::confusion::DenseConfusion;
use crate::error::{Error, Result};
use crate::posterior::Posterior;

/// Bidirectional map between external string IDs and dense indices.
///
/// Indices are assigned in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Interner {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    /// Interner holding `prefix0 .. prefix{len-1}`.
    pub fn numbered(prefix: &str, len: usize) -> Self {
        let mut interner = Self::new();
        for idx in 0..len {
            interner.intern(&format!("{prefix}{idx}"));
        }
        interner
    }

    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&idx) = self.index.get(name) {
            return idx;
        }
        let idx = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), idx);
        idx
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// One crowd label: worker `worker` said item `item` has class `label`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Observation {
    pub worker: usize,
    pub item: usize,
    pub label: usize,
}

/// Immutable sparse worker x item label matrix with `K` classes encoded `0..K`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    num_classes: usize,
    workers: Interner,
    items: Interner,
    observations: Vec<Observation>,
    // CSR-style index from item to observation positions
    item_offsets: Vec<usize>,
    item_obs: Vec<usize>,
}

impl LabelMatrix {
    /// Builds a matrix from already-interned observations, validating every invariant.
    pub fn new(num_classes: usize, workers: Interner, items: Interner, observations: Vec<Observation>) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::TooFewClasses(num_classes));
        }
        let mut seen = BTreeSet::new();
        for obs in &observations {
            if obs.worker >= workers.len() {
                return Err(Error::UnknownIndex { what: "worker", index: obs.worker, len: workers.len() });
            }
            if obs.item >= items.len() {
                return Err(Error::UnknownIndex { what: "item", index: obs.item, len: items.len() });
            }
            if obs.label >= num_classes {
                return Err(Error::LabelOutOfRange { label: obs.label, num_classes });
            }
            if !seen.insert((obs.worker, obs.item)) {
                return Err(Error::DuplicateObservation {
                    worker: workers.name(obs.worker).to_string(),
                    item: items.name(obs.item).to_string(),
                });
            }
        }

        let mut counts = alloc::vec![0usize; items.len() + 1];
        for obs in &observations {
            counts[obs.item + 1] += 1;
        }
        for j in 0..items.len() {
            counts[j + 1] += counts[j];
        }
        let item_offsets = counts;
        let mut fill = item_offsets.clone();
        let mut item_obs = alloc::vec![0usize; observations.len()];
        for (pos, obs) in observations.iter().enumerate() {
            item_obs[fill[obs.item]] = pos;
            fill[obs.item] += 1;
        }

        Ok(Self { num_classes, workers, items, observations, item_offsets, item_obs })
    }

    /// Matrix over `w0..`/`i0..` generated IDs from index triples `(worker, item, label)`.
    pub fn from_indices(
        num_classes: usize,
        num_workers: usize,
        num_items: usize,
        triples: &[(usize, usize, usize)],
    ) -> Result<Self> {
        let observations = triples.iter().map(|&(worker, item, label)| Observation { worker, item, label }).collect();
        Self::new(num_classes, Interner::numbered("w", num_workers), Interner::numbered("i", num_items), observations)
    }

    /// Matrix from string-keyed triples, interning IDs in first-appearance order.
    pub fn from_triples<W: AsRef<str>, I: AsRef<str>>(num_classes: usize, triples: &[(W, I, usize)]) -> Result<Self> {
        let mut workers = Interner::new();
        let mut items = Interner::new();
        let observations = triples
            .iter()
            .map(|(w, i, label)| Observation {
                worker: workers.intern(w.as_ref()),
                item: items.intern(i.as_ref()),
                label: *label,
            })
            .collect();
        Self::new(num_classes, workers, items, observations)
    }

    /// Same ID maps, keeping only the observations at positions where `keep` is true.
    pub fn subset<F: FnMut(usize) -> bool>(&self, mut keep: F) -> Self {
        let observations =
            self.observations.iter().enumerate().filter(|(pos, _)| keep(*pos)).map(|(_, obs)| *obs).collect();
        Self::new(self.num_classes, self.workers.clone(), self.items.clone(), observations)
            .expect("subset of a valid matrix is valid")
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_workers(&self) -> usize {
        self.workers.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn num_labels(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn worker_ids(&self) -> &Interner {
        &self.workers
    }

    pub fn item_ids(&self) -> &Interner {
        &self.items
    }

    /// Observations on item `item`, in storage order.
    pub fn item_observations(&self, item: usize) -> impl Iterator<Item = &Observation> + '_ {
        self.item_obs[self.item_offsets[item]..self.item_offsets[item + 1]]
            .iter()
            .map(move |&pos| &self.observations[pos])
    }

    pub fn item_label_count(&self, item: usize) -> usize {
        self.item_offsets[item + 1] - self.item_offsets[item]
    }

    /// Per-item vote counts, `n x K` row-major.
    pub fn vote_counts(&self) -> Vec<usize> {
        let k = self.num_classes;
        let mut counts = alloc::vec![0usize; self.num_items() * k];
        for obs in &self.observations {
            counts[obs.item * k + obs.label] += 1;
        }
        counts
    }

    /// Workers with at least one observation.
    pub fn active_workers(&self) -> usize {
        let mut active = alloc::vec![false; self.num_workers()];
        for obs in &self.observations {
            active[obs.worker] = true;
        }
        active.iter().filter(|&&a| a).count()
    }

    /// Items with at least one observation.
    pub fn active_items(&self) -> usize {
        (0..self.num_items()).filter(|&j| self.item_label_count(j) > 0).count()
    }
}

/// Known true classes for a subset of items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldLabels {
    num_classes: usize,
    labels: Vec<Option<usize>>,
}

impl GoldLabels {
    pub fn new(num_items: usize, num_classes: usize) -> Self {
        Self { num_classes, labels: alloc::vec![None; num_items] }
    }

    /// Gold labels from a dense per-item vector.
    pub fn from_vec(labels: &[usize], num_classes: usize) -> Result<Self> {
        let mut gold = Self::new(labels.len(), num_classes);
        for (item, &label) in labels.iter().enumerate() {
            gold.insert(item, label)?;
        }
        Ok(gold)
    }

    pub fn insert(&mut self, item: usize, label: usize) -> Result<()> {
        if item >= self.labels.len() {
            return Err(Error::UnknownIndex { what: "gold item", index: item, len: self.labels.len() });
        }
        if label >= self.num_classes {
            return Err(Error::LabelOutOfRange { label, num_classes: self.num_classes });
        }
        self.labels[item] = Some(label);
        Ok(())
    }

    pub fn get(&self, item: usize) -> Option<usize> {
        self.labels.get(item).copied().flatten()
    }

    pub fn num_items(&self) -> usize {
        self.labels.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// `(item, class)` pairs in item order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.labels.iter().enumerate().filter_map(|(j, l)| l.map(|l| (j, l)))
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.iter().all(Option::is_none)
    }
}

/// Dataset summary row: classes, items, workers, labels and the per-entity means.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub num_classes: usize,
    pub num_items: usize,
    pub num_workers: usize,
    pub num_labels: usize,
    pub labels_per_worker: f64,
    pub labels_per_item: f64,
    /// Mean of `label != gold` over observations on gold items.
    pub worker_error_rate: Option<f64>,
}

/// Counts and means over items/workers that carry at least one label.
pub fn summarize(labels: &LabelMatrix, gold: Option<&GoldLabels>) -> DatasetSummary {
    let num_items = labels.active_items();
    let num_workers = labels.active_workers();
    let num_labels = labels.num_labels();
    let mean = |count: usize| if count == 0 { 0.0 } else { num_labels as f64 / count as f64 };

    let worker_error_rate = gold.and_then(|gold| {
        let mut scored = 0usize;
        let mut wrong = 0usize;
        for obs in labels.observations() {
            if let Some(truth) = gold.get(obs.item) {
                scored += 1;
                if truth != obs.label {
                    wrong += 1;
                }
            }
        }
        (scored > 0).then(|| wrong as f64 / scored as f64)
    });

    DatasetSummary {
        num_classes: labels.num_classes(),
        num_items,
        num_workers,
        num_labels,
        labels_per_worker: mean(num_workers),
        labels_per_item: mean(num_items),
        worker_error_rate,
    }
}

/// Posterior-weighted observed confusion counts, per worker and per item.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalConfusion {
    pub workers: DenseConfusion,
    pub items: DenseConfusion,
}

/// Entry `(i, c, k)` of the worker view is `Σ_j Q(Y_j = c) I(x_ij = k)`; the item view sums over workers.
pub fn empirical_confusion(labels: &LabelMatrix, posterior: &Posterior) -> Result<EmpiricalConfusion> {
    let k = labels.num_classes();
    check_posterior_shape(labels, posterior)?;
    let mut workers = DenseConfusion::zeros(labels.num_workers(), k);
    let mut items = DenseConfusion::zeros(labels.num_items(), k);
    for obs in labels.observations() {
        for (c, &q) in posterior.row(obs.item).iter().enumerate() {
            workers.add(obs.worker, c, obs.label, q);
            items.add(obs.item, c, obs.label, q);
        }
    }
    Ok(EmpiricalConfusion { workers, items })
}

pub(crate) fn check_posterior_shape(labels: &LabelMatrix, posterior: &Posterior) -> Result<()> {
    if posterior.num_items() != labels.num_items() {
        return Err(Error::DimensionMismatch {
            what: "posterior rows",
            expected: labels.num_items(),
            found: posterior.num_items(),
        });
    }
    if posterior.num_classes() != labels.num_classes() {
        return Err(Error::DimensionMismatch {
            what: "posterior classes",
            expected: labels.num_classes(),
            found: posterior.num_classes(),
        });
    }
    Ok(())
}
