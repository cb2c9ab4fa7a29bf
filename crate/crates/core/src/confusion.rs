//! Worker and item confusion scores, the softmax labeling model and the quadratic penalties.
//!
//! Scores enter the model only through `σ_i(c, ·) + τ_j(c, ·)` inside a softmax over the
//! observed label, so adding a constant to any row leaves every probability unchanged. The
//! quadratic penalty picks the minimum-norm representative; no explicit gauge is imposed.
//! The same holds for the ordinal parameterization, whose `4(K-1)` threshold scores per
//! entity are linearly dependent once expanded; they are regularized rather than constrained.

use alloc::borrow::Cow;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Dense `entities x K x K` score tensor, entry `(e, c, k)` for true class `c` and observed label `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseConfusion {
    entities: usize,
    classes: usize,
    values: Vec<f64>,
}

impl DenseConfusion {
    pub fn zeros(entities: usize, classes: usize) -> Self {
        Self { entities, classes, values: alloc::vec![0.0; entities * classes * classes] }
    }

    pub fn from_values(entities: usize, classes: usize, values: Vec<f64>) -> Result<Self> {
        let expected = entities * classes * classes;
        if values.len() != expected {
            return Err(Error::DimensionMismatch { what: "dense confusion", expected, found: values.len() });
        }
        Ok(Self { entities, classes, values })
    }

    pub fn num_entities(&self) -> usize {
        self.entities
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    #[inline]
    fn offset(&self, entity: usize, c: usize, k: usize) -> usize {
        (entity * self.classes + c) * self.classes + k
    }

    pub fn get(&self, entity: usize, c: usize, k: usize) -> f64 {
        self.values[self.offset(entity, c, k)]
    }

    pub fn set(&mut self, entity: usize, c: usize, k: usize, value: f64) {
        let o = self.offset(entity, c, k);
        self.values[o] = value;
    }

    pub fn add(&mut self, entity: usize, c: usize, k: usize, value: f64) {
        let o = self.offset(entity, c, k);
        self.values[o] += value;
    }

    /// Row `c` of entity `entity`'s matrix.
    pub fn row(&self, entity: usize, c: usize) -> &[f64] {
        let o = self.offset(entity, c, 0);
        &self.values[o..o + self.classes]
    }

    /// Full `K x K` matrix of one entity, row-major.
    pub fn matrix(&self, entity: usize) -> &[f64] {
        let kk = self.classes * self.classes;
        &self.values[entity * kk..(entity + 1) * kk]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// One of the four regions a reference label `s` cuts the `(c, k)` grid into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Region {
    /// `c >= s`, `k >= s`
    GeGe,
    /// `c >= s`, `k < s`
    GeLt,
    /// `c < s`, `k >= s`
    LtGe,
    /// `c < s`, `k < s`
    LtLt,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::GeGe, Region::GeLt, Region::LtGe, Region::LtLt];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn of(c: usize, k: usize, s: usize) -> Region {
        match (c >= s, k >= s) {
            (true, true) => Region::GeGe,
            (true, false) => Region::GeLt,
            (false, true) => Region::LtGe,
            (false, false) => Region::LtLt,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Region::GeGe => "ge_ge",
            Region::GeLt => "ge_lt",
            Region::LtGe => "lt_ge",
            Region::LtLt => "lt_lt",
        }
    }

    pub fn from_name(name: &str) -> Option<Region> {
        Region::ALL.into_iter().find(|r| r.name() == name)
    }
}

/// Structured ordinal scores: `entities x (K-1) x 4`, one score per threshold `s = 1..K-1` and region.
#[derive(Debug, Clone, PartialEq)]
pub struct OrdinalConfusion {
    entities: usize,
    classes: usize,
    values: Vec<f64>,
}

impl OrdinalConfusion {
    pub fn zeros(entities: usize, classes: usize) -> Self {
        Self { entities, classes, values: alloc::vec![0.0; entities * (classes - 1) * 4] }
    }

    pub fn from_values(entities: usize, classes: usize, values: Vec<f64>) -> Result<Self> {
        let expected = entities * (classes - 1) * 4;
        if values.len() != expected {
            return Err(Error::DimensionMismatch { what: "ordinal confusion", expected, found: values.len() });
        }
        Ok(Self { entities, classes, values })
    }

    pub fn num_entities(&self) -> usize {
        self.entities
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    #[inline]
    fn offset(&self, entity: usize, s: usize, region: Region) -> usize {
        debug_assert!(s >= 1 && s < self.classes);
        (entity * (self.classes - 1) + (s - 1)) * 4 + region.index()
    }

    /// Score for threshold `s` (`1 <= s < K`) and `region`.
    pub fn get(&self, entity: usize, s: usize, region: Region) -> f64 {
        self.values[self.offset(entity, s, region)]
    }

    pub fn set(&mut self, entity: usize, s: usize, region: Region, value: f64) {
        let o = self.offset(entity, s, region);
        self.values[o] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Dense scores `σ(c, k) = Σ_s Σ_region score(s, region) I((c, k) ∈ region(s))`.
pub fn expand_ordinal(params: &OrdinalConfusion) -> DenseConfusion {
    let k = params.classes;
    let mut dense = DenseConfusion::zeros(params.entities, k);
    for e in 0..params.entities {
        for c in 0..k {
            for obs in 0..k {
                let mut v = 0.0;
                for s in 1..k {
                    v += params.get(e, s, Region::of(c, obs, s));
                }
                dense.set(e, c, obs, v);
            }
        }
    }
    dense
}

/// Adjoint of [`expand_ordinal`]: folds a dense gradient onto the ordinal scores
/// by summing each region's cells.
pub fn fold_to_ordinal(dense: &DenseConfusion) -> OrdinalConfusion {
    let k = dense.classes;
    let mut out = OrdinalConfusion::zeros(dense.entities, k);
    for e in 0..dense.entities {
        for s in 1..k {
            for c in 0..k {
                for obs in 0..k {
                    let o = out.offset(e, s, Region::of(c, obs, s));
                    out.values[o] += dense.get(e, c, obs);
                }
            }
        }
    }
    out
}

/// Parameterization of the confusion scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Unrestricted `K x K` matrices.
    #[default]
    Multiclass,
    /// Threshold-structured matrices for ordered classes.
    Ordinal,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfusionTensor {
    Dense(DenseConfusion),
    Ordinal(OrdinalConfusion),
}

impl ConfusionTensor {
    pub fn zeros(mode: Mode, entities: usize, classes: usize) -> Self {
        match mode {
            Mode::Multiclass => ConfusionTensor::Dense(DenseConfusion::zeros(entities, classes)),
            Mode::Ordinal => ConfusionTensor::Ordinal(OrdinalConfusion::zeros(entities, classes)),
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            ConfusionTensor::Dense(_) => Mode::Multiclass,
            ConfusionTensor::Ordinal(_) => Mode::Ordinal,
        }
    }

    pub fn num_entities(&self) -> usize {
        match self {
            ConfusionTensor::Dense(d) => d.entities,
            ConfusionTensor::Ordinal(o) => o.entities,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            ConfusionTensor::Dense(d) => d.classes,
            ConfusionTensor::Ordinal(o) => o.classes,
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            ConfusionTensor::Dense(d) => &d.values,
            ConfusionTensor::Ordinal(o) => &o.values,
        }
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        match self {
            ConfusionTensor::Dense(d) => &mut d.values,
            ConfusionTensor::Ordinal(o) => &mut o.values,
        }
    }

    /// Dense scores as seen by the labeling model.
    pub fn to_dense(&self) -> Cow<'_, DenseConfusion> {
        match self {
            ConfusionTensor::Dense(d) => Cow::Borrowed(d),
            ConfusionTensor::Ordinal(o) => Cow::Owned(expand_ordinal(o)),
        }
    }

    /// Pulls a gradient with respect to dense scores back onto this parameterization.
    pub fn pull_back(&self, dense_gradient: DenseConfusion) -> ConfusionTensor {
        match self {
            ConfusionTensor::Dense(_) => ConfusionTensor::Dense(dense_gradient),
            ConfusionTensor::Ordinal(_) => ConfusionTensor::Ordinal(fold_to_ordinal(&dense_gradient)),
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.values_mut().iter_mut().for_each(|v| *v = value);
    }
}

/// Worker scores `σ` and item scores `τ` in a shared parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub workers: ConfusionTensor,
    pub items: ConfusionTensor,
}

impl ModelParams {
    pub fn zeros(mode: Mode, num_workers: usize, num_items: usize, num_classes: usize) -> Self {
        Self {
            workers: ConfusionTensor::zeros(mode, num_workers, num_classes),
            items: ConfusionTensor::zeros(mode, num_items, num_classes),
        }
    }

    pub fn mode(&self) -> Mode {
        self.workers.mode()
    }

    pub fn num_classes(&self) -> usize {
        self.workers.num_classes()
    }

    /// `self += step * direction`.
    pub fn add_scaled(&mut self, direction: &ModelParams, step: f64) {
        for (v, d) in self.workers.values_mut().iter_mut().zip(direction.workers.values()) {
            *v += step * d;
        }
        for (v, d) in self.items.values_mut().iter_mut().zip(direction.items.values()) {
            *v += step * d;
        }
    }

    pub fn dot(&self, other: &ModelParams) -> f64 {
        let w: f64 = self.workers.values().iter().zip(other.workers.values()).map(|(a, b)| a * b).sum();
        let i: f64 = self.items.values().iter().zip(other.items.values()).map(|(a, b)| a * b).sum();
        w + i
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    pub fn is_finite(&self) -> bool {
        self.workers.values().iter().chain(self.items.values()).all(|v| v.is_finite())
    }
}

/// Penalty applied to the worker scores. Item scores always use the Euclidean penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegularizerVariant {
    #[default]
    Euclidean,
    /// Per-worker deviations from the mean diagonal and mean off-diagonal score.
    /// Multiclass only.
    Centered,
}

/// Value and gradient of `weight * Ω(params)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Penalty {
    pub value: f64,
    pub gradient: ConfusionTensor,
}

/// Quadratic penalty of `params` scaled by `weight`.
///
/// Euclidean: `weight/2 Σ v²`. Centered: per entity,
/// `weight/2 [Σ_c (v(c,c) - mean_diag)² + Σ_{c≠k} (v(c,k) - mean_off)²]`.
pub fn regularizer_value_and_gradient(
    params: &ConfusionTensor,
    variant: RegularizerVariant,
    weight: f64,
) -> Result<Penalty> {
    if !(weight >= 0.0) {
        return Err(Error::InvalidHyperParams("regularization weight must be non-negative"));
    }
    match (variant, params) {
        (RegularizerVariant::Euclidean, _) => {
            let mut gradient = params.clone();
            let mut sum_sq = 0.0;
            for v in gradient.values_mut() {
                sum_sq += *v * *v;
                *v *= weight;
            }
            Ok(Penalty { value: 0.5 * weight * sum_sq, gradient })
        }
        (RegularizerVariant::Centered, ConfusionTensor::Ordinal(_)) => Err(Error::CenteredInOrdinalMode),
        (RegularizerVariant::Centered, ConfusionTensor::Dense(dense)) => {
            let k = dense.classes;
            let mut gradient = DenseConfusion::zeros(dense.entities, k);
            let mut value = 0.0;
            for e in 0..dense.entities {
                let m = dense.matrix(e);
                let mut diag = 0.0;
                let mut off = 0.0;
                for c in 0..k {
                    for obs in 0..k {
                        if c == obs {
                            diag += m[c * k + obs];
                        } else {
                            off += m[c * k + obs];
                        }
                    }
                }
                let diag_mean = diag / k as f64;
                let off_mean = off / (k * (k - 1)) as f64;
                for c in 0..k {
                    for obs in 0..k {
                        let mean = if c == obs { diag_mean } else { off_mean };
                        let dev = m[c * k + obs] - mean;
                        value += dev * dev;
                        gradient.set(e, c, obs, weight * dev);
                    }
                }
            }
            Ok(Penalty { value: 0.5 * weight * value, gradient: ConfusionTensor::Dense(gradient) })
        }
    }
}

/// Writes `P(k | c) ∝ exp[σ(c, k) + τ(c, k)]` for one true class into `out`, returning `ln Z`.
#[inline]
pub(crate) fn fill_label_distribution(sigma_row: &[f64], tau_row: &[f64], out: &mut [f64]) -> f64 {
    for ((o, s), t) in out.iter_mut().zip(sigma_row).zip(tau_row) {
        *o = s + t;
    }
    math::softmax_in_place(out)
}

/// Distribution over observed labels for true class `class`, given one worker's and one
/// item's `K x K` score matrices (row-major).
pub fn label_distribution(sigma: &[f64], tau: &[f64], num_classes: usize, class: usize) -> Vec<f64> {
    let row = class * num_classes..(class + 1) * num_classes;
    let mut out = alloc::vec![0.0; num_classes];
    fill_label_distribution(&sigma[row.clone()], &tau[row], &mut out);
    out
}
