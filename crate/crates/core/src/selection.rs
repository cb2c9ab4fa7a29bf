//! Choosing the regularization weights.
//!
//! Both weights derive from one scale `γ`: `α = γ K²` and
//! `β = α (labels per worker) / (labels per item)`. The scale is picked from a grid either
//! by k-fold held-out likelihood over the observed labels, or by accuracy on gold items.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::confusion::{fill_label_distribution, Mode};
use crate::error::{Error, Result};
use crate::evaluation;
use crate::labels::{summarize, GoldLabels, LabelMatrix, Observation};
use crate::math;
use crate::solver::{fit, FitResult, HyperParams};

pub const DEFAULT_GAMMA_GRID: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

/// `(α, β)` for scale `gamma`. `β / α` is `num_items / num_workers` over entities with labels.
pub fn resolve_hyperparams(gamma: f64, labels: &LabelMatrix) -> Result<(f64, f64)> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidHyperParams("gamma must be positive and finite"));
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let summary = summarize(labels, None);
    let k = labels.num_classes() as f64;
    let alpha = gamma * k * k;
    let beta = alpha * summary.num_items as f64 / summary.num_workers as f64;
    Ok((alpha, beta))
}

/// How a held-out label is scored under a model fitted on the other folds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeldOutScoring {
    /// `log Σ_c Q_train(Y_j = c) P(x_ij | c)`.
    #[default]
    Marginalized,
    /// `log P(x_ij | argmax_c Q_train(Y_j = c))`.
    HardLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    pub gamma_grid: Vec<f64>,
    pub seed: u64,
    /// Mode, variant and solver controls; `alpha`/`beta` are overwritten per grid point.
    pub hyper: HyperParams,
    pub scoring: HeldOutScoring,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            gamma_grid: DEFAULT_GAMMA_GRID.to_vec(),
            seed: 42,
            hyper: HyperParams::new(0.0, 0.0),
            scoring: HeldOutScoring::Marginalized,
        }
    }
}

impl CvConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.hyper.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidConfig("need at least 2 folds"));
        }
        if self.gamma_grid.is_empty() {
            return Err(Error::InvalidConfig("gamma grid is empty"));
        }
        if self.gamma_grid.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(Error::InvalidConfig("gamma values must be positive and finite"));
        }
        self.hyper.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaScore {
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Held-out log-likelihood of each fold.
    pub fold_loglik: Vec<f64>,
    pub mean_loglik: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub scores: Vec<GammaScore>,
    pub selected_gamma: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Fold index of every observation: a seeded shuffle dealt round-robin into `folds` subsets
/// whose sizes differ by at most one.
pub fn fold_assignment(num_observations: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..num_observations).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut assignment = alloc::vec![0; num_observations];
    for (pos, &obs) in order.iter().enumerate() {
        assignment[obs] = pos % folds;
    }
    assignment
}

/// Log-likelihood of `heldout` labels under a fit trained on the remaining labels.
pub fn heldout_log_likelihood<'a>(
    fit: &FitResult,
    heldout: impl IntoIterator<Item = &'a Observation>,
    scoring: HeldOutScoring,
) -> f64 {
    let k = fit.posterior.num_classes();
    let sigma = fit.params.workers.to_dense();
    let tau = fit.params.items.to_dense();
    let mut probs = alloc::vec![0.0; k];
    let mut terms = alloc::vec![0.0; k];
    let mut total = 0.0;
    for obs in heldout {
        let q = fit.posterior.row(obs.item);
        match scoring {
            HeldOutScoring::Marginalized => {
                for c in 0..k {
                    let log_z = fill_label_distribution(sigma.row(obs.worker, c), tau.row(obs.item, c), &mut probs);
                    let log_p = sigma.get(obs.worker, c, obs.label) + tau.get(obs.item, c, obs.label) - log_z;
                    terms[c] = if q[c] > 0.0 { math::ln(q[c]) + log_p } else { f64::NEG_INFINITY };
                }
                total += math::log_sum_exp(&terms);
            }
            HeldOutScoring::HardLabel => {
                let c = math::argmax(q);
                let log_z = fill_label_distribution(sigma.row(obs.worker, c), tau.row(obs.item, c), &mut probs);
                total += sigma.get(obs.worker, c, obs.label) + tau.get(obs.item, c, obs.label) - log_z;
            }
        }
    }
    total
}

/// Index of the best score; exact ties go to the smaller `γ`.
fn pick<T>(items: &[T], gamma: impl Fn(&T) -> f64, better: impl Fn(&T, &T) -> core::cmp::Ordering) -> usize {
    let mut best = 0;
    for idx in 1..items.len() {
        match better(&items[idx], &items[best]) {
            core::cmp::Ordering::Greater => best = idx,
            core::cmp::Ordering::Equal if gamma(&items[idx]) < gamma(&items[best]) => best = idx,
            _ => {}
        }
    }
    best
}

/// k-fold held-out likelihood cross-validation over the `γ` grid.
pub fn cross_validate(labels: &LabelMatrix, config: &CvConfig) -> Result<CvReport> {
    config.validate()?;
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let assignment = fold_assignment(labels.num_labels(), config.folds, config.seed);
    let trains: Vec<LabelMatrix> = (0..config.folds).map(|f| labels.subset(|pos| assignment[pos] != f)).collect();

    let mut scores = Vec::with_capacity(config.gamma_grid.len());
    for &gamma in &config.gamma_grid {
        let (alpha, beta) = resolve_hyperparams(gamma, labels)?;
        let hyper = HyperParams { alpha, beta, ..config.hyper };
        let mut fold_loglik = Vec::with_capacity(config.folds);
        for (f, train) in trains.iter().enumerate() {
            let fitted = fit(train, &hyper)?;
            let heldout =
                labels.observations().iter().enumerate().filter(|(pos, _)| assignment[*pos] == f).map(|(_, obs)| obs);
            fold_loglik.push(heldout_log_likelihood(&fitted, heldout, config.scoring));
        }
        let mean_loglik = fold_loglik.iter().sum::<f64>() / config.folds as f64;
        scores.push(GammaScore { gamma, alpha, beta, fold_loglik, mean_loglik });
    }

    let best = pick(&scores, |s| s.gamma, |a, b| a.mean_loglik.total_cmp(&b.mean_loglik));
    let chosen = &scores[best];
    Ok(CvReport { selected_gamma: chosen.gamma, alpha: chosen.alpha, beta: chosen.beta, scores })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMetric {
    ErrorRate,
    MeanSquareError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationScore {
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub metric: SelectionMetric,
    pub scores: Vec<ValidationScore>,
    pub selected_gamma: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Fits every grid point on all labels and keeps the one whose argmax labels best match
/// `gold`: error rate in multiclass mode, mean square error in ordinal mode.
pub fn validation_select(labels: &LabelMatrix, gold: &GoldLabels, config: &CvConfig) -> Result<ValidationReport> {
    config.validate()?;
    if gold.is_empty() {
        return Err(Error::NothingToScore);
    }
    let metric = match config.hyper.mode {
        Mode::Multiclass => SelectionMetric::ErrorRate,
        Mode::Ordinal => SelectionMetric::MeanSquareError,
    };
    let mut scores = Vec::with_capacity(config.gamma_grid.len());
    for &gamma in &config.gamma_grid {
        let (alpha, beta) = resolve_hyperparams(gamma, labels)?;
        let fitted = fit(labels, &HyperParams { alpha, beta, ..config.hyper })?;
        let predictions = fitted.labels();
        let value = match metric {
            SelectionMetric::ErrorRate => evaluation::error_rate(&predictions, gold)?,
            SelectionMetric::MeanSquareError => evaluation::mean_square_error(&predictions, gold)?,
        };
        scores.push(ValidationScore { gamma, alpha, beta, metric: value });
    }
    // lower is better
    let best = pick(&scores, |s| s.gamma, |a, b| b.metric.total_cmp(&a.metric));
    let chosen = &scores[best];
    Ok(ValidationReport { metric, selected_gamma: chosen.gamma, alpha: chosen.alpha, beta: chosen.beta, scores })
}
