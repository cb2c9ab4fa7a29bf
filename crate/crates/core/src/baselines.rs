//! Reference aggregators: majority voting and Dawid-Skene EM.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::labels::LabelMatrix;
use crate::math;
use crate::posterior::Posterior;

/// Majority vote result.
#[derive(Debug, Clone, PartialEq)]
pub struct MajorityVote {
    /// Normalized vote counts; uniform for unlabeled items.
    pub posterior: Posterior,
    /// Argmax per item, lowest class on ties; class 0 for unlabeled items.
    pub labels: Vec<usize>,
    /// Items that received no labels.
    pub unlabeled: Vec<usize>,
}

pub fn majority_vote(labels: &LabelMatrix) -> MajorityVote {
    let posterior = crate::solver::initialize_posterior(labels);
    let predicted = posterior.argmax_labels();
    let unlabeled = (0..labels.num_items()).filter(|&j| labels.item_label_count(j) == 0).collect();
    MajorityVote { posterior, labels: predicted, unlabeled }
}

/// Per-worker row-stochastic confusion matrices `p_i(c, k)` and a class prior.
#[derive(Debug, Clone, PartialEq)]
pub struct DsParams {
    pub num_classes: usize,
    /// `workers x K x K`, row-major.
    pub confusion: Vec<f64>,
    pub prior: Vec<f64>,
}

impl DsParams {
    pub fn worker_matrix(&self, worker: usize) -> &[f64] {
        let kk = self.num_classes * self.num_classes;
        &self.confusion[worker * kk..(worker + 1) * kk]
    }

    pub fn num_workers(&self) -> usize {
        self.confusion.len() / (self.num_classes * self.num_classes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsOptions {
    pub max_iters: usize,
    /// Stop once the change in the (smoothed) log-likelihood is below `tol` times its magnitude.
    pub tol: f64,
    /// Pseudo-count added to every confusion cell in the M-step.
    pub smoothing: f64,
    /// Hold the class prior uniform instead of re-estimating it.
    pub uniform_prior: bool,
}

impl Default for DsOptions {
    fn default() -> Self {
        Self { max_iters: 200, tol: 1e-8, smoothing: 0.01, uniform_prior: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsResult {
    pub posterior: Posterior,
    pub params: DsParams,
    /// Marginal log-likelihood plus `smoothing Σ log p_i(c, k)` after every M-step.
    /// With zero smoothing this is the plain marginal log-likelihood.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// M-step: `p_i(c, k) ∝ smoothing + Σ_j Q(Y_j = c) I(x_ij = k)`, prior `∝ Σ_j Q(Y_j = c)`
/// over labeled items. Rows without any mass become uniform.
pub fn ds_m_step(labels: &LabelMatrix, posterior: &Posterior, options: &DsOptions) -> DsParams {
    let k = labels.num_classes();
    let kk = k * k;
    let mut confusion = alloc::vec![options.smoothing; labels.num_workers() * kk];
    for obs in labels.observations() {
        for (c, &q) in posterior.row(obs.item).iter().enumerate() {
            confusion[obs.worker * kk + c * k + obs.label] += q;
        }
    }
    let uniform = 1.0 / k as f64;
    for row in confusion.chunks_mut(k) {
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            row.iter_mut().for_each(|p| *p /= sum);
        } else {
            row.iter_mut().for_each(|p| *p = uniform);
        }
    }

    let mut prior = alloc::vec![0.0; k];
    if !options.uniform_prior {
        for j in (0..labels.num_items()).filter(|&j| labels.item_label_count(j) > 0) {
            for (c, &q) in posterior.row(j).iter().enumerate() {
                prior[c] += q;
            }
        }
    }
    let total: f64 = prior.iter().sum();
    if total > 0.0 {
        prior.iter_mut().for_each(|p| *p /= total);
    } else {
        prior.iter_mut().for_each(|p| *p = uniform);
    }
    DsParams { num_classes: k, confusion, prior }
}

/// E-step: `Q(Y_j = c) ∝ prior(c) Π_i p_i(c, x_ij)`. Also returns the marginal log-likelihood.
pub fn ds_e_step(labels: &LabelMatrix, params: &DsParams) -> Result<(Posterior, f64)> {
    let k = labels.num_classes();
    if params.num_classes != k || params.num_workers() != labels.num_workers() {
        return Err(Error::DimensionMismatch {
            what: "Dawid-Skene workers",
            expected: labels.num_workers(),
            found: params.num_workers(),
        });
    }
    let log_prior: Vec<f64> = params.prior.iter().map(|&p| log_or_neg_inf(p)).collect();
    let mut logs = alloc::vec![0.0; labels.num_items() * k];
    for j in 0..labels.num_items() {
        logs[j * k..(j + 1) * k].copy_from_slice(&log_prior);
    }
    for obs in labels.observations() {
        let m = params.worker_matrix(obs.worker);
        for c in 0..k {
            logs[obs.item * k + c] += log_or_neg_inf(m[c * k + obs.label]);
        }
    }
    let mut log_likelihood = 0.0;
    for j in (0..labels.num_items()).filter(|&j| labels.item_label_count(j) > 0) {
        log_likelihood += math::log_sum_exp(&logs[j * k..(j + 1) * k]);
    }
    Ok((Posterior::from_log_weights(logs, k), log_likelihood))
}

fn log_or_neg_inf(p: f64) -> f64 {
    if p > 0.0 {
        math::ln(p)
    } else {
        f64::NEG_INFINITY
    }
}

fn smoothing_term(params: &DsParams, smoothing: f64) -> f64 {
    if smoothing == 0.0 {
        return 0.0;
    }
    smoothing * params.confusion.iter().map(|&p| math::ln(p.max(math::PROB_FLOOR))).sum::<f64>()
}

/// Dawid-Skene EM initialized from the majority-vote posterior.
pub fn dawid_skene_em(labels: &LabelMatrix, options: &DsOptions) -> Result<DsResult> {
    dawid_skene_em_from(labels, options, crate::solver::initialize_posterior(labels))
}

pub fn dawid_skene_em_from(labels: &LabelMatrix, options: &DsOptions, initial: Posterior) -> Result<DsResult> {
    if !(options.smoothing >= 0.0) || !(options.tol > 0.0) || options.max_iters == 0 {
        return Err(Error::InvalidConfig("Dawid-Skene options out of range"));
    }
    crate::labels::check_posterior_shape(labels, &initial)?;
    let mut posterior = initial;
    let mut params = ds_m_step(labels, &posterior, options);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut previous = f64::NEG_INFINITY;
    for iter in 1..=options.max_iters {
        iterations = iter;
        let (q, ll) = ds_e_step(labels, &params)?;
        let objective = ll + smoothing_term(&params, options.smoothing);
        trace.push(objective);
        posterior = q;
        params = ds_m_step(labels, &posterior, options);
        if math::abs(objective - previous) <= options.tol * math::abs(objective) {
            converged = true;
            break;
        }
        previous = objective;
    }
    // leave the returned posterior consistent with the returned parameters
    posterior = ds_e_step(labels, &params)?.0;
    Ok(DsResult { posterior, params, trace, converged, iterations })
}
