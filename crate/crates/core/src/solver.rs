//! Block coordinate ascent on the regularized dual objective.
//!
//! The objective over scores `σ, τ` and posterior `Q` is
//!
//! ```text
//! F = Σ_j Σ_c Q(Y_j = c) Σ_i log P(x_ij | c) + H(Y) - α Ω(σ) - β Ψ(τ)
//! ```
//!
//! The E-step maximizes `F` over `Q` exactly (Bayes' rule under a uniform class prior);
//! the M-step takes a few backtracking gradient ascent steps in `(σ, τ)`. Both blocks only
//! ever increase `F`.

use alloc::vec::Vec;

use crate::confusion::{
    fill_label_distribution, regularizer_value_and_gradient, ConfusionTensor, DenseConfusion, Mode, ModelParams,
    RegularizerVariant,
};
use crate::error::{Error, Result};
use crate::labels::{check_posterior_shape, LabelMatrix};
use crate::math;
use crate::posterior::Posterior;

/// Backtracking policy for one gradient ascent step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub initial_step: f64,
    pub shrink: f64,
    /// Sufficient-increase constant: accept when `F(x + t g) >= F(x) + armijo * t * |g|²`.
    pub armijo: f64,
    pub max_halvings: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self { initial_step: 1.0, shrink: 0.5, armijo: 1e-4, max_halvings: 50 }
    }
}

/// Regularization weights and solver controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    /// Weight on the worker penalty.
    pub alpha: f64,
    /// Weight on the item penalty.
    pub beta: f64,
    pub mode: Mode,
    pub variant: RegularizerVariant,
    pub max_outer_iters: usize,
    pub inner_gradient_steps: usize,
    /// Stop once `|ΔF| <= tol |F|` between outer iterations.
    pub tol: f64,
    pub line_search: LineSearch,
    /// When false the item scores are held at zero, which reduces the model to
    /// per-worker confusion matrices only.
    pub fit_item_params: bool,
}

impl HyperParams {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta,
            mode: Mode::Multiclass,
            variant: RegularizerVariant::Euclidean,
            max_outer_iters: 200,
            inner_gradient_steps: 5,
            tol: 1e-6,
            line_search: LineSearch::default(),
            fit_item_params: true,
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_variant(mut self, variant: RegularizerVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_iterations(mut self, max_outer_iters: usize, inner_gradient_steps: usize) -> Self {
        self.max_outer_iters = max_outer_iters;
        self.inner_gradient_steps = inner_gradient_steps;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn without_item_params(mut self) -> Self {
        self.fit_item_params = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) || !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidHyperParams("alpha and beta must be finite and non-negative"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidHyperParams("tol must be positive"));
        }
        if self.max_outer_iters == 0 || self.inner_gradient_steps == 0 {
            return Err(Error::InvalidHyperParams("iteration counts must be at least 1"));
        }
        let ls = &self.line_search;
        if !(ls.initial_step > 0.0) || !(ls.shrink > 0.0 && ls.shrink < 1.0) || !(ls.armijo >= 0.0) {
            return Err(Error::InvalidHyperParams("invalid line search settings"));
        }
        if self.mode == Mode::Ordinal && self.variant == RegularizerVariant::Centered {
            return Err(Error::CenteredInOrdinalMode);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Init,
    MStep,
    EStep,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::MStep => "m",
            Phase::EStep => "e",
        }
    }
}

/// Objective value after one block update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iter: usize,
    pub phase: Phase,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub posterior: Posterior,
    pub params: ModelParams,
    pub trace: Vec<TracePoint>,
    pub converged: bool,
    pub iterations: usize,
    /// M-steps that ended on a line search failure.
    pub line_search_failures: usize,
}

impl FitResult {
    pub fn labels(&self) -> Vec<usize> {
        self.posterior.argmax_labels()
    }

    pub fn objective(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |t| t.objective)
    }

    pub fn objective_values(&self) -> Vec<f64> {
        self.trace.iter().map(|t| t.objective).collect()
    }
}

fn check_params(labels: &LabelMatrix, params: &ModelParams) -> Result<()> {
    let k = labels.num_classes();
    let checks = [
        ("worker scores", labels.num_workers(), params.workers.num_entities()),
        ("item scores", labels.num_items(), params.items.num_entities()),
        ("worker classes", k, params.workers.num_classes()),
        ("item classes", k, params.items.num_classes()),
    ];
    for (what, expected, found) in checks {
        if expected != found {
            return Err(Error::DimensionMismatch { what, expected, found });
        }
    }
    if params.workers.mode() != params.items.mode() {
        return Err(Error::InvalidConfig("worker and item scores use different parameterizations"));
    }
    Ok(())
}

/// Vote-count initialization: `Q(Y_j = c) ∝ Σ_i I(x_ij = c)`, uniform for unlabeled items.
pub fn initialize_posterior(labels: &LabelMatrix) -> Posterior {
    let weights = labels.vote_counts().into_iter().map(|c| c as f64).collect();
    Posterior::from_weights(weights, labels.num_classes())
}

/// `Σ_obs Σ_c Q(Y_j = c) log P(x_ij | c)`; when `gradients` is given, also accumulates
/// `Q(Y_j = c) [I(x_ij = k) - P(k | c)]` into the dense worker and item gradients.
fn expected_log_likelihood(
    labels: &LabelMatrix,
    posterior: &Posterior,
    sigma: &DenseConfusion,
    tau: &DenseConfusion,
    mut gradients: Option<(&mut DenseConfusion, &mut DenseConfusion)>,
) -> f64 {
    let k = labels.num_classes();
    let mut probs = alloc::vec![0.0; k];
    let mut total = 0.0;
    for obs in labels.observations() {
        let q = posterior.row(obs.item);
        for (c, &weight) in q.iter().enumerate() {
            if weight == 0.0 {
                continue;
            }
            let sigma_row = sigma.row(obs.worker, c);
            let tau_row = tau.row(obs.item, c);
            let log_z = fill_label_distribution(sigma_row, tau_row, &mut probs);
            total += weight * (sigma_row[obs.label] + tau_row[obs.label] - log_z);
            if let Some((gs, gt)) = gradients.as_mut() {
                for (label, &p) in probs.iter().enumerate() {
                    let indicator = if label == obs.label { 1.0 } else { 0.0 };
                    let g = weight * (indicator - p);
                    gs.add(obs.worker, c, label, g);
                    gt.add(obs.item, c, label, g);
                }
            }
        }
    }
    total
}

fn penalties(params: &ModelParams, hyper: &HyperParams) -> Result<(f64, ConfusionTensor, ConfusionTensor)> {
    let w = regularizer_value_and_gradient(&params.workers, hyper.variant, hyper.alpha)?;
    let i = regularizer_value_and_gradient(&params.items, RegularizerVariant::Euclidean, hyper.beta)?;
    Ok((w.value + i.value, w.gradient, i.gradient))
}

/// The M-step objective: expected complete log-likelihood minus both penalties.
fn penalized_likelihood(
    labels: &LabelMatrix,
    posterior: &Posterior,
    params: &ModelParams,
    hyper: &HyperParams,
) -> Result<f64> {
    let sigma = params.workers.to_dense();
    let tau = params.items.to_dense();
    let ll = expected_log_likelihood(labels, posterior, &sigma, &tau, None);
    let (penalty, _, _) = penalties(params, hyper)?;
    Ok(ll - penalty)
}

/// Regularized dual objective `F`. `H(Y)` uses `0 log 0 = 0`.
pub fn dual_objective(
    labels: &LabelMatrix,
    posterior: &Posterior,
    params: &ModelParams,
    hyper: &HyperParams,
) -> Result<f64> {
    check_posterior_shape(labels, posterior)?;
    check_params(labels, params)?;
    Ok(penalized_likelihood(labels, posterior, params, hyper)? + posterior.entropy())
}

/// Gradient of `F` with respect to the scores in their own parameterization.
///
/// Ordinal gradients are the region sums of the dense gradient. With
/// `fit_item_params = false` the item gradient is zero.
pub fn m_step_gradients(
    labels: &LabelMatrix,
    posterior: &Posterior,
    params: &ModelParams,
    hyper: &HyperParams,
) -> Result<ModelParams> {
    check_posterior_shape(labels, posterior)?;
    check_params(labels, params)?;
    Ok(gradient_unchecked(labels, posterior, params, hyper)?.1)
}

fn gradient_unchecked(
    labels: &LabelMatrix,
    posterior: &Posterior,
    params: &ModelParams,
    hyper: &HyperParams,
) -> Result<(f64, ModelParams)> {
    let k = labels.num_classes();
    let sigma = params.workers.to_dense();
    let tau = params.items.to_dense();
    let mut gs = DenseConfusion::zeros(labels.num_workers(), k);
    let mut gt = DenseConfusion::zeros(labels.num_items(), k);
    let ll = expected_log_likelihood(labels, posterior, &sigma, &tau, Some((&mut gs, &mut gt)));
    let (penalty, pen_w, pen_i) = penalties(params, hyper)?;

    let mut workers = params.workers.pull_back(gs);
    for (g, p) in workers.values_mut().iter_mut().zip(pen_w.values()) {
        *g -= p;
    }
    let mut items = params.items.pull_back(gt);
    if hyper.fit_item_params {
        for (g, p) in items.values_mut().iter_mut().zip(pen_i.values()) {
            *g -= p;
        }
    } else {
        items.fill(0.0);
    }
    Ok((ll - penalty, ModelParams { workers, items }))
}

/// Exact maximizer of `F` over `Q`: `Q(Y_j = c) ∝ Π_i P(x_ij | c)`, computed in log space.
pub fn e_step(labels: &LabelMatrix, params: &ModelParams) -> Result<Posterior> {
    check_params(labels, params)?;
    let k = labels.num_classes();
    let sigma = params.workers.to_dense();
    let tau = params.items.to_dense();
    let mut logs = alloc::vec![0.0; labels.num_items() * k];
    let mut probs = alloc::vec![0.0; k];
    for obs in labels.observations() {
        for c in 0..k {
            let sigma_row = sigma.row(obs.worker, c);
            let tau_row = tau.row(obs.item, c);
            let log_z = fill_label_distribution(sigma_row, tau_row, &mut probs);
            logs[obs.item * k + c] += sigma_row[obs.label] + tau_row[obs.label] - log_z;
        }
    }
    Ok(Posterior::from_log_weights(logs, k))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MStepOutcome {
    pub params: ModelParams,
    /// Penalized likelihood (the `F` terms that depend on the scores) at `params`.
    pub objective: f64,
    pub accepted_steps: usize,
    /// An ascent step found no acceptable step size; that step left the scores unchanged.
    pub line_search_failed: bool,
}

/// Runs `inner_gradient_steps` backtracking gradient ascent steps from `params`.
///
/// Only steps meeting the sufficient-increase test are taken, so `F` never decreases.
pub fn m_step(
    labels: &LabelMatrix,
    posterior: &Posterior,
    params: &ModelParams,
    hyper: &HyperParams,
) -> Result<MStepOutcome> {
    check_posterior_shape(labels, posterior)?;
    check_params(labels, params)?;
    hyper.validate()?;
    ascend(labels, posterior, params.clone(), hyper, hyper.inner_gradient_steps)
}

fn ascend(
    labels: &LabelMatrix,
    posterior: &Posterior,
    mut current: ModelParams,
    hyper: &HyperParams,
    steps: usize,
) -> Result<MStepOutcome> {
    let ls = hyper.line_search;
    let mut value = f64::NAN;
    let mut accepted_steps = 0;
    let mut line_search_failed = false;
    for _ in 0..steps {
        let (v, grad) = gradient_unchecked(labels, posterior, &current, hyper)?;
        value = v;
        let grad_sq = grad.norm_squared();
        if grad_sq == 0.0 {
            break;
        }
        let mut step = ls.initial_step;
        let mut accepted = false;
        for _ in 0..=ls.max_halvings {
            let mut candidate = current.clone();
            candidate.add_scaled(&grad, step);
            if candidate.is_finite() {
                let cand_value = penalized_likelihood(labels, posterior, &candidate, hyper)?;
                if cand_value >= value + ls.armijo * step * grad_sq {
                    current = candidate;
                    value = cand_value;
                    accepted = true;
                    break;
                }
            }
            step *= ls.shrink;
        }
        if !accepted {
            line_search_failed = true;
            break;
        }
        accepted_steps += 1;
    }
    if value.is_nan() {
        value = penalized_likelihood(labels, posterior, &current, hyper)?;
    }
    Ok(MStepOutcome { params: current, objective: value, accepted_steps, line_search_failed })
}

/// Gradient ascent in the scores with `posterior` held fixed, until the gradient norm
/// drops below `grad_tol`, no step size makes progress, or `max_steps` steps were taken.
///
/// For fixed `Q` the objective is concave in the scores, so a step is accepted whenever the
/// directional derivative at its end point is still non-negative. This test stays accurate
/// far below the resolution of objective differences, which lets the gradient be driven
/// close to zero. Trial steps use the Barzilai-Borwein length.
///
/// Returns the scores and the final gradient norm.
pub fn solve_m_step(
    labels: &LabelMatrix,
    posterior: &Posterior,
    params: &ModelParams,
    hyper: &HyperParams,
    grad_tol: f64,
    max_steps: usize,
) -> Result<(ModelParams, f64)> {
    check_posterior_shape(labels, posterior)?;
    check_params(labels, params)?;
    hyper.validate()?;
    let ls = hyper.line_search;
    let mut current = params.clone();
    let mut grad = gradient_unchecked(labels, posterior, &current, hyper)?.1;
    let mut step = ls.initial_step;
    for _ in 0..max_steps {
        let grad_sq = grad.norm_squared();
        if math::sqrt(grad_sq) < grad_tol {
            break;
        }
        let mut accepted = None;
        for _ in 0..=ls.max_halvings {
            let mut candidate = current.clone();
            candidate.add_scaled(&grad, step);
            if candidate.is_finite() {
                let next = gradient_unchecked(labels, posterior, &candidate, hyper)?.1;
                if next.dot(&grad) >= 0.0 {
                    accepted = Some((candidate, next));
                    break;
                }
            }
            step *= ls.shrink;
        }
        let Some((candidate, next)) = accepted else { break };
        // s = step * grad, y = next - grad; ascent step length s.s / -(s.y)
        let curvature = grad_sq - next.dot(&grad);
        step = if curvature > 0.0 { step * grad_sq / curvature } else { 2.0 * step };
        current = candidate;
        grad = next;
    }
    let norm = math::sqrt(grad.norm_squared());
    Ok((current, norm))
}

/// Fits from vote-count initialization and zero scores.
pub fn fit(labels: &LabelMatrix, hyper: &HyperParams) -> Result<FitResult> {
    let params = ModelParams::zeros(hyper.mode, labels.num_workers(), labels.num_items(), labels.num_classes());
    fit_from(labels, hyper, initialize_posterior(labels), params)
}

/// Alternates M-step and E-step from the given starting point.
pub fn fit_from(
    labels: &LabelMatrix,
    hyper: &HyperParams,
    posterior: Posterior,
    params: ModelParams,
) -> Result<FitResult> {
    hyper.validate()?;
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_posterior_shape(labels, &posterior)?;
    check_params(labels, &params)?;
    if params.mode() != hyper.mode {
        return Err(Error::InvalidConfig("initial scores do not match the requested mode"));
    }
    let mut params = params;
    if !hyper.fit_item_params {
        params.items.fill(0.0);
    }
    let mut posterior = posterior;

    let mut trace = Vec::with_capacity(2 * hyper.max_outer_iters + 1);
    let mut previous = dual_objective(labels, &posterior, &params, hyper)?;
    trace.push(TracePoint { iter: 0, phase: Phase::Init, objective: previous });

    let mut converged = false;
    let mut iterations = 0;
    let mut line_search_failures = 0;
    for iter in 1..=hyper.max_outer_iters {
        iterations = iter;
        let m = ascend(labels, &posterior, params, hyper, hyper.inner_gradient_steps)?;
        if m.line_search_failed {
            line_search_failures += 1;
        }
        params = m.params;
        let entropy = posterior.entropy();
        trace.push(TracePoint { iter, phase: Phase::MStep, objective: m.objective + entropy });

        posterior = e_step(labels, &params)?;
        let current = dual_objective(labels, &posterior, &params, hyper)?;
        trace.push(TracePoint { iter, phase: Phase::EStep, objective: current });

        let done = math::abs(current - previous) <= hyper.tol * math::abs(current);
        previous = current;
        if done {
            converged = true;
            break;
        }
    }

    Ok(FitResult { posterior, params, trace, converged, iterations, line_search_failures })
}

/// Terms of the KL identity between the extended posterior and model distributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlIdentity {
    /// `D_KL(Q || P)` with `Q` placing unit mass on the observed labels and `P(Y)` uniform.
    pub kl_divergence: f64,
    /// `H(X | Y)` over the observed (worker, item) pairs.
    pub conditional_entropy: f64,
    /// `-log P(Y) = n log K`.
    pub log_prior_term: f64,
    /// `|D_KL - H(X|Y) - n log K|`.
    pub residual: f64,
}

/// Evaluates both sides of the KL identity at the given posterior and scores.
///
/// The residual equals `|Σ σ ∂L/∂σ + Σ τ ∂L/∂τ|` of the unpenalized likelihood, so it
/// vanishes at stationary points of the unregularized problem.
pub fn kl_identity(labels: &LabelMatrix, posterior: &Posterior, params: &ModelParams) -> Result<KlIdentity> {
    check_posterior_shape(labels, posterior)?;
    check_params(labels, params)?;
    let k = labels.num_classes();
    let sigma = params.workers.to_dense();
    let tau = params.items.to_dense();
    let mut probs = alloc::vec![0.0; k];
    let mut observed_ll = 0.0;
    let mut conditional_entropy = 0.0;
    for obs in labels.observations() {
        for (c, &q) in posterior.row(obs.item).iter().enumerate() {
            if q == 0.0 {
                continue;
            }
            let sigma_row = sigma.row(obs.worker, c);
            let tau_row = tau.row(obs.item, c);
            let log_z = fill_label_distribution(sigma_row, tau_row, &mut probs);
            observed_ll += q * (sigma_row[obs.label] + tau_row[obs.label] - log_z);
            let h: f64 = probs.iter().map(|&p| math::xlogx(p)).sum();
            conditional_entropy -= q * h;
        }
    }
    let log_prior_term = labels.num_items() as f64 * math::ln(k as f64);
    let kl_divergence = -posterior.entropy() - observed_ll + log_prior_term;
    let residual = math::abs(kl_divergence - conditional_entropy - log_prior_term);
    Ok(KlIdentity { kl_divergence, conditional_entropy, log_prior_term, residual })
}

/// [`kl_identity`] at the fit's scores with its posterior rounded to deterministic labels.
pub fn kl_identity_check(labels: &LabelMatrix, fit: &FitResult) -> Result<KlIdentity> {
    kl_identity(labels, &fit.posterior.rounded(), &fit.params)
}
