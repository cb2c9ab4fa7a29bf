//! Scoring against gold labels: error rate, mean square error and calibration bins.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::labels::GoldLabels;
use crate::posterior::Posterior;

/// Right edges of the calibration bins `(0, 0.5], (0.5, 0.6], ..., (0.9, 1]`.
pub const CALIBRATION_EDGES: [f64; 6] = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// `(prediction, gold)` pairs for gold items that have a prediction.
fn scored_pairs<'a>(predictions: &'a [usize], gold: &'a GoldLabels) -> impl Iterator<Item = (usize, usize)> + 'a {
    gold.iter().filter(|(item, _)| *item < predictions.len()).map(|(item, g)| (predictions[item], g))
}

/// Fraction of gold items whose prediction differs from the gold class.
pub fn error_rate(predictions: &[usize], gold: &GoldLabels) -> Result<f64> {
    let (wrong, total) =
        scored_pairs(predictions, gold).fold((0usize, 0usize), |(w, t), (p, g)| (w + usize::from(p != g), t + 1));
    if total == 0 {
        return Err(Error::NothingToScore);
    }
    Ok(wrong as f64 / total as f64)
}

/// Mean of `(prediction - gold)²` with classes read as consecutive integers.
pub fn mean_square_error(predictions: &[usize], gold: &GoldLabels) -> Result<f64> {
    let (sum, total) = scored_pairs(predictions, gold).fold((0.0, 0usize), |(s, t), (p, g)| {
        let d = p as f64 - g as f64;
        (s + d * d, t + 1)
    });
    if total == 0 {
        return Err(Error::NothingToScore);
    }
    Ok(sum / total as f64)
}

/// How a point label is read off a posterior row for ordinal scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PointPrediction {
    #[default]
    Argmax,
    /// `round(Σ_c c Q(c))`, halves rounded up.
    PosteriorMean,
}

pub fn point_predictions(posterior: &Posterior, rule: PointPrediction) -> Vec<usize> {
    match rule {
        PointPrediction::Argmax => posterior.argmax_labels(),
        PointPrediction::PosteriorMean => (0..posterior.num_items())
            .map(|j| {
                let mean: f64 = posterior.row(j).iter().enumerate().map(|(c, q)| c as f64 * q).sum();
                libm::floor(mean + 0.5) as usize
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// `None` for empty bins.
    pub error_rate: Option<f64>,
    pub mse: Option<f64>,
}

/// Groups gold items by their maximum posterior probability; bins are open on the left
/// and closed on the right. Predictions are the posterior argmax.
pub fn calibration_bins(posterior: &Posterior, gold: &GoldLabels) -> Vec<CalibrationBin> {
    let mut counts = [0usize; 6];
    let mut wrong = [0usize; 6];
    let mut sq = [0.0f64; 6];
    let predictions = posterior.argmax_labels();
    for (item, g) in gold.iter().filter(|(item, _)| *item < posterior.num_items()) {
        let p = posterior.max_prob(item);
        let bin = CALIBRATION_EDGES.iter().position(|&edge| p <= edge).unwrap_or(5);
        counts[bin] += 1;
        let pred = predictions[item];
        if pred != g {
            wrong[bin] += 1;
        }
        let d = pred as f64 - g as f64;
        sq[bin] += d * d;
    }
    let mut lower = 0.0;
    CALIBRATION_EDGES
        .iter()
        .enumerate()
        .map(|(b, &upper)| {
            let bin = CalibrationBin {
                lower,
                upper,
                count: counts[b],
                error_rate: (counts[b] > 0).then(|| wrong[b] as f64 / counts[b] as f64),
                mse: (counts[b] > 0).then(|| sq[b] / counts[b] as f64),
            };
            lower = upper;
            bin
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub error_rate: f64,
    /// Present when scoring ordinal labels.
    pub mse: Option<f64>,
    pub n_scored: usize,
    pub calibration: Option<Vec<CalibrationBin>>,
}

/// Scores a posterior against gold. Error rate always uses the argmax; `mse_rule` picks
/// the point prediction for the MSE, which is only reported when `ordinal` is set.
pub fn evaluate(
    posterior: &Posterior,
    gold: &GoldLabels,
    ordinal: bool,
    mse_rule: PointPrediction,
    with_bins: bool,
) -> Result<EvalReport> {
    let predictions = posterior.argmax_labels();
    let error_rate = error_rate(&predictions, gold)?;
    let n_scored = scored_pairs(&predictions, gold).count();
    let mse = if ordinal { Some(mean_square_error(&point_predictions(posterior, mse_rule), gold)?) } else { None };
    let calibration = with_bins.then(|| calibration_bins(posterior, gold));
    Ok(EvalReport { error_rate, mse, n_scored, calibration })
}
