//! Crowdsourced label aggregation by regularized minimax conditional entropy.
//!
//! Each worker `i` and item `j` carry a `K x K` score matrix, and a label is drawn as
//!
//! ```text
//! P(x_ij = k | Y_j = c) ∝ exp[σ_i(c, k) + τ_j(c, k)]
//! ```
//!
//! [`solver::fit`] alternates a Bayes posterior update with penalized gradient ascent on the
//! scores. Ordinal data can use threshold-structured scores ([`confusion::Mode::Ordinal`]).
//! Majority vote and Dawid-Skene EM live in [`baselines`]; [`selection`] picks the
//! regularization weights and [`evaluation`] scores results against gold labels.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]
// NaN must fail validation, so the negated comparisons are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod baselines;
pub mod confusion;
pub mod error;
pub mod evaluation;
pub mod labels;
mod math;
pub mod planted;
pub mod posterior;
pub mod selection;
pub mod solver;

pub use confusion::{ConfusionTensor, DenseConfusion, Mode, ModelParams, OrdinalConfusion, Region, RegularizerVariant};
pub use error::{Error, Result};
pub use labels::{DatasetSummary, GoldLabels, LabelMatrix, Observation};
pub use posterior::Posterior;
pub use solver::{fit, FitResult, HyperParams};
