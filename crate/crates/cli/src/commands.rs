//! Subcommands and their options.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mmce_core::baselines::{dawid_skene_em, majority_vote, DsOptions};
use mmce_core::evaluation::{evaluate, PointPrediction};
use mmce_core::labels::summarize;
use mmce_core::selection::{
    cross_validate, resolve_hyperparams, validation_select, CvConfig, HeldOutScoring, DEFAULT_GAMMA_GRID,
};
use mmce_core::{fit, HyperParams, LabelMatrix, Mode, RegularizerVariant};

use crate::io::{self, LabelBase};

#[derive(Debug, Parser)]
#[command(name = "mmce", version, about = "Aggregate crowdsourced labels into posterior label distributions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print dataset counts and, with gold labels, the average worker error rate.
    Stats(StatsArgs),
    /// Fit a model and write per-item posteriors.
    Aggregate(AggregateArgs),
    /// Choose the regularization strength by cross-validation or against gold labels.
    Select(SelectArgs),
    /// Score a posterior file against gold labels.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaseArg {
    #[value(name = "0")]
    Zero,
    #[value(name = "1")]
    One,
}

impl From<BaseArg> for LabelBase {
    fn from(b: BaseArg) -> Self {
        match b {
            BaseArg::Zero => LabelBase::Zero,
            BaseArg::One => LabelBase::One,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Multiclass,
    Ordinal,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Multiclass => Mode::Multiclass,
            ModeArg::Ordinal => Mode::Ordinal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Euclidean,
    Centered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Mmce,
    Mv,
    Ds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HeldOutArg {
    Marginalized,
    HardLabel,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Labels file: `worker,item,label` rows.
    #[arg(long)]
    pub labels: PathBuf,
    /// Number of classes K.
    #[arg(long)]
    pub classes: usize,
    /// Whether label values in files start at 0 or 1.
    #[arg(long, value_enum, default_value = "0")]
    pub label_base: BaseArg,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value = "multiclass")]
    pub mode: ModeArg,
    /// Worker-score regularizer; `centered` is multiclass only.
    #[arg(long, value_enum, default_value = "euclidean")]
    pub variant: VariantArg,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    /// Gradient ascent steps per M-step.
    #[arg(long, default_value_t = 5)]
    pub inner_steps: usize,
    /// Relative objective change that ends the fit.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

impl SolverArgs {
    fn hyper(&self) -> Result<HyperParams> {
        let variant = match self.variant {
            VariantArg::Euclidean => RegularizerVariant::Euclidean,
            VariantArg::Centered => RegularizerVariant::Centered,
        };
        let hyper = HyperParams::new(0.0, 0.0)
            .with_mode(self.mode.into())
            .with_variant(variant)
            .with_iterations(self.max_iters, self.inner_steps)
            .with_tol(self.tol);
        hyper.validate()?;
        Ok(hyper)
    }
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Gold file: `item,label` rows.
    #[arg(long)]
    pub gold: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_enum, default_value = "mmce")]
    pub method: MethodArg,
    /// Worker-score weight; requires --beta.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Item-score weight; requires --alpha.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Sets alpha = gamma K^2 and beta = alpha n / m.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Posterior TSV; MMCE scores go to `<out>.params.tsv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Objective trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Comma-separated gamma values.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_GAMMA_GRID)]
    pub grid: Vec<f64>,
    /// Seed for the fold partition.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Select against these gold labels instead of by held-out likelihood.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Held-out label score used by cross-validation.
    #[arg(long, value_enum, default_value = "marginalized")]
    pub heldout: HeldOutArg,
    /// Selection report CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Refit on all labels with the selected gamma, writing `<out>.posterior.tsv`.
    #[arg(long)]
    pub fit_final: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Posterior TSV as written by `aggregate`.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    /// `ordinal` adds the mean square error.
    #[arg(long, value_enum, default_value = "multiclass")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "0")]
    pub label_base: BaseArg,
    /// Add the calibration table.
    #[arg(long)]
    pub bins: bool,
    /// Use the rounded posterior mean instead of the argmax for the mean square error.
    #[arg(long)]
    pub posterior_mean: bool,
    /// Report CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// How a successful command ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// Outputs were written but a fit hit its iteration limit.
    NotConverged,
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = OsString::from(path.as_os_str());
    s.push(suffix);
    PathBuf::from(s)
}

fn load(data: &DataArgs) -> Result<LabelMatrix> {
    let labels = io::read_labels(&data.labels, data.classes, data.label_base.into())?;
    if labels.is_empty() {
        bail!("{}: no observations", data.labels.display());
    }
    Ok(labels)
}

fn load_gold(path: &Path, labels: &LabelMatrix, base: BaseArg) -> Result<mmce_core::GoldLabels> {
    let (gold, unknown) = io::read_gold(path, labels.item_ids(), labels.num_classes(), base.into())?;
    if unknown > 0 {
        eprintln!("note: {unknown} gold rows name items without labels and were skipped");
    }
    Ok(gold)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<Outcome> {
    match cli.command {
        Command::Stats(args) => stats(&args, out),
        Command::Aggregate(args) => aggregate(&args, out),
        Command::Select(args) => select(&args, out),
        Command::Evaluate(args) => evaluate_cmd(&args, out),
    }
}

fn stats(args: &StatsArgs, out: &mut dyn Write) -> Result<Outcome> {
    let labels = load(&args.data)?;
    let gold = args.gold.as_deref().map(|p| load_gold(p, &labels, args.data.label_base)).transpose()?;
    let s = summarize(&labels, gold.as_ref());
    writeln!(
        out,
        "{:>8}{:>8}{:>9}{:>9}{:>13}{:>15}",
        "classes", "items", "workers", "labels", "labels/item", "labels/worker"
    )?;
    writeln!(
        out,
        "{:>8}{:>8}{:>9}{:>9}{:>13.2}{:>15.2}",
        s.num_classes, s.num_items, s.num_workers, s.num_labels, s.labels_per_item, s.labels_per_worker
    )?;
    if let Some(gold) = &gold {
        writeln!(out, "gold items {}", gold.len())?;
        match s.worker_error_rate {
            Some(e) => writeln!(out, "average worker error rate {:.2}%", 100.0 * e)?,
            None => writeln!(out, "average worker error rate -")?,
        }
    }
    Ok(Outcome::Done)
}

fn resolve(args: &AggregateArgs, labels: &LabelMatrix) -> Result<(f64, f64)> {
    match (args.alpha, args.beta, args.gamma) {
        (Some(a), Some(b), None) => Ok((a, b)),
        (None, None, Some(g)) => Ok(resolve_hyperparams(g, labels)?),
        (None, None, None) => bail!("--method mmce needs either --alpha and --beta, or --gamma"),
        (Some(_), None, None) | (None, Some(_), None) => bail!("--alpha and --beta must be given together"),
        _ => bail!("give either --alpha and --beta, or --gamma, not both"),
    }
}

fn aggregate(args: &AggregateArgs, out: &mut dyn Write) -> Result<Outcome> {
    let hyper = args.solver.hyper()?;
    let has_weights = args.alpha.is_some() || args.beta.is_some() || args.gamma.is_some();
    if args.method != MethodArg::Mmce && has_weights {
        bail!("--alpha, --beta and --gamma only apply to --method mmce");
    }
    let labels = load(&args.data)?;
    let base = args.data.label_base.into();
    match args.method {
        MethodArg::Mv => {
            let mv = majority_vote(&labels);
            io::write_posterior(&args.out, labels.item_ids(), &mv.posterior, base)?;
            writeln!(out, "method mv")?;
            if !mv.unlabeled.is_empty() {
                writeln!(out, "unlabeled items {}", mv.unlabeled.len())?;
            }
            Ok(Outcome::Done)
        }
        MethodArg::Ds => {
            let opts = DsOptions { max_iters: args.solver.max_iters, ..DsOptions::default() };
            let res = dawid_skene_em(&labels, &opts)?;
            io::write_posterior(&args.out, labels.item_ids(), &res.posterior, base)?;
            if let Some(path) = &args.trace {
                io::write_text(path, &io::format_em_trace(&res.trace))?;
            }
            writeln!(out, "method ds")?;
            writeln!(out, "converged {} iterations {}", res.converged, res.iterations)?;
            Ok(if res.converged { Outcome::Done } else { Outcome::NotConverged })
        }
        MethodArg::Mmce => {
            let (alpha, beta) = resolve(args, &labels)?;
            let hyper = HyperParams { alpha, beta, ..hyper };
            hyper.validate()?;
            writeln!(
                out,
                "method mmce mode {} variant {} alpha={} beta={}",
                mode_name(hyper.mode),
                variant_name(hyper.variant),
                alpha,
                beta
            )?;
            let result = fit(&labels, &hyper)?;
            io::write_posterior(&args.out, labels.item_ids(), &result.posterior, base)?;
            io::write_params(&with_suffix(&args.out, ".params.tsv"), &labels, &result.params)?;
            if let Some(path) = &args.trace {
                io::write_text(path, &io::format_trace(&result.trace))?;
            }
            writeln!(
                out,
                "converged {} iterations {} objective {:.9}",
                result.converged,
                result.iterations,
                result.objective()
            )?;
            Ok(if result.converged { Outcome::Done } else { Outcome::NotConverged })
        }
    }
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Multiclass => "multiclass",
        Mode::Ordinal => "ordinal",
    }
}

fn variant_name(variant: RegularizerVariant) -> &'static str {
    match variant {
        RegularizerVariant::Euclidean => "euclidean",
        RegularizerVariant::Centered => "centered",
    }
}

fn select(args: &SelectArgs, out: &mut dyn Write) -> Result<Outcome> {
    let hyper = args.solver.hyper()?;
    let scoring = match args.heldout {
        HeldOutArg::Marginalized => HeldOutScoring::Marginalized,
        HeldOutArg::HardLabel => HeldOutScoring::HardLabel,
    };
    let config = CvConfig { folds: args.folds, gamma_grid: args.grid.clone(), seed: args.seed, hyper, scoring };
    config.validate().context("invalid selection options")?;
    let labels = load(&args.data)?;

    let (gamma, alpha, beta) = match &args.gold {
        Some(path) => {
            let gold = load_gold(path, &labels, args.data.label_base)?;
            let report = validation_select(&labels, &gold, &config)?;
            io::write_text(&args.out, &io::format_validation_report(&report))?;
            (report.selected_gamma, report.alpha, report.beta)
        }
        None => {
            let report = cross_validate(&labels, &config)?;
            io::write_text(&args.out, &io::format_cv_report(&report))?;
            (report.selected_gamma, report.alpha, report.beta)
        }
    };
    writeln!(out, "selected gamma={gamma} alpha={alpha} beta={beta}")?;

    if !args.fit_final {
        return Ok(Outcome::Done);
    }
    let result = fit(&labels, &HyperParams { alpha, beta, ..hyper })?;
    let posterior_path = with_suffix(&args.out, ".posterior.tsv");
    io::write_posterior(&posterior_path, labels.item_ids(), &result.posterior, args.data.label_base.into())?;
    io::write_params(&with_suffix(&posterior_path, ".params.tsv"), &labels, &result.params)?;
    writeln!(
        out,
        "converged {} iterations {} objective {:.9}",
        result.converged,
        result.iterations,
        result.objective()
    )?;
    Ok(if result.converged { Outcome::Done } else { Outcome::NotConverged })
}

fn evaluate_cmd(args: &EvaluateArgs, out: &mut dyn Write) -> Result<Outcome> {
    let table = io::read_posterior(&args.pred)?;
    let k = table.posterior.num_classes();
    let (gold, unknown) = io::read_gold(&args.gold, &table.items, k, args.label_base.into())?;
    if unknown > 0 {
        eprintln!("note: {unknown} gold rows name items missing from the predictions and were skipped");
    }
    let rule = if args.posterior_mean { PointPrediction::PosteriorMean } else { PointPrediction::Argmax };
    let report = evaluate(&table.posterior, &gold, args.mode == ModeArg::Ordinal, rule, args.bins)?;
    write!(out, "{}", io::format_eval_text(&report))?;
    if let Some(path) = &args.out {
        io::write_text(path, &io::format_eval_csv(&report))?;
    }
    Ok(Outcome::Done)
}
