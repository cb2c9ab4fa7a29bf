//! File formats: label and gold CSVs, posterior and score TSVs, trace, selection and
//! evaluation reports.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use mmce_core::confusion::{ConfusionTensor, Region};
use mmce_core::evaluation::EvalReport;
use mmce_core::labels::Interner;
use mmce_core::selection::{CvReport, ValidationReport};
use mmce_core::solver::TracePoint;
use mmce_core::{GoldLabels, LabelMatrix, Mode, ModelParams, Observation, Posterior};
use thiserror::Error;

pub const LABELS_HEADER: [&str; 3] = ["worker", "item", "label"];
pub const GOLD_HEADER: [&str; 2] = ["item", "label"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {error}")]
    Io { path: String, error: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: u64, message: String },
    #[error("{path}: {error}")]
    Data { path: String, error: mmce_core::Error },
}

pub type Result<T> = std::result::Result<T, IoError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |error| IoError::Io { path: path.display().to_string(), error }
}

fn parse_err(path: &str, line: u64, message: impl Into<String>) -> IoError {
    IoError::Parse { path: path.to_string(), line, message: message.into() }
}

/// Whether label values in files start at 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelBase {
    #[default]
    Zero,
    One,
}

impl LabelBase {
    pub fn offset(self) -> usize {
        match self {
            LabelBase::Zero => 0,
            LabelBase::One => 1,
        }
    }

    fn decode(self, raw: &str, num_classes: usize) -> std::result::Result<usize, String> {
        let value: usize = raw.trim().parse().map_err(|_| format!("label {raw:?} is not a non-negative integer"))?;
        let lo = self.offset();
        let hi = num_classes - 1 + lo;
        if value < lo || value > hi {
            return Err(format!("label {value} out of range (valid labels are {lo}..{hi})"));
        }
        Ok(value - lo)
    }
}

fn csv_records<R: Read>(reader: R, delimiter: u8) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(false).flexible(true).delimiter(delimiter).from_reader(reader)
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn is_header(record: &csv::StringRecord, header: &[&str]) -> bool {
    record.len() == header.len() && record.iter().zip(header).all(|(a, b)| a.trim() == *b)
}

fn check_classes(path: &str, num_classes: usize) -> Result<()> {
    if num_classes < 2 {
        return Err(IoError::Data { path: path.to_string(), error: mmce_core::Error::TooFewClasses(num_classes) });
    }
    Ok(())
}

/// Parses `worker,item,label` rows with an optional `worker,item,label` header.
pub fn parse_labels<R: Read>(reader: R, path: &str, num_classes: usize, base: LabelBase) -> Result<LabelMatrix> {
    check_classes(path, num_classes)?;
    let mut workers = Interner::new();
    let mut items = Interner::new();
    let mut observations = Vec::new();
    let mut seen = HashSet::new();
    for (idx, record) in csv_records(reader, b',').into_records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record_line(&record);
        if idx == 0 && is_header(&record, &LABELS_HEADER) {
            continue;
        }
        if record.len() != 3 {
            return Err(parse_err(
                path,
                line,
                format!("expected 3 fields (worker,item,label), found {}", record.len()),
            ));
        }
        let (w, i) = (record[0].trim(), record[1].trim());
        if w.is_empty() || i.is_empty() {
            return Err(parse_err(path, line, "empty worker or item id"));
        }
        let label = base.decode(&record[2], num_classes).map_err(|m| parse_err(path, line, m))?;
        let worker = workers.intern(w);
        let item = items.intern(i);
        if !seen.insert((worker, item)) {
            return Err(parse_err(path, line, format!("duplicate observation for worker {w:?} on item {i:?}")));
        }
        observations.push(Observation { worker, item, label });
    }
    LabelMatrix::new(num_classes, workers, items, observations)
        .map_err(|error| IoError::Data { path: path.to_string(), error })
}

pub fn read_labels(path: &Path, num_classes: usize, base: LabelBase) -> Result<LabelMatrix> {
    let file = File::open(path).map_err(io_err(path))?;
    parse_labels(file, &path.display().to_string(), num_classes, base)
}

/// Canonical label file: header, then one row per observation in stored order.
pub fn write_labels<W: Write>(out: W, labels: &LabelMatrix, base: LabelBase) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(LABELS_HEADER)?;
    for obs in labels.observations() {
        let label = (obs.label + base.offset()).to_string();
        w.write_record([labels.worker_ids().name(obs.worker), labels.item_ids().name(obs.item), label.as_str()])?;
    }
    w.flush()
}

/// Gold labels for the items known to `items`, plus the number of rows naming other items.
pub fn parse_gold<R: Read>(
    reader: R,
    path: &str,
    items: &Interner,
    num_classes: usize,
    base: LabelBase,
) -> Result<(GoldLabels, usize)> {
    check_classes(path, num_classes)?;
    let mut gold = GoldLabels::new(items.len(), num_classes);
    let mut unknown = 0;
    let mut seen = HashSet::new();
    for (idx, record) in csv_records(reader, b',').into_records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record_line(&record);
        if idx == 0 && is_header(&record, &GOLD_HEADER) {
            continue;
        }
        if record.len() != 2 {
            return Err(parse_err(path, line, format!("expected 2 fields (item,label), found {}", record.len())));
        }
        let name = record[0].trim();
        let label = base.decode(&record[1], num_classes).map_err(|m| parse_err(path, line, m))?;
        if !seen.insert(name.to_string()) {
            return Err(parse_err(path, line, format!("duplicate gold label for item {name:?}")));
        }
        match items.get(name) {
            Some(item) => gold.insert(item, label).map_err(|error| IoError::Data { path: path.to_string(), error })?,
            None => unknown += 1,
        }
    }
    Ok((gold, unknown))
}

pub fn read_gold(path: &Path, items: &Interner, num_classes: usize, base: LabelBase) -> Result<(GoldLabels, usize)> {
    let file = File::open(path).map_err(io_err(path))?;
    parse_gold(file, &path.display().to_string(), items, num_classes, base)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn finish(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(io_err(path))
}

/// `item\tpredicted\tp0..p{K-1}`, probabilities with 6 decimals; `predicted` uses `base`.
pub fn format_posterior(items: &Interner, posterior: &Posterior, base: LabelBase) -> String {
    let k = posterior.num_classes();
    let mut s = String::from("item\tpredicted");
    for c in 0..k {
        let _ = write!(s, "\tp{c}");
    }
    s.push('\n');
    for (j, label) in posterior.argmax_labels().into_iter().enumerate() {
        let _ = write!(s, "{}\t{}", items.name(j), label + base.offset());
        for p in posterior.row(j) {
            let _ = write!(s, "\t{p:.6}");
        }
        s.push('\n');
    }
    s
}

pub fn write_posterior(path: &Path, items: &Interner, posterior: &Posterior, base: LabelBase) -> Result<()> {
    finish(path, &format_posterior(items, posterior, base))
}

/// A posterior read back from its TSV form.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTable {
    pub items: Interner,
    pub posterior: Posterior,
}

/// Reads a posterior TSV. Rows are renormalized after checking they sum to 1 up to the
/// printed precision.
pub fn parse_posterior<R: Read>(reader: R, path: &str) -> Result<PosteriorTable> {
    let mut records = csv_records(reader, b'\t').into_records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| parse_err(path, 1, e.to_string()))?,
        None => return Err(parse_err(path, 1, "empty posterior file")),
    };
    let k = header.len().saturating_sub(2);
    let expected: Vec<String> =
        ["item".to_string(), "predicted".to_string()].into_iter().chain((0..k).map(|c| format!("p{c}"))).collect();
    if k < 2 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(parse_err(path, 1, "header must be item, predicted, p0..p{K-1} with K >= 2"));
    }
    let mut items = Interner::new();
    let mut probs = Vec::new();
    for record in records {
        let record = record.map_err(|e| parse_err(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record_line(&record);
        if record.len() != k + 2 {
            return Err(parse_err(path, line, format!("expected {} fields, found {}", k + 2, record.len())));
        }
        if items.get(&record[0]).is_some() {
            return Err(parse_err(path, line, format!("duplicate item {:?}", &record[0])));
        }
        items.intern(&record[0]);
        record[1].parse::<usize>().map_err(|_| parse_err(path, line, "predicted label is not an integer"))?;
        let row: Vec<f64> = record
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(path, line, "probability is not a number"))?;
        let sum: f64 = row.iter().sum();
        if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-4 {
            return Err(parse_err(path, line, "probabilities must lie in [0, 1] and sum to 1"));
        }
        probs.extend(row.iter().map(|p| p / sum));
    }
    let posterior = Posterior::from_rows(probs, k).map_err(|error| IoError::Data { path: path.to_string(), error })?;
    Ok(PosteriorTable { items, posterior })
}

pub fn read_posterior(path: &Path) -> Result<PosteriorTable> {
    let file = File::open(path).map_err(io_err(path))?;
    parse_posterior(file, &path.display().to_string())
}

/// Score sidecar: one line per `(entity, c, k)` or `(entity, s, region)`, 9 decimals.
pub fn format_params(labels: &LabelMatrix, params: &ModelParams) -> String {
    let k = labels.num_classes();
    let mut s = match params.mode() {
        Mode::Multiclass => String::from("kind\tentity\tc\tk\tscore\n"),
        Mode::Ordinal => String::from("kind\tentity\ts\tregion\tscore\n"),
    };
    let blocks = [("worker", labels.worker_ids(), &params.workers), ("item", labels.item_ids(), &params.items)];
    for (kind, ids, tensor) in blocks {
        let values = tensor.values();
        match tensor {
            ConfusionTensor::Dense(_) => {
                for (idx, v) in values.iter().enumerate() {
                    let (e, c, l) = (idx / (k * k), idx / k % k, idx % k);
                    let _ = writeln!(s, "{kind}\t{}\t{c}\t{l}\t{v:.9}", ids.name(e));
                }
            }
            ConfusionTensor::Ordinal(_) => {
                for (idx, v) in values.iter().enumerate() {
                    let (e, t, r) = (idx / (4 * (k - 1)), idx / 4 % (k - 1) + 1, Region::ALL[idx % 4]);
                    let _ = writeln!(s, "{kind}\t{}\t{t}\t{}\t{v:.9}", ids.name(e), r.name());
                }
            }
        }
    }
    s
}

pub fn write_params(path: &Path, labels: &LabelMatrix, params: &ModelParams) -> Result<()> {
    finish(path, &format_params(labels, params))
}

/// Reads a score sidecar for `labels`. Entries not listed stay zero.
pub fn parse_params<R: Read>(reader: R, path: &str, labels: &LabelMatrix, mode: Mode) -> Result<ModelParams> {
    let k = labels.num_classes();
    let mut params = ModelParams::zeros(mode, labels.num_workers(), labels.num_items(), k);
    let mut records = csv_records(reader, b'\t').into_records();
    let expected_header = match mode {
        Mode::Multiclass => ["kind", "entity", "c", "k", "score"],
        Mode::Ordinal => ["kind", "entity", "s", "region", "score"],
    };
    match records.next() {
        Some(Ok(h)) if is_header(&h, &expected_header) => {}
        _ => return Err(parse_err(path, 1, format!("header must be {}", expected_header.join("\t")))),
    }
    for record in records {
        let record = record.map_err(|e| parse_err(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record_line(&record);
        if record.len() != 5 {
            return Err(parse_err(path, line, format!("expected 5 fields, found {}", record.len())));
        }
        let (ids, tensor) = match &record[0] {
            "worker" => (labels.worker_ids(), &mut params.workers),
            "item" => (labels.item_ids(), &mut params.items),
            other => return Err(parse_err(path, line, format!("unknown kind {other:?}"))),
        };
        let entity =
            ids.get(&record[1]).ok_or_else(|| parse_err(path, line, format!("unknown id {:?}", &record[1])))?;
        let score: f64 = record[4].parse().map_err(|_| parse_err(path, line, "score is not a number"))?;
        let index = |raw: &str, bound: usize| raw.parse::<usize>().ok().filter(|&v| v < bound);
        let offset = match mode {
            Mode::Multiclass => {
                let c = index(&record[2], k).ok_or_else(|| parse_err(path, line, "class out of range"))?;
                let l = index(&record[3], k).ok_or_else(|| parse_err(path, line, "class out of range"))?;
                (entity * k + c) * k + l
            }
            Mode::Ordinal => {
                let s = index(&record[2], k)
                    .filter(|&s| s >= 1)
                    .ok_or_else(|| parse_err(path, line, "threshold out of range"))?;
                let r = Region::from_name(&record[3]).ok_or_else(|| parse_err(path, line, "unknown region"))?;
                (entity * (k - 1) + s - 1) * 4 + r.index()
            }
        };
        tensor.values_mut()[offset] = score;
    }
    Ok(params)
}

pub fn read_params(path: &Path, labels: &LabelMatrix, mode: Mode) -> Result<ModelParams> {
    let file = File::open(path).map_err(io_err(path))?;
    parse_params(file, &path.display().to_string(), labels, mode)
}

pub fn format_trace(trace: &[TracePoint]) -> String {
    let mut s = String::from("iter,phase,objective\n");
    for t in trace {
        let _ = writeln!(s, "{},{},{:.12e}", t.iter, t.phase.name(), t.objective);
    }
    s
}

/// Dawid-Skene trace: one `em` row per iteration.
pub fn format_em_trace(trace: &[f64]) -> String {
    let mut s = String::from("iter,phase,objective\n");
    for (i, v) in trace.iter().enumerate() {
        let _ = writeln!(s, "{},em,{v:.12e}", i + 1);
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    finish(path, text)
}

/// `gamma,fold,heldout_loglik` per fold, then a `mean` row per grid point.
pub fn format_cv_report(report: &CvReport) -> String {
    let mut s = String::from("gamma,fold,heldout_loglik\n");
    for score in &report.scores {
        for (f, v) in score.fold_loglik.iter().enumerate() {
            let _ = writeln!(s, "{},{f},{v:.9}", score.gamma);
        }
        let _ = writeln!(s, "{},mean,{:.9}", score.gamma, score.mean_loglik);
    }
    s
}

pub fn format_validation_report(report: &ValidationReport) -> String {
    let metric = match report.metric {
        mmce_core::selection::SelectionMetric::ErrorRate => "error_rate",
        mmce_core::selection::SelectionMetric::MeanSquareError => "mse",
    };
    let mut s = format!("gamma,alpha,beta,{metric}\n");
    for score in &report.scores {
        let _ = writeln!(s, "{},{:.9},{:.9},{:.9}", score.gamma, score.alpha, score.beta, score.metric);
    }
    s
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

/// `section,lower,upper,count,error_rate,mse`: an `overall` row, then one `bin` row per bin.
pub fn format_eval_csv(report: &EvalReport) -> String {
    let mut s = String::from("section,lower,upper,count,error_rate,mse\n");
    let _ = writeln!(s, "overall,0.0,1.0,{},{:.6},{}", report.n_scored, report.error_rate, opt(report.mse));
    for bin in report.calibration.iter().flatten() {
        let _ =
            writeln!(s, "bin,{:.1},{:.1},{},{},{}", bin.lower, bin.upper, bin.count, opt(bin.error_rate), opt(bin.mse));
    }
    s
}

/// Human-readable report: totals, then the calibration table when present.
pub fn format_eval_text(report: &EvalReport) -> String {
    let mut s = format!("items scored  {}\nerror rate    {:.2}%\n", report.n_scored, 100.0 * report.error_rate);
    if let Some(mse) = report.mse {
        let _ = writeln!(s, "mse           {mse:.4}");
    }
    if let Some(bins) = &report.calibration {
        let _ = writeln!(s, "\n{:<12}{:>8}{:>12}{:>10}", "max prob", "items", "error rate", "mse");
        for bin in bins {
            let range = format!("({:.1}, {:.1}]", bin.lower, bin.upper);
            let err = bin.error_rate.map_or_else(|| "-".to_string(), |e| format!("{:.2}%", 100.0 * e));
            let mse = bin.mse.map_or_else(|| "-".to_string(), |m| format!("{m:.4}"));
            let _ = writeln!(s, "{range:<12}{:>8}{err:>12}{mse:>10}", bin.count);
        }
    }
    s
}
