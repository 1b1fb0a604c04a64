//! Prediction sets, per-sample confidence records and file ingestion.
//!
//! Labels are 0-based everywhere. Probability rows must sum to one within
//! [`SUM_TOLERANCE`]; rows inside the tolerance are renormalized, rows
//! outside it are rejected.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SUM_TOLERANCE: f64 = 1e-6;

/// Class-probability rows with ground-truth labels.
///
/// Rows are stored flat (row-major). When the set was built from logits the
/// raw logits are kept so temperature scaling and logit-based OOD scores can
/// use them.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    num_classes: usize,
    probs: Vec<f64>,
    labels: Vec<usize>,
    logits: Option<Vec<f64>>,
}

/// Confidence `r`, true-class probability `r*`, correctness and predicted
/// class of a single sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceRecord {
    pub confidence: f64,
    pub true_prob: f64,
    pub correct: bool,
    pub predicted: usize,
}

impl ConfidenceRecord {
    pub fn new(confidence: f64, true_prob: f64, correct: bool, predicted: usize) -> Self {
        Self {
            confidence,
            true_prob,
            correct,
            predicted,
        }
    }

    /// Correctness as 0.0 / 1.0.
    pub fn c(&self) -> f64 {
        if self.correct {
            1.0
        } else {
            0.0
        }
    }
}

/// Input file layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// Guess from the file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.len() < 2 {
        return Err(Error::invalid(format!(
            "softmax needs at least 2 logits, got {}",
            logits.len()
        )));
    }
    if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "non-finite logit {} at position {i}",
            logits[i]
        )));
    }
    Ok(softmax_unchecked(logits))
}

pub(crate) fn softmax_unchecked(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn check_probability_row(row: &mut [f64]) -> std::result::Result<(), String> {
    if let Some(i) = row.iter().position(|p| !p.is_finite() || *p < 0.0) {
        return Err(format!("entry {i} = {} is not a finite nonnegative probability", row[i]));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(format!("probabilities sum to {sum}, expected 1 within {SUM_TOLERANCE:e}"));
    }
    for p in row.iter_mut() {
        *p /= sum;
    }
    Ok(())
}

impl PredictionSet {
    /// Build from probability rows. Rows are validated and renormalized.
    pub fn from_probs(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        let num_classes = Self::check_shape(&rows, &labels)?;
        let mut probs = Vec::with_capacity(rows.len() * num_classes);
        for (i, mut row) in rows.into_iter().enumerate() {
            check_probability_row(&mut row).map_err(|m| Error::invalid(format!("row {i}: {m}")))?;
            probs.extend(row);
        }
        Ok(Self {
            num_classes,
            probs,
            labels,
            logits: None,
        })
    }

    /// Build from logit rows; softmax is applied row-wise and the logits kept.
    pub fn from_logits(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        let num_classes = Self::check_shape(&rows, &labels)?;
        let mut probs = Vec::with_capacity(rows.len() * num_classes);
        let mut logits = Vec::with_capacity(rows.len() * num_classes);
        for (i, row) in rows.into_iter().enumerate() {
            let p = softmax(&row).map_err(|e| Error::invalid(format!("row {i}: {e}")))?;
            probs.extend(p);
            logits.extend(row);
        }
        Ok(Self {
            num_classes,
            probs,
            labels,
            logits: Some(logits),
        })
    }

    fn check_shape(rows: &[Vec<f64>], labels: &[usize]) -> Result<usize> {
        if rows.is_empty() {
            return Err(Error::invalid("prediction set must contain at least one sample"));
        }
        if rows.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let k = rows[0].len();
        if k < 2 {
            return Err(Error::invalid(format!("need at least 2 classes, got {k}")));
        }
        for (i, (row, &label)) in rows.iter().zip(labels).enumerate() {
            if row.len() != k {
                return Err(Error::invalid(format!(
                    "row {i} has {} classes, expected {k}",
                    row.len()
                )));
            }
            if label >= k {
                return Err(Error::invalid(format!("row {i}: label {label} out of range for {k} classes")));
            }
        }
        Ok(k)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn probs(&self, i: usize) -> &[f64] {
        &self.probs[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn logits(&self, i: usize) -> Option<&[f64]> {
        self.logits
            .as_ref()
            .map(|l| &l[i * self.num_classes..(i + 1) * self.num_classes])
    }

    pub fn has_logits(&self) -> bool {
        self.logits.is_some()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.probs.chunks_exact(self.num_classes).zip(self.labels.iter().copied())
    }

    /// One record per sample, in sample order.
    pub fn records(&self) -> Vec<ConfidenceRecord> {
        extract_records(self)
    }

    /// Fraction of correctly classified samples.
    pub fn accuracy(&self) -> f64 {
        let correct = self.records().iter().filter(|r| r.correct).count();
        correct as f64 / self.len() as f64
    }

    /// The same set with logits divided by `temperature`.
    pub fn with_temperature(&self, temperature: f64) -> Result<Self> {
        let logits = self.logits.as_ref().ok_or_else(|| {
            Error::invalid("temperature scaling needs logits; this set only holds probabilities")
        })?;
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
        }
        let mut probs = Vec::with_capacity(logits.len());
        for row in logits.chunks_exact(self.num_classes) {
            let scaled: Vec<f64> = row.iter().map(|z| z / temperature).collect();
            probs.extend(softmax_unchecked(&scaled));
        }
        Ok(Self {
            num_classes: self.num_classes,
            probs,
            labels: self.labels.clone(),
            logits: Some(logits.iter().map(|z| z / temperature).collect()),
        })
    }

    /// Write as JSONL. With `as_logits` the stored logits are written under
    /// the `logits` key (error if there are none); otherwise `probs`.
    pub fn save_jsonl(&self, path: &Path, as_logits: bool) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_jsonl(&mut out, as_logits)
            .map_err(|e| match e {
                Error::Json(j) if j.is_io() => Error::io(path, j.into()),
                other => other,
            })?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_jsonl<W: Write>(&self, out: &mut W, as_logits: bool) -> Result<()> {
        if as_logits && self.logits.is_none() {
            return Err(Error::invalid("cannot write logits: set holds probabilities only"));
        }
        for i in 0..self.len() {
            let row = JsonlRow {
                label: self.labels[i] as i64,
                probs: (!as_logits).then(|| self.probs(i).to_vec()),
                logits: if as_logits { self.logits(i).map(<[f64]>::to_vec) } else { None },
            };
            serde_json::to_writer(&mut *out, &row)?;
            out.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
        }
        Ok(())
    }
}

/// Derive `(r, r*, c, pred)` for every sample. Argmax ties resolve to the
/// lowest class index.
pub fn extract_records(preds: &PredictionSet) -> Vec<ConfidenceRecord> {
    preds
        .rows()
        .map(|(p, label)| {
            let pred = argmax(p);
            ConfidenceRecord {
                confidence: p[pred],
                true_prob: p[label],
                correct: pred == label,
                predicted: pred,
            }
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonlRow {
    label: i64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    probs: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    logits: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowKey {
    Probs,
    Logits,
}

/// Summary of a loaded file, for reporting.
#[derive(Debug, Clone)]
pub struct LoadedPredictions {
    pub set: PredictionSet,
    pub path: PathBuf,
    pub rows: usize,
    pub num_classes: usize,
}

/// Load a prediction file.
///
/// For JSONL the row key (`probs` or `logits`) decides the interpretation;
/// asking for logits on a `probs` file is a [`Error::FormatConflict`]. For
/// CSV the `logits` flag decides.
pub fn load_predictions(path: &Path, format: Option<Format>, logits: bool) -> Result<LoadedPredictions> {
    let format = format.unwrap_or_else(|| Format::from_path(path));
    let set = match format {
        Format::Jsonl => load_jsonl(path, logits)?,
        Format::Csv => load_csv(path, logits)?,
    };
    Ok(LoadedPredictions {
        path: path.to_path_buf(),
        rows: set.len(),
        num_classes: set.num_classes(),
        set,
    })
}

fn parse_err(path: &Path, line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn load_jsonl(path: &Path, want_logits: bool) -> Result<PredictionSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut key: Option<RowKey> = None;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonlRow = serde_json::from_str(&line)
            .map_err(|e| parse_err(path, lineno, "<row>", e.to_string()))?;
        let (this_key, values) = match (row.probs, row.logits) {
            (Some(p), None) => (RowKey::Probs, p),
            (None, Some(l)) => (RowKey::Logits, l),
            (Some(_), Some(_)) => {
                return Err(parse_err(path, lineno, "probs/logits", "row has both `probs` and `logits`"))
            }
            (None, None) => {
                return Err(parse_err(path, lineno, "probs/logits", "row has neither `probs` nor `logits`"))
            }
        };
        match key {
            None => key = Some(this_key),
            Some(k) if k != this_key => {
                return Err(parse_err(
                    path,
                    lineno,
                    if this_key == RowKey::Probs { "probs" } else { "logits" },
                    "file mixes `probs` and `logits` rows",
                ))
            }
            _ => {}
        }
        let field = if this_key == RowKey::Probs { "probs" } else { "logits" };
        match width {
            None => {
                if values.len() < 2 {
                    return Err(parse_err(path, lineno, field, format!("need at least 2 classes, got {}", values.len())));
                }
                width = Some(values.len())
            }
            Some(k) if k != values.len() => {
                return Err(parse_err(
                    path,
                    lineno,
                    field,
                    format!("row has {} classes, earlier rows have {k}", values.len()),
                ))
            }
            _ => {}
        }
        let k = values.len();
        if row.label < 0 || row.label as usize >= k {
            return Err(parse_err(path, lineno, "label", format!("label {} out of range [0, {k})", row.label)));
        }
        rows.push(validate_row(path, lineno, field, values, this_key == RowKey::Logits)?);
        labels.push(row.label as usize);
    }

    let key = key.ok_or_else(|| parse_err(path, 0, "<file>", "no rows"))?;
    if want_logits && key == RowKey::Probs {
        return Err(Error::FormatConflict(format!(
            "{}: logits requested but rows use the `probs` key",
            path.display()
        )));
    }
    assemble(rows, labels, key == RowKey::Logits)
}

fn validate_row(path: &Path, line: usize, field: &str, mut values: Vec<f64>, logits: bool) -> Result<Vec<f64>> {
    if logits {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(parse_err(path, line, field, format!("entry {i} is not finite")));
        }
    } else {
        check_probability_row(&mut values).map_err(|m| parse_err(path, line, field, m))?;
    }
    Ok(values)
}

fn assemble(rows: Vec<Vec<f64>>, labels: Vec<usize>, logits: bool) -> Result<PredictionSet> {
    if logits {
        PredictionSet::from_logits(rows, labels)
    } else {
        PredictionSet::from_probs(rows, labels)
    }
}

fn load_csv(path: &Path, logits: bool) -> Result<PredictionSet> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_err(path, 1, "<header>", format!("{other:?}")),
        })?;
    let headers = reader.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "label" {
        return Err(parse_err(path, 1, "<header>", "expected header `label,c0,c1,...`"));
    }
    for (j, h) in headers.iter().skip(1).enumerate() {
        if h != format!("c{j}") {
            return Err(parse_err(path, 1, h, format!("expected column name `c{j}`")));
        }
    }
    let k = headers.len() - 1;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let lineno = idx + 2;
        let record = record.map_err(|e| parse_err(path, lineno, "<row>", e.to_string()))?;
        if record.len() != k + 1 {
            return Err(parse_err(
                path,
                lineno,
                "<row>",
                format!("row has {} classes, header declares {k}", record.len().saturating_sub(1)),
            ));
        }
        let label: usize = record[0]
            .parse()
            .map_err(|_| parse_err(path, lineno, "label", format!("`{}` is not a class index", &record[0])))?;
        if label >= k {
            return Err(parse_err(path, lineno, "label", format!("label {label} out of range [0, {k})")));
        }
        let mut values = Vec::with_capacity(k);
        for j in 0..k {
            let cell = &record[j + 1];
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(path, lineno, &format!("c{j}"), format!("`{cell}` is not a number")))?;
            values.push(v);
        }
        rows.push(validate_row(path, lineno, "c*", values, logits)?);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "<file>", "no rows"));
    }
    assemble(rows, labels, logits)
}
