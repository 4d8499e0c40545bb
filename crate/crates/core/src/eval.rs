//! Dataset loading, splitting, classification metrics and rationale metrics.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Label, NewsItem};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub headline: String,
    #[serde(default)]
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    pub label: Label,
}

impl DatasetRecord {
    pub fn to_news_item(&self) -> NewsItem {
        NewsItem {
            id: self.id.clone(),
            headline: self.headline.clone(),
            body: self.body.clone(),
            image: self.image_path.clone(),
            gold_label: Some(self.label),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// Comma- or tab-separated with a header row.
    Delimited,
    /// One JSON object per line.
    RecordPerLine,
}

impl DatasetFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" | "tsv" => Some(DatasetFormat::Delimited),
            "jsonl" | "ndjson" => Some(DatasetFormat::RecordPerLine),
            _ => None,
        }
    }
}

const ID_COLUMNS: [&str; 1] = ["id"];
const HEADLINE_COLUMNS: [&str; 2] = ["headline", "title"];
const BODY_COLUMNS: [&str; 3] = ["body", "text", "content"];
const IMAGE_COLUMNS: [&str; 2] = ["image_path", "image"];
const LABEL_COLUMNS: [&str; 2] = ["label", "gold_label"];

fn column(headers: &[String], names: &[&str]) -> Option<usize> {
    headers.iter().position(|h| names.contains(&h.trim().to_ascii_lowercase().as_str()))
}

fn validate_record(rec: &DatasetRecord, line: usize) -> Result<()> {
    let schema = |m: &str| Error::Schema {
        line,
        message: m.to_string(),
    };
    if rec.id.trim().is_empty() {
        return Err(schema("missing id"));
    }
    if rec.headline.trim().is_empty() {
        return Err(schema("missing headline"));
    }
    Ok(())
}

fn load_delimited(path: &Path) -> Result<Vec<DatasetRecord>> {
    let tab = path.extension().and_then(|e| e.to_str()).map(|e| e.eq_ignore_ascii_case("tsv")) == Some(true);
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(if tab { b'\t' } else { b',' })
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Schema {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let missing = |what: &str| Error::Schema {
        line: 1,
        message: format!("header has no {what} column"),
    };
    let id_col = column(&headers, &ID_COLUMNS).ok_or_else(|| missing("id"))?;
    let headline_col = column(&headers, &HEADLINE_COLUMNS).ok_or_else(|| missing("headline"))?;
    let label_col = column(&headers, &LABEL_COLUMNS).ok_or_else(|| missing("label"))?;
    let body_col = column(&headers, &BODY_COLUMNS);
    let image_col = column(&headers, &IMAGE_COLUMNS);

    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Schema {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let get = |c: Option<usize>| c.and_then(|c| row.get(c)).unwrap_or("").to_string();
        let raw_label = get(Some(label_col));
        let label = Label::parse(&raw_label).ok_or_else(|| Error::Schema {
            line,
            message: if raw_label.trim().is_empty() {
                "missing label".to_string()
            } else {
                format!("invalid label `{raw_label}` (expected REAL or FAKE)")
            },
        })?;
        let image = get(image_col);
        let rec = DatasetRecord {
            id: get(Some(id_col)),
            headline: get(Some(headline_col)),
            body: get(body_col),
            image_path: if image.trim().is_empty() { None } else { Some(image) },
            label,
        };
        validate_record(&rec, line)?;
        out.push(rec);
    }
    Ok(out)
}

fn load_record_per_line(path: &Path) -> Result<Vec<DatasetRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(line).map_err(|e| Error::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        validate_record(&rec, i + 1)?;
        out.push(rec);
    }
    Ok(out)
}

/// Loads labeled records, rejecting malformed rows with their line number.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<DatasetRecord>> {
    if !path.is_file() {
        return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")));
    }
    let records = match format {
        DatasetFormat::Delimited => load_delimited(path)?,
        DatasetFormat::RecordPerLine => load_record_per_line(path)?,
    };
    let mut seen = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        if let Some(prev) = seen.insert(r.id.as_str(), i) {
            return Err(Error::Schema {
                line: i + 2,
                message: format!("duplicate id `{}` (first seen in record {})", r.id, prev + 1),
            });
        }
    }
    Ok(records)
}

/// `(real, fake)` counts.
pub fn class_counts(records: &[DatasetRecord]) -> (usize, usize) {
    let fake = records.iter().filter(|r| r.label == Label::Fake).count();
    (records.len() - fake, fake)
}

/// Split sizes `(floor(n r0 / s), floor(n r1 / s), remainder)` with `s = r0 + r1 + r2`.
pub fn split_sizes(n: usize, ratios: [u32; 3]) -> Result<(usize, usize, usize)> {
    if ratios.contains(&0) {
        return Err(Error::Precondition("split ratios must be positive".into()));
    }
    let total: u64 = ratios.iter().map(|r| *r as u64).sum();
    let train = (n as u64 * ratios[0] as u64 / total) as usize;
    let val = (n as u64 * ratios[1] as u64 / total) as usize;
    Ok((train, val, n - train - val))
}

/// Seeded shuffle, then consecutive train / validation / test slices.
pub fn split<T: Clone>(records: &[T], ratios: [u32; 3], seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let (train, val, _) = split_sizes(records.len(), ratios)?;
    let mut shuffled = records.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = shuffled.split_off(train + val);
    let val_part = shuffled.split_off(train);
    Ok((shuffled, val_part, test))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_pairs(preds: &[Label], labels: &[Label], positive: Label) -> Self {
        let mut c = Confusion::default();
        for (p, y) in preds.iter().zip(labels) {
            match (*p == positive, *y == positive) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Precision, recall and F1 of the positive class; 0 where undefined.
    pub fn prf(&self) -> (f64, f64, f64) {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let p = ratio(self.tp, self.tp + self.fp);
        let r = ratio(self.tp, self.tp + self.fn_);
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        (p, r, f1)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Average {
    /// Scores of the positive class only.
    #[default]
    Binary,
    /// Unweighted mean over both classes.
    Macro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub n: usize,
}

pub fn compute_classification_metrics(preds: &[Label], labels: &[Label], positive: Label, average: Average) -> Result<MetricsReport> {
    if preds.len() != labels.len() {
        return Err(Error::Reject(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Reject("metrics need at least one sample".into()));
    }
    let c = Confusion::from_pairs(preds, labels, positive);
    let acc = (c.tp + c.tn) as f64 / c.total() as f64;
    let (precision, recall, f1) = match average {
        Average::Binary => c.prf(),
        Average::Macro => {
            let negative = if positive == Label::Fake { Label::Real } else { Label::Fake };
            let a = c.prf();
            let b = Confusion::from_pairs(preds, labels, negative).prf();
            ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0, (a.2 + b.2) / 2.0)
        }
    };
    Ok(MetricsReport {
        acc,
        f1,
        precision,
        recall,
        n: preds.len(),
    })
}

/// Per-metric differences in percentage points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utility {
    pub acc: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

pub fn compute_utility(with: &MetricsReport, without: &MetricsReport) -> Result<Utility> {
    if with.n != without.n {
        return Err(Error::Reject(format!("reports cover {} and {} samples", with.n, without.n)));
    }
    Ok(Utility {
        acc: 100.0 * (with.acc - without.acc),
        f1: 100.0 * (with.f1 - without.f1),
        precision: 100.0 * (with.precision - without.precision),
        recall: 100.0 * (with.recall - without.recall),
    })
}

fn paired_mean(a: &[f64], b: &[f64], what: &str) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Reject(format!("{what}: {} vs {} samples", a.len(), b.len())));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).sum::<f64>() / a.len() as f64)
}

/// Mean of `1[correct with] - 1[correct without]`.
pub fn compute_las(correct_with: &[bool], correct_without: &[bool]) -> Result<f64> {
    let f = |v: &[bool]| v.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    paired_mean(&f(correct_with), &f(correct_without), "LAS")
}

/// Mean true-label log-likelihood gain.
pub fn compute_rev(loglik_with: &[f64], loglik_without: &[f64]) -> Result<f64> {
    paired_mean(loglik_with, loglik_without, "REV")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationaleMetrics {
    pub utility: Utility,
    pub las: f64,
    pub rev: Option<f64>,
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub pred: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprob_true_label: Option<f64>,
}

#[derive(Deserialize)]
struct RawPrediction {
    id: String,
    pred: String,
    #[serde(default)]
    logprob_true_label: Option<f64>,
}

/// Reads `{id, pred, logprob_true_label?}` lines; predictions must be binary.
pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawPrediction = serde_json::from_str(line).map_err(|e| Error::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        let pred = Label::parse(&raw.pred).ok_or_else(|| Error::Schema {
            line: i + 1,
            message: format!("prediction `{}` is not REAL or FAKE", raw.pred),
        })?;
        out.push(Prediction {
            id: raw.id,
            pred,
            logprob_true_label: raw.logprob_true_label,
        });
    }
    Ok(out)
}

/// Pairs each prediction with its gold label, in prediction order.
pub fn align(preds: &[Prediction], dataset: &[DatasetRecord]) -> Result<(Vec<Label>, Vec<Label>)> {
    let gold: HashMap<&str, Label> = dataset.iter().map(|r| (r.id.as_str(), r.label)).collect();
    let mut p = Vec::with_capacity(preds.len());
    let mut y = Vec::with_capacity(preds.len());
    for pr in preds {
        let label = gold
            .get(pr.id.as_str())
            .ok_or_else(|| Error::Reject(format!("prediction `{}` has no dataset record", pr.id)))?;
        p.push(pr.pred);
        y.push(*label);
    }
    Ok((p, y))
}

/// Utility, LAS and (when both runs carry log-likelihoods) REV for paired runs.
pub fn rationale_metrics(
    with: &[Prediction],
    without: &[Prediction],
    dataset: &[DatasetRecord],
    positive: Label,
    average: Average,
) -> Result<RationaleMetrics> {
    let by_id: HashMap<&str, &Prediction> = without.iter().map(|p| (p.id.as_str(), p)).collect();
    if with.len() != without.len() || with.iter().any(|p| !by_id.contains_key(p.id.as_str())) {
        return Err(Error::Reject("paired runs must cover the same ids".into()));
    }
    let without_aligned: Vec<Prediction> = with.iter().map(|p| by_id[p.id.as_str()].clone()).collect();
    let (pw, y) = align(with, dataset)?;
    let (po, _) = align(&without_aligned, dataset)?;
    let mw = compute_classification_metrics(&pw, &y, positive, average)?;
    let mo = compute_classification_metrics(&po, &y, positive, average)?;
    let cw: Vec<bool> = pw.iter().zip(&y).map(|(p, y)| p == y).collect();
    let co: Vec<bool> = po.iter().zip(&y).map(|(p, y)| p == y).collect();
    let lw: Option<Vec<f64>> = with.iter().map(|p| p.logprob_true_label).collect();
    let lo: Option<Vec<f64>> = without_aligned.iter().map(|p| p.logprob_true_label).collect();
    let rev = match (lw, lo) {
        (Some(a), Some(b)) => Some(compute_rev(&a, &b)?),
        _ => None,
    };
    Ok(RationaleMetrics {
        utility: compute_utility(&mw, &mo)?,
        las: compute_las(&cw, &co)?,
        rev,
    })
}
