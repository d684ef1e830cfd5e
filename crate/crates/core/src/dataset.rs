//! Canonical sample records, JSONL ingestion/validation, splitting and
//! token statistics.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::label::{collapse_label, FiveWayLabel, Label, LabelScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Human,
    LlmLabeled,
    LlmGenerated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RubricKind {
    None,
    LabelLevel,
    QuestionSpecific,
}

/// Metadata key holding the generator or labeler model for synthetic records.
pub const META_MODEL: &str = "model";

/// One graded response. Field names are the JSONL wire names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledSample {
    pub id: String,
    pub dataset: String,
    pub question_id: String,
    pub question_text: String,
    pub model_solution: String,
    pub rubric_text: Option<String>,
    pub response_text: String,
    pub label: Label,
    pub split: Split,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub meta: Map<String, Value>,
}

impl LabeledSample {
    pub fn model_name(&self) -> Option<&str> {
        self.meta.get(META_MODEL).and_then(Value::as_str)
    }
}

/// The question-level fields shared by every response to one question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionInfo {
    pub dataset: String,
    pub question_id: String,
    pub question_text: String,
    pub model_solution: String,
    pub rubric_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub scheme: LabelScheme,
    pub rubric_kind: RubricKind,
    pub samples: Vec<LabeledSample>,
}

#[derive(Debug, Clone, Default)]
pub struct ImportReport {
    pub warnings: Vec<String>,
}

const KNOWN_FIELDS: [&str; 11] = [
    "id",
    "dataset",
    "question_id",
    "question_text",
    "model_solution",
    "rubric_text",
    "response_text",
    "label",
    "split",
    "provenance",
    "meta",
];

const REQUIRED_FIELDS: [&str; 9] = [
    "id",
    "dataset",
    "question_id",
    "question_text",
    "model_solution",
    "response_text",
    "label",
    "split",
    "provenance",
];

impl Dataset {
    /// Build a dataset from samples, checking every invariant. Line numbers
    /// in errors are 1-based sample positions.
    pub fn new(name: impl Into<String>, scheme: LabelScheme, samples: Vec<LabeledSample>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, s) in samples.iter().enumerate() {
            validate_sample(s, scheme, i + 1)?;
            if !seen.insert(s.id.as_str()) {
                return Err(Error::InvalidRecord {
                    line: i + 1,
                    message: format!("duplicate id {:?}", s.id),
                });
            }
        }
        let rubric_kind = infer_rubric_kind(&samples)?;
        Ok(Dataset {
            name: name.into(),
            scheme,
            rubric_kind,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn with_samples(&self, samples: Vec<LabeledSample>) -> Result<Dataset> {
        Dataset::new(self.name.clone(), self.scheme, samples)
    }

    pub fn filter_split(&self, split: Split) -> Vec<&LabeledSample> {
        self.samples.iter().filter(|s| s.split == split).collect()
    }

    /// Distinct questions in order of first appearance.
    pub fn questions(&self) -> Vec<QuestionInfo> {
        let mut seen = HashSet::new();
        self.samples
            .iter()
            .filter(|s| seen.insert(s.question_id.as_str()))
            .map(|s| QuestionInfo {
                dataset: s.dataset.clone(),
                question_id: s.question_id.clone(),
                question_text: s.question_text.clone(),
                model_solution: s.model_solution.clone(),
                rubric_text: s.rubric_text.clone(),
            })
            .collect()
    }

    pub fn label_counts(&self) -> BTreeMap<Label, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.samples {
            *counts.entry(s.label).or_insert(0) += 1;
        }
        counts
    }
}

fn validate_sample(s: &LabeledSample, scheme: LabelScheme, line: usize) -> Result<()> {
    let bad = |message: String| Error::InvalidRecord { line, message };
    if s.id.trim().is_empty() {
        return Err(bad("empty id".into()));
    }
    if s.question_id.trim().is_empty() {
        return Err(bad("empty question_id".into()));
    }
    if !scheme.contains(s.label) {
        return Err(bad(format!("label {} is not part of the {scheme} scheme", s.label)));
    }
    if s.provenance != Provenance::Human && s.model_name().is_none_or(str::is_empty) {
        return Err(bad(format!(
            "provenance {:?} requires meta.{META_MODEL} naming the model",
            s.provenance
        )));
    }
    Ok(())
}

fn infer_rubric_kind(samples: &[LabeledSample]) -> Result<RubricKind> {
    if samples.iter().all(|s| s.rubric_text.is_none()) {
        return Ok(RubricKind::None);
    }
    let mut per_question: HashMap<&str, &Option<String>> = HashMap::new();
    for (i, s) in samples.iter().enumerate() {
        match per_question.get(s.question_id.as_str()) {
            Some(prev) if **prev != s.rubric_text => {
                return Err(Error::InvalidRecord {
                    line: i + 1,
                    message: format!("rubric_text differs from earlier samples of question {:?}", s.question_id),
                })
            }
            Some(_) => {}
            None => {
                per_question.insert(&s.question_id, &s.rubric_text);
            }
        }
    }
    Ok(RubricKind::QuestionSpecific)
}

/// Parse canonical JSONL from a reader. Unknown top-level fields are moved
/// into `meta` and reported as warnings.
pub fn read_jsonl<R: BufRead>(reader: R, name: &str, scheme: LabelScheme) -> Result<(Dataset, ImportReport)> {
    let mut report = ImportReport::default();
    let mut samples = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(name, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::InvalidRecord { line: lineno, message };
        let value: Value = serde_json::from_str(&line).map_err(|e| bad(format!("malformed JSON: {e}")))?;
        let Value::Object(mut obj) = value else {
            return Err(bad("expected a JSON object".into()));
        };
        for field in REQUIRED_FIELDS {
            if !obj.contains_key(field) {
                return Err(bad(format!("missing required field `{field}`")));
            }
        }
        let unknown: Vec<String> = obj
            .keys()
            .filter(|k| !KNOWN_FIELDS.contains(&k.as_str()))
            .cloned()
            .collect();
        if !unknown.is_empty() {
            let mut extra = Map::new();
            for key in &unknown {
                if let Some(v) = obj.remove(key) {
                    extra.insert(key.clone(), v);
                }
            }
            let meta = obj
                .entry("meta")
                .or_insert_with(|| Value::Object(Map::new()));
            if meta.is_null() {
                *meta = Value::Object(Map::new());
            }
            let Value::Object(meta) = meta else {
                return Err(bad("`meta` must be an object".into()));
            };
            for (k, v) in extra {
                meta.entry(k).or_insert(v);
            }
            report
                .warnings
                .push(format!("line {lineno}: unknown field(s) {} kept under meta", unknown.join(", ")));
        }
        if obj.get("meta").is_some_and(Value::is_null) {
            obj.remove("meta");
        }
        let sample: LabeledSample =
            serde_json::from_value(Value::Object(obj)).map_err(|e| bad(e.to_string()))?;
        validate_sample(&sample, scheme, lineno)?;
        if let Some(first) = seen.insert(sample.id.clone(), lineno) {
            return Err(bad(format!("duplicate id {:?} (first seen on line {first})", sample.id)));
        }
        samples.push(sample);
    }
    let rubric_kind = infer_rubric_kind(&samples)?;
    let ds_name = match samples.first() {
        Some(first) if samples.iter().all(|s| s.dataset == first.dataset) => first.dataset.clone(),
        _ => name.to_string(),
    };
    Ok((
        Dataset {
            name: ds_name,
            scheme,
            rubric_kind,
            samples,
        },
        report,
    ))
}

pub fn import_jsonl(path: impl AsRef<Path>, scheme: LabelScheme) -> Result<(Dataset, ImportReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let (ds, report) = read_jsonl(BufReader::new(file), &stem, scheme).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })?;
    for w in &report.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok((ds, report))
}

/// Import a file whose labels use the 5-way annotation. Each label is
/// collapsed into `scheme` and the source label is kept as
/// `meta.five_way_label`.
pub fn import_five_way_jsonl(path: impl AsRef<Path>, scheme: LabelScheme) -> Result<(Dataset, ImportReport)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rewritten = String::with_capacity(text.len() + text.len() / 8);
    for (idx, line) in text.lines().enumerate() {
        if !line.trim().is_empty() {
            let bad = |message: String| Error::InvalidRecord { line: idx + 1, message };
            let mut value: Value = serde_json::from_str(line).map_err(|e| bad(format!("malformed JSON: {e}")))?;
            let obj = value.as_object_mut().ok_or_else(|| bad("expected a JSON object".into()))?;
            let raw = obj
                .get("label")
                .and_then(Value::as_str)
                .ok_or_else(|| bad("missing required field `label`".into()))?
                .to_string();
            let five: FiveWayLabel = raw.parse().map_err(|e: Error| bad(e.to_string()))?;
            obj.insert("label".into(), serde_json::to_value(collapse_label(five, scheme))?);
            let meta = obj.entry("meta").or_insert_with(|| Value::Object(Map::new()));
            if meta.is_null() {
                *meta = Value::Object(Map::new());
            }
            if let Value::Object(meta) = meta {
                meta.insert("five_way_label".into(), serde_json::to_value(five)?);
            }
            rewritten.push_str(&value.to_string());
        }
        rewritten.push('\n');
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    read_jsonl(rewritten.as_bytes(), &stem, scheme)
}

pub fn write_jsonl<W: Write>(mut writer: W, samples: &[LabeledSample]) -> Result<()> {
    for s in samples {
        serde_json::to_writer(&mut writer, s)?;
        writer.write_all(b"\n").map_err(|e| Error::io("<jsonl>", e))?;
    }
    Ok(())
}

pub fn export_jsonl(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_jsonl(&mut w, &ds.samples)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Carve a validation split out of the Train samples.
///
/// Returns `(train, val)`; validation receives `round(fraction * n)` samples
/// chosen by a seeded shuffle, relabelled with `split = val`. Both parts keep
/// the original sample order. Non-train samples are not included in either.
pub fn split_train_val(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidInput(format!("fraction {fraction} must lie in (0, 1)")));
    }
    let train: Vec<&LabeledSample> = ds.filter_split(Split::Train);
    let n = train.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 train samples, found {n}")));
    }
    let n_val = (fraction * n as f64).round() as usize;
    if n_val == 0 || n_val == n {
        return Err(Error::InvalidInput(format!(
            "fraction {fraction} of {n} samples leaves an empty partition"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut is_val = vec![false; n];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    let mut train_part = Vec::with_capacity(n - n_val);
    let mut val_part = Vec::with_capacity(n_val);
    for (s, val) in train.into_iter().zip(is_val) {
        if val {
            let mut s = s.clone();
            s.split = Split::Val;
            val_part.push(s);
        } else {
            train_part.push(s.clone());
        }
    }
    Ok((ds.with_samples(train_part)?, ds.with_samples(val_part)?))
}

/// Response-length statistics using whitespace tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenStats {
    pub mean: f64,
    pub median: f64,
    pub min: usize,
    pub max: usize,
    pub n_questions: usize,
    pub n_responses: usize,
}

pub fn whitespace_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn dataset_stats(ds: &Dataset) -> Result<TokenStats> {
    if ds.samples.is_empty() {
        return Err(Error::InsufficientData("dataset has no samples".into()));
    }
    let mut counts: Vec<usize> = ds.samples.iter().map(|s| whitespace_tokens(&s.response_text)).collect();
    counts.sort_unstable();
    let n = counts.len();
    let mean = counts.iter().sum::<usize>() as f64 / n as f64;
    let median = if n % 2 == 1 {
        counts[n / 2] as f64
    } else {
        (counts[n / 2 - 1] + counts[n / 2]) as f64 / 2.0
    };
    let n_questions = ds.samples.iter().map(|s| &s.question_id).collect::<HashSet<_>>().len();
    Ok(TokenStats {
        mean,
        median,
        min: counts[0],
        max: counts[n - 1],
        n_questions,
        n_responses: n,
    })
}
