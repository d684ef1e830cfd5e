use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grading::GradingRecord;
use crate::label::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationCondition {
    /// LLM label differs from the human label.
    Disagreement,
    /// Both labels are Partially Correct.
    AgreedPartiallyCorrect,
}

impl AnnotationCondition {
    fn matches(self, human: Label, llm: Label) -> bool {
        match self {
            AnnotationCondition::Disagreement => human != llm,
            AnnotationCondition::AgreedPartiallyCorrect => {
                human == Label::PartiallyCorrect && llm == Label::PartiallyCorrect
            }
        }
    }
}

impl FromStr for AnnotationCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "disagreement" => Ok(AnnotationCondition::Disagreement),
            "agreed_partially_correct" | "agreed_partial" => Ok(AnnotationCondition::AgreedPartiallyCorrect),
            _ => Err(Error::InvalidInput(format!(
                "unknown condition {s:?}; expected disagreement or agreed-partially-correct"
            ))),
        }
    }
}

/// One row of a fillable sheet. CSV columns follow field order.
/// `label_correctness` takes Human or LLM and is only filled where the
/// labels disagree; `explainability` and `subjectivity` take Yes or No.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub sample_id: String,
    pub response: String,
    pub rubric: String,
    pub human_label: Label,
    pub llm_label: Label,
    pub llm_explanation: String,
    pub label_correctness: String,
    pub explainability: String,
    pub subjectivity: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationSheet {
    pub rows: Vec<AnnotationRow>,
}

impl AnnotationSheet {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        if self.rows.is_empty() {
            w.write_record([
                "sample_id",
                "response",
                "rubric",
                "human_label",
                "llm_label",
                "llm_explanation",
                "label_correctness",
                "explainability",
                "subjectivity",
            ])?;
        }
        w.flush().map_err(|e| Error::InvalidInput(format!("writing csv: {e}")))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let rows = r.deserialize().collect::<std::result::Result<Vec<AnnotationRow>, _>>()?;
        Ok(AnnotationSheet { rows })
    }
}

/// Uniform sample without replacement of `n` scored records matching the
/// condition, kept in run order.
pub fn sample_annotation_sheet(
    records: &[GradingRecord],
    condition: AnnotationCondition,
    n: usize,
    seed: u64,
) -> Result<AnnotationSheet> {
    let matching: Vec<(&GradingRecord, Label)> = records
        .iter()
        .filter_map(|r| r.predicted.map(|p| (r, p)))
        .filter(|(r, p)| condition.matches(r.gold, *p))
        .collect();
    if matching.len() < n {
        return Err(Error::InsufficientData(format!(
            "{n} rows requested but only {} available for {condition:?}",
            matching.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, matching.len(), n).into_vec();
    picked.sort_unstable();
    let rows = picked
        .into_iter()
        .map(|i| {
            let (r, llm) = matching[i];
            AnnotationRow {
                sample_id: r.sample_id.clone(),
                response: r.response_text.clone(),
                rubric: r.rubric_text.clone().unwrap_or_default(),
                human_label: r.gold,
                llm_label: llm,
                llm_explanation: r.raw_reply.clone(),
                label_correctness: String::new(),
                explainability: String::new(),
                subjectivity: String::new(),
            }
        })
        .collect();
    Ok(AnnotationSheet { rows })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub count: usize,
    pub total: usize,
    pub fraction: f64,
}

impl Proportion {
    fn new(count: usize, total: usize) -> Self {
        Proportion {
            count,
            total,
            fraction: if total == 0 { 0.0 } else { count as f64 / total as f64 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSummary {
    pub n: usize,
    /// Over rows where the two labels differ.
    pub label_correct_human: Proportion,
    pub label_correct_llm: Proportion,
    pub explainability_yes: Proportion,
    pub explainability_no: Proportion,
    pub subjectivity_yes: Proportion,
    pub subjectivity_no: Proportion,
}

fn yes_no(value: &str) -> Option<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "yes" | "y" => Some(true),
        "no" | "n" => Some(false),
        _ => None,
    }
}

fn human_llm(value: &str) -> Option<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "human" => Some(true),
        "llm" => Some(false),
        _ => None,
    }
}

/// Proportions per judgment dimension. Rejects sheets with blank or
/// unrecognized judgments and names the offending rows.
pub fn summarize_annotations(sheet: &AnnotationSheet) -> Result<AnnotationSummary> {
    if sheet.rows.is_empty() {
        return Err(Error::InsufficientData("annotation sheet has no rows".into()));
    }
    let mut bad = Vec::new();
    let (mut human, mut llm, mut disagreements) = (0, 0, 0);
    let (mut expl_yes, mut subj_yes) = (0, 0);
    for row in &sheet.rows {
        let expl = yes_no(&row.explainability);
        let subj = yes_no(&row.subjectivity);
        let correctness = if row.human_label != row.llm_label {
            human_llm(&row.label_correctness).map(Some)
        } else {
            Some(None)
        };
        match (expl, subj, correctness) {
            (Some(e), Some(s), Some(c)) => {
                expl_yes += usize::from(e);
                subj_yes += usize::from(s);
                if let Some(h) = c {
                    disagreements += 1;
                    if h {
                        human += 1;
                    } else {
                        llm += 1;
                    }
                }
            }
            _ => bad.push(row.sample_id.clone()),
        }
    }
    if !bad.is_empty() {
        return Err(Error::InvalidInput(format!(
            "blank or unrecognized judgments in rows: {}",
            bad.join(", ")
        )));
    }
    let n = sheet.rows.len();
    Ok(AnnotationSummary {
        n,
        label_correct_human: Proportion::new(human, disagreements),
        label_correct_llm: Proportion::new(llm, disagreements),
        explainability_yes: Proportion::new(expl_yes, n),
        explainability_no: Proportion::new(n - expl_yes, n),
        subjectivity_yes: Proportion::new(subj_yes, n),
        subjectivity_no: Proportion::new(n - subj_yes, n),
    })
}
