use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, bootstrap_ci, label_metrics, macro_f1, LabelMetrics};
use crate::error::{Error, Result};
use crate::grading::GradingRecord;
use crate::label::{Label, LabelScheme};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub resamples: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            resamples: 2000,
            alpha: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionAccuracy {
    pub n: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scheme: LabelScheme,
    /// Scored samples; unscored ones are counted separately.
    pub n: usize,
    pub n_unscored: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub accuracy_ci: (f64, f64),
    pub f1_ci: (f64, f64),
    pub bootstrap: BootstrapOptions,
    pub per_label: Vec<LabelMetrics>,
    pub per_question: BTreeMap<String, QuestionAccuracy>,
}

impl EvalReport {
    pub fn compute(records: &[GradingRecord], scheme: LabelScheme, opts: BootstrapOptions) -> Result<Self> {
        if let Some(r) = records.iter().find(|r| r.scheme != scheme) {
            return Err(Error::InvalidInput(format!(
                "record {} was graded under {}, not {scheme}",
                r.sample_id, r.scheme
            )));
        }
        let scored: Vec<&GradingRecord> = records.iter().filter(|r| r.is_scored()).collect();
        if scored.is_empty() {
            return Err(Error::InsufficientData(format!(
                "no scored results among {} records",
                records.len()
            )));
        }
        let preds: Vec<Label> = scored.iter().filter_map(|r| r.predicted).collect();
        let golds: Vec<Label> = scored.iter().map(|r| r.gold).collect();
        let f1 = |p: &[Label], g: &[Label]| macro_f1(p, g, scheme);

        let mut per_question: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for r in &scored {
            let e = per_question.entry(r.question_id.clone()).or_default();
            e.0 += 1;
            e.1 += usize::from(r.predicted == Some(r.gold));
        }
        Ok(EvalReport {
            scheme,
            n: scored.len(),
            n_unscored: records.len() - scored.len(),
            accuracy: accuracy(&preds, &golds)?,
            macro_f1: f1(&preds, &golds)?,
            accuracy_ci: bootstrap_ci(&preds, &golds, accuracy, opts.resamples, opts.alpha, opts.seed)?,
            f1_ci: bootstrap_ci(&preds, &golds, f1, opts.resamples, opts.alpha, opts.seed)?,
            bootstrap: opts,
            per_label: label_metrics(&preds, &golds, scheme)?,
            per_question: per_question
                .into_iter()
                .map(|(q, (n, hits))| {
                    (
                        q,
                        QuestionAccuracy {
                            n,
                            accuracy: hits as f64 / n as f64,
                        },
                    )
                })
                .collect(),
        })
    }

    pub fn to_markdown(&self, by_question: bool) -> String {
        let level = (1.0 - self.bootstrap.alpha) * 100.0;
        let mut out = String::new();
        let _ = writeln!(out, "| Metric | Value | {level:.0}% CI |");
        let _ = writeln!(out, "|---|---|---|");
        let _ = writeln!(
            out,
            "| Accuracy | {:.4} | [{:.4}, {:.4}] |",
            self.accuracy, self.accuracy_ci.0, self.accuracy_ci.1
        );
        let _ = writeln!(
            out,
            "| Macro F1 | {:.4} | [{:.4}, {:.4}] |",
            self.macro_f1, self.f1_ci.0, self.f1_ci.1
        );
        let _ = writeln!(out, "\nScored: {}, unscored: {}\n", self.n, self.n_unscored);
        let _ = writeln!(out, "| Label | Precision | Recall | F1 | Support |");
        let _ = writeln!(out, "|---|---|---|---|---|");
        for m in &self.per_label {
            let _ = writeln!(
                out,
                "| {} | {:.4} | {:.4} | {:.4} | {} |",
                m.label.display_name(),
                m.precision,
                m.recall,
                m.f1,
                m.support
            );
        }
        if by_question {
            let _ = writeln!(out, "\n| Question | N | Accuracy |");
            let _ = writeln!(out, "|---|---|---|");
            for (q, a) in &self.per_question {
                let _ = writeln!(out, "| {q} | {} | {:.4} |", a.n, a.accuracy);
            }
        }
        out
    }
}
