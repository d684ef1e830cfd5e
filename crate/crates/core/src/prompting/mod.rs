//! Grading, feedback and synthesis prompts, plus reply parsing.

pub mod templates;

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::index;
use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{Dataset, LabeledSample, Split};
use crate::error::{Error, Result};
use crate::label::{Label, LabelScheme};

/// Largest supported number of few-shot examples per label.
pub const MAX_EXAMPLES_PER_LABEL: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PromptMode {
    /// Question-specific rubric, no examples.
    Rubric,
    /// Generic label-level rubric plus `k` graded examples per label.
    Examples { k: u8 },
}

impl PromptMode {
    pub fn examples(k: u8) -> Result<Self> {
        if k > MAX_EXAMPLES_PER_LABEL {
            return Err(Error::InvalidInput(format!(
                "k = {k} exceeds {MAX_EXAMPLES_PER_LABEL} examples per label"
            )));
        }
        Ok(PromptMode::Examples { k })
    }

    pub fn examples_per_label(&self) -> usize {
        match self {
            PromptMode::Rubric => 0,
            PromptMode::Examples { k } => usize::from(*k),
        }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PromptMode::Rubric => f.write_str("rubric"),
            PromptMode::Examples { k } => write!(f, "examples-k{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }
}

/// An ordered chat prompt: one system message followed by user content.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptText {
    pub messages: Vec<ChatMessage>,
}

impl PromptText {
    fn new(system: String, user: String) -> Self {
        PromptText {
            messages: vec![ChatMessage::system(system), ChatMessage::user(user)],
        }
    }

    pub fn system(&self) -> &str {
        &self.messages[0].content
    }

    /// Concatenated user content.
    pub fn user(&self) -> String {
        self.messages
            .iter()
            .filter(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Append a user follow-up (used by the retry policies).
    pub fn with_follow_up(&self, text: &str) -> PromptText {
        let mut p = self.clone();
        p.messages.push(ChatMessage::user(text));
        p
    }

    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("prompt serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradedExample {
    pub sample_id: String,
    pub response_text: String,
    pub label: Label,
}

/// Few-shot examples grouped by label (scheme order, Correct first).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleSet {
    pub k: usize,
    pub examples: Vec<GradedExample>,
}

impl ExampleSet {
    pub fn empty() -> Self {
        ExampleSet::default()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.examples.iter().filter(|e| e.label == label).count()
    }

    pub fn contains_sample(&self, sample_id: &str) -> bool {
        self.examples.iter().any(|e| e.sample_id == sample_id)
    }
}

/// Draw `k` train examples per label for one question, uniformly without
/// replacement, never including `exclude_id`.
pub fn select_examples<R: Rng + ?Sized>(
    train: &Dataset,
    question_id: &str,
    k: usize,
    exclude_id: Option<&str>,
    rng: &mut R,
) -> Result<ExampleSet> {
    let mut set = ExampleSet {
        k,
        examples: Vec::with_capacity(k * train.scheme.labels().len()),
    };
    if k == 0 {
        return Ok(set);
    }
    for &label in train.scheme.labels() {
        let candidates: Vec<&LabeledSample> = train
            .samples
            .iter()
            .filter(|s| {
                s.split == Split::Train
                    && s.question_id == question_id
                    && s.label == label
                    && Some(s.id.as_str()) != exclude_id
            })
            .collect();
        if candidates.len() < k {
            return Err(Error::InsufficientExamples {
                question_id: question_id.to_string(),
                label,
                available: candidates.len(),
                needed: k,
            });
        }
        for i in index::sample(rng, candidates.len(), k) {
            let s = candidates[i];
            set.examples.push(GradedExample {
                sample_id: s.id.clone(),
                response_text: s.response_text.clone(),
                label,
            });
        }
    }
    Ok(set)
}

/// The generic label-level rubric, restricted to the scheme's labels.
pub fn label_level_rubric(scheme: LabelScheme) -> String {
    templates::LABEL_LEVEL_RUBRIC
        .text()
        .lines()
        .filter(|line| scheme == LabelScheme::ThreeWay || !line.starts_with("- Partially Correct"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn criteria(scheme: LabelScheme) -> &'static str {
    match scheme {
        LabelScheme::ThreeWay => {
            "   - Correct (C): 2 points\n   - Partially Correct But Incomplete (P): 1 point\n   - Incorrect (I): 0 points"
        }
        LabelScheme::TwoWay => "   - Correct (C): 1 point\n   - Incorrect (I): 0 points",
    }
}

fn format_examples(scheme: LabelScheme) -> String {
    scheme
        .labels()
        .iter()
        .map(|&l| format!("   - {}: {}", l.display_name(), render_score(l, scheme)))
        .collect::<Vec<_>>()
        .join("\n")
}

fn points_phrase(label: Label, scheme: LabelScheme) -> String {
    match scheme.points(label) {
        Some(1) => "1 point".to_string(),
        Some(p) => format!("{p} points"),
        None => "not scored".to_string(),
    }
}

fn examples_section(examples: &ExampleSet, scheme: LabelScheme) -> String {
    if examples.is_empty() {
        return "- Graded Examples: (none)\n".to_string();
    }
    let mut s = String::from("- Graded Examples:\n");
    for (i, e) in examples.examples.iter().enumerate() {
        s.push_str(&format!(
            "  Example {} ({}, {}): {}\n",
            i + 1,
            e.label.display_name(),
            points_phrase(e.label, scheme),
            e.response_text
        ));
    }
    s
}

/// Number of rendered few-shot examples in a prompt body.
pub fn count_rendered_examples(prompt: &PromptText) -> usize {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?m)^  Example \d+ \(").expect("valid regex"));
    re.find_iter(&prompt.user()).count()
}

struct GradingParts<'a> {
    rubric: String,
    examples: Option<&'a ExampleSet>,
    response_format: &'static str,
}

fn render_grading(sample: &LabeledSample, scheme: LabelScheme, parts: GradingParts<'_>) -> PromptText {
    let examples = parts
        .examples
        .map(|e| examples_section(e, scheme))
        .unwrap_or_default();
    let user = templates::GRADING_USER.render(&[
        ("question", &sample.question_text),
        ("model_solution", &sample.model_solution),
        ("rubric", &parts.rubric),
        ("student_answer", &sample.response_text),
        ("examples_section", &examples),
        ("criteria", criteria(scheme)),
        ("response_format", parts.response_format),
        ("format_examples", &format_examples(scheme)),
    ]);
    PromptText::new(templates::GRADING_SYSTEM.text().to_string(), user)
}

/// Render the grading prompt for one sample.
pub fn build_grading_prompt(
    sample: &LabeledSample,
    mode: PromptMode,
    scheme: LabelScheme,
    examples: &ExampleSet,
) -> Result<PromptText> {
    match mode {
        PromptMode::Rubric => {
            let rubric = sample
                .rubric_text
                .as_deref()
                .filter(|r| !r.trim().is_empty())
                .ok_or_else(|| Error::MissingRubric(sample.question_id.clone()))?;
            if !examples.is_empty() {
                return Err(Error::InvalidInput("rubric mode carries no examples".into()));
            }
            Ok(render_grading(
                sample,
                scheme,
                GradingParts {
                    rubric: rubric.to_string(),
                    examples: None,
                    response_format: templates::SCORE_FORMAT.text(),
                },
            ))
        }
        PromptMode::Examples { k } => {
            let k = usize::from(k);
            if let Some(&label) = scheme.labels().iter().find(|&&l| examples.count(l) != k) {
                return Err(Error::InvalidInput(format!(
                    "expected {k} examples for label {label}, got {}",
                    examples.count(label)
                )));
            }
            if examples.len() != k * scheme.labels().len() {
                return Err(Error::InvalidInput("examples contain labels outside the scheme".into()));
            }
            if examples.contains_sample(&sample.id) {
                return Err(Error::InvalidInput(format!(
                    "sample {} appears among its own examples",
                    sample.id
                )));
            }
            Ok(render_grading(
                sample,
                scheme,
                GradingParts {
                    rubric: label_level_rubric(scheme),
                    examples: Some(examples),
                    response_format: templates::SCORE_FORMAT.text(),
                },
            ))
        }
    }
}

/// Grading prompt that also asks for a written rationale before the score.
pub fn build_feedback_prompt(
    sample: &LabeledSample,
    scheme: LabelScheme,
    rubric_text: Option<&str>,
) -> Result<PromptText> {
    let rubric = rubric_text
        .or(sample.rubric_text.as_deref())
        .filter(|r| !r.trim().is_empty())
        .ok_or_else(|| Error::MissingRubric(sample.question_id.clone()))?;
    Ok(render_grading(
        sample,
        scheme,
        GradingParts {
            rubric: rubric.to_string(),
            examples: None,
            response_format: templates::FEEDBACK_FORMAT.text(),
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ScoreError {
    #[error("no [[score]] found in reply")]
    NoScoreFound,
    #[error("score {0} is outside the scheme")]
    OutOfRange(i64),
}

pub fn render_score(label: Label, scheme: LabelScheme) -> String {
    match scheme.points(label) {
        Some(p) => format!("[[{p}]]"),
        None => String::new(),
    }
}

/// Extract the last `[[n]]` from a reply and map it to a label.
pub fn parse_score(text: &str, scheme: LabelScheme) -> std::result::Result<Label, ScoreError> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"\[\[\s*([+-]?\d+)\s*\]\]").expect("valid regex"));
    let last = re.captures_iter(text).last().ok_or(ScoreError::NoScoreFound)?;
    let value: i64 = last[1]
        .parse()
        .unwrap_or(if last[1].starts_with('-') { i64::MIN } else { i64::MAX });
    scheme.from_points(value).ok_or(ScoreError::OutOfRange(value))
}

/// Inputs of a response-generation prompt.
#[derive(Debug, Clone)]
pub struct GenerationSpec<'a> {
    pub question: &'a str,
    pub model_solution: &'a str,
    pub rubric_text: Option<&'a str>,
    pub target_label: Label,
    pub scheme: LabelScheme,
    pub target_length_words: usize,
    /// Elements the response should include (diversity-enhanced synthesis).
    pub case_elements: Option<&'a [String]>,
}

pub fn build_generation_prompt(spec: &GenerationSpec<'_>) -> Result<PromptText> {
    if spec.target_length_words == 0 {
        return Err(Error::InvalidInput("target length must be at least one word".into()));
    }
    let rubric = match spec.rubric_text {
        Some(r) if !r.trim().is_empty() => r.to_string(),
        _ => label_level_rubric(spec.scheme),
    };
    let case_section = match spec.case_elements {
        None => String::new(),
        Some([]) => "The response should include none of the rubric elements.\n".to_string(),
        Some(elements) => {
            let list: Vec<String> = elements.iter().map(|e| format!("- {e}")).collect();
            format!(
                "The response should include exactly these rubric elements and no others:\n{}\n",
                list.join("\n")
            )
        }
    };
    let length = spec.target_length_words.to_string();
    let user = templates::GENERATION.render(&[
        ("question", spec.question),
        ("model_solution", spec.model_solution),
        ("rubric", &rubric),
        ("label", spec.target_label.display_name()),
        ("points", &points_phrase(spec.target_label, spec.scheme)),
        ("case_section", &case_section),
        ("length", &length),
    ]);
    Ok(PromptText::new(templates::SYNTHESIS_SYSTEM.text().to_string(), user))
}

pub fn build_element_list_prompt(rubric_text: &str) -> Result<PromptText> {
    if rubric_text.trim().is_empty() {
        return Err(Error::InvalidInput("element extraction needs a non-empty rubric".into()));
    }
    let user = templates::ELEMENT_LIST.render(&[("rubric", rubric_text)]);
    Ok(PromptText::new(templates::SYNTHESIS_SYSTEM.text().to_string(), user))
}

pub fn build_case_statement_prompt(
    elements: &[String],
    rubric_text: &str,
    scheme: LabelScheme,
    count: usize,
) -> Result<PromptText> {
    if elements.is_empty() {
        return Err(Error::InvalidInput("case statements need a non-empty element list".into()));
    }
    if count == 0 {
        return Err(Error::InvalidInput("case statement count must be positive".into()));
    }
    let listed: Vec<String> = elements.iter().enumerate().map(|(i, e)| format!("{}. {e}", i + 1)).collect();
    let labels: Vec<&str> = scheme.labels().iter().map(|l| l.display_name()).collect();
    let values: Vec<String> = scheme.labels().iter().map(|l| format!("\"{}\"", l.as_str())).collect();
    let count = count.to_string();
    let user = templates::CASE_STATEMENTS.render(&[
        ("elements", &listed.join("\n")),
        ("rubric", rubric_text),
        ("count", &count),
        ("labels", &labels.join(", ")),
        ("label_values", &values.join(", ")),
    ]);
    Ok(PromptText::new(templates::SYNTHESIS_SYSTEM.text().to_string(), user))
}

/// The first well-formed JSON array embedded in a reply.
pub fn extract_json_array(text: &str) -> Option<Vec<Value>> {
    text.match_indices('[').find_map(|(i, _)| {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Array(items))) => Some(items),
            _ => None,
        }
    })
}

impl FromStr for PromptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rubric" => Ok(PromptMode::Rubric),
            other => match other.strip_prefix("examples-k").or_else(|| other.strip_prefix("k")) {
                Some(k) => PromptMode::examples(
                    k.parse()
                        .map_err(|_| Error::InvalidInput(format!("bad prompt mode {other:?}")))?,
                ),
                None => Err(Error::InvalidInput(format!("bad prompt mode {other:?}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests;
