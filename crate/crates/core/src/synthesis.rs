//! Training-data synthesis: LLM relabeling of existing responses, direct
//! generation of (response, label) pairs, and element/case-driven
//! generation followed by a mandatory relabel pass.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::dataset::{Dataset, LabeledSample, Provenance, QuestionInfo, Split, META_MODEL};
use crate::error::{Error, Result};
use crate::grading::{grade_samples, GradingOptions};
use crate::label::{Label, LabelScheme};
use crate::llm::{ChatRequest, ChatResponse, LlmClient, ModelConfig};
use crate::prompting::{
    build_case_statement_prompt, build_element_list_prompt, build_generation_prompt, extract_json_array, templates,
    GenerationSpec, PromptMode, PromptText,
};

pub const DEFAULT_CASES_PER_QUESTION: usize = 12;
pub const DEFAULT_LENGTH_RANGE: (usize, usize) = (5, 128);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthesisMethod {
    LabelsOnly,
    LabelsAndResponses,
    #[serde(rename = "diversity")]
    DiversityEnhanced,
}

impl fmt::Display for SynthesisMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthesisMethod::LabelsOnly => "labels-only",
            SynthesisMethod::LabelsAndResponses => "labels-and-responses",
            SynthesisMethod::DiversityEnhanced => "diversity",
        })
    }
}

impl FromStr for SynthesisMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "labels-only" => Ok(SynthesisMethod::LabelsOnly),
            "labels-and-responses" => Ok(SynthesisMethod::LabelsAndResponses),
            "diversity" | "diversity-enhanced" => Ok(SynthesisMethod::DiversityEnhanced),
            other => Err(Error::InvalidInput(format!(
                "unknown synthesis method {other:?}; expected labels-only, labels-and-responses or diversity"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisPlan {
    pub method: SynthesisMethod,
    pub scheme: LabelScheme,
    /// Responses per label per question (labels-and-responses).
    pub per_question_counts: BTreeMap<Label, usize>,
    pub generation_cfg: ModelConfig,
    pub grading_cfg: ModelConfig,
    /// Inclusive bounds on requested response length, in words.
    pub length_range: (usize, usize),
    pub seed: u64,
    /// Case statements requested per question (diversity).
    pub cases_per_question: usize,
    /// Total responses to generate across all questions (diversity).
    /// Defaults to one response per case statement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_total: Option<usize>,
}

impl SynthesisPlan {
    /// Balanced plan: `per_label` responses for every label of the scheme.
    pub fn new(
        method: SynthesisMethod,
        scheme: LabelScheme,
        generation_cfg: ModelConfig,
        grading_cfg: ModelConfig,
        per_label: usize,
        seed: u64,
    ) -> Self {
        SynthesisPlan {
            method,
            scheme,
            per_question_counts: scheme.labels().iter().map(|&l| (l, per_label)).collect(),
            generation_cfg,
            grading_cfg,
            length_range: DEFAULT_LENGTH_RANGE,
            seed,
            cases_per_question: DEFAULT_CASES_PER_QUESTION,
            target_total: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.generation_cfg.validate()?;
        self.grading_cfg.validate()?;
        let (lo, hi) = self.length_range;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidInput(format!("length range ({lo}, {hi}) is empty or starts at 0")));
        }
        if let Some(l) = self.per_question_counts.keys().find(|l| !self.scheme.contains(**l)) {
            return Err(Error::InvalidInput(format!("count given for {l}, which is outside the {} scheme", self.scheme)));
        }
        if self.cases_per_question == 0 {
            return Err(Error::InvalidInput("cases_per_question must be positive".into()));
        }
        Ok(())
    }
}

/// One case statement: the rubric elements a response includes and the
/// label it should earn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseStatement {
    pub included_elements: Vec<String>,
    pub label: Label,
}

impl CaseStatement {
    /// Validate a parsed case against the element list and scheme.
    pub fn from_value(value: &Value, elements: &[String], scheme: LabelScheme) -> Result<Self> {
        let bad = |m: String| Error::Parse(format!("case statement {value}: {m}"));
        let obj = value.as_object().ok_or_else(|| bad("not an object".into()))?;
        let label_text = obj
            .get("label")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("missing label".into()))?;
        let label: Label = label_text.parse().map_err(|_| bad(format!("unknown label {label_text:?}")))?;
        if !scheme.contains(label) {
            return Err(bad(format!("label {label} is outside the {scheme} scheme")));
        }
        let included = obj
            .get("included_elements")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing included_elements".into()))?;
        let mut out = Vec::with_capacity(included.len());
        for e in included {
            let e = e.as_str().ok_or_else(|| bad("element is not a string".into()))?.trim();
            if !elements.iter().any(|x| x == e) {
                return Err(bad(format!("element {e:?} is not in the element list")));
            }
            if !out.iter().any(|x: &String| x == e) {
                out.push(e.to_string());
            }
        }
        Ok(CaseStatement {
            included_elements: out,
            label,
        })
    }
}

/// Parse an element-list reply: a non-empty JSON array of distinct strings.
pub fn parse_element_list(reply: &str) -> Result<Vec<String>> {
    let items = extract_json_array(reply).ok_or_else(|| Error::Parse("no JSON array in element-list reply".into()))?;
    let mut out: Vec<String> = Vec::with_capacity(items.len());
    for item in items {
        let s = item
            .as_str()
            .ok_or_else(|| Error::Parse(format!("element {item} is not a string")))?
            .trim()
            .to_string();
        if !s.is_empty() && !out.contains(&s) {
            out.push(s);
        }
    }
    if out.is_empty() {
        return Err(Error::Parse("element list is empty".into()));
    }
    Ok(out)
}

/// Parse a case-statement reply; any invalid case rejects the whole reply.
pub fn parse_case_statements(reply: &str, elements: &[String], scheme: LabelScheme) -> Result<Vec<CaseStatement>> {
    let items = extract_json_array(reply).ok_or_else(|| Error::Parse("no JSON array in case-statement reply".into()))?;
    if items.is_empty() {
        return Err(Error::Parse("no case statements".into()));
    }
    items
        .iter()
        .map(|v| CaseStatement::from_value(v, elements, scheme))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub method: Option<SynthesisMethod>,
    pub n_questions: usize,
    /// Questions dropped after unparseable element or case replies.
    pub skipped_questions: Vec<String>,
    pub n_generated: usize,
    pub n_relabeled: usize,
    /// Dropped by the relabel pass because no score could be parsed.
    pub n_unscored_dropped: usize,
    /// Relabeled samples whose new label differs from the previous one.
    pub disagreements: usize,
    pub n_output: usize,
}

pub struct SynthesisOutput {
    pub dataset: Dataset,
    pub report: SynthesisReport,
}

/// Re-grade every sample and store the grade as its label. The previous
/// label moves to `meta.original_label`; unscored samples are dropped.
pub fn relabel_dataset(
    client: &LlmClient,
    grading_cfg: &ModelConfig,
    ds: &Dataset,
    mode: PromptMode,
    train: Option<&Dataset>,
    seed: u64,
) -> Result<SynthesisOutput> {
    let opts = GradingOptions::new(mode, ds.scheme, seed);
    let run = grade_samples(client, grading_cfg, &ds.samples, train, &opts)?;
    let mut report = SynthesisReport {
        n_relabeled: ds.len(),
        ..Default::default()
    };
    let mut out = Vec::with_capacity(ds.len());
    for (sample, record) in ds.samples.iter().zip(&run.records) {
        let Some(label) = record.predicted else {
            report.n_unscored_dropped += 1;
            continue;
        };
        let mut s = sample.clone();
        if label != s.label {
            report.disagreements += 1;
        }
        s.meta.insert("original_label".into(), json!(s.label));
        s.meta
            .insert("original_provenance".into(), serde_json::to_value(s.provenance)?);
        s.meta.insert("labeler_model".into(), json!(grading_cfg.model_name));
        s.meta
            .entry(META_MODEL)
            .or_insert_with(|| json!(grading_cfg.model_name));
        s.label = label;
        s.provenance = Provenance::LlmLabeled;
        out.push(s);
    }
    if report.n_unscored_dropped > 0 {
        log::warn!("relabel dropped {} unscored samples", report.n_unscored_dropped);
    }
    report.n_output = out.len();
    Ok(SynthesisOutput {
        dataset: ds.with_samples(out)?,
        report,
    })
}

/// Deterministic per-request sampling seed, so that repeated generation
/// prompts are distinct requests (and distinct cache entries).
fn request_seed(seed: u64, question_id: &str, slot: usize) -> u64 {
    let d = Sha256::digest(format!("{seed}:{question_id}:{slot}").as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn question_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

struct GenerationJob {
    question: usize,
    slot: usize,
    label: Label,
    length: usize,
    case: Option<CaseStatement>,
    request: ChatRequest,
}

fn generated_sample(q: &QuestionInfo, job: &GenerationJob, reply: ChatResponse, cfg: &ModelConfig, dataset: &str) -> LabeledSample {
    let mut meta = serde_json::Map::new();
    meta.insert(META_MODEL.into(), json!(cfg.model_name));
    meta.insert("target_label".into(), json!(job.label));
    meta.insert("target_length_words".into(), json!(job.length));
    if let Some(case) = &job.case {
        meta.insert("case".into(), serde_json::to_value(case).expect("case serializes"));
    }
    LabeledSample {
        id: format!("{}-gen-{:04}", q.question_id, job.slot),
        dataset: dataset.to_string(),
        question_id: q.question_id.clone(),
        question_text: q.question_text.clone(),
        model_solution: q.model_solution.clone(),
        rubric_text: q.rubric_text.clone(),
        response_text: reply.content.trim().to_string(),
        label: job.label,
        split: Split::Train,
        provenance: Provenance::LlmGenerated,
        meta,
    }
}

fn run_generation(
    client: &LlmClient,
    plan: &SynthesisPlan,
    questions: &[QuestionInfo],
    jobs: &[GenerationJob],
    dataset: &str,
) -> Result<Vec<LabeledSample>> {
    let requests: Vec<ChatRequest> = jobs.iter().map(|j| j.request.clone()).collect();
    client
        .chat_many(&plan.generation_cfg, &requests)
        .into_iter()
        .zip(jobs)
        .map(|(reply, job)| Ok(generated_sample(&questions[job.question], job, reply?, &plan.generation_cfg, dataset)))
        .collect()
}

fn make_job(plan: &SynthesisPlan, questions: &[QuestionInfo], question: usize, slot: usize, label: Label, case: Option<CaseStatement>, rng: &mut ChaCha8Rng) -> Result<GenerationJob> {
    let q = &questions[question];
    let length = rng.gen_range(plan.length_range.0 as u64..=plan.length_range.1 as u64) as usize;
    let prompt = build_generation_prompt(&GenerationSpec {
        question: &q.question_text,
        model_solution: &q.model_solution,
        rubric_text: q.rubric_text.as_deref(),
        target_label: label,
        scheme: plan.scheme,
        target_length_words: length,
        case_elements: case.as_ref().map(|c| c.included_elements.as_slice()),
    })?;
    let request = ChatRequest::new(&plan.generation_cfg, &prompt).with_seed(request_seed(plan.seed, &q.question_id, slot));
    Ok(GenerationJob {
        question,
        slot,
        label,
        length,
        case,
        request,
    })
}

/// Generate `per_question_counts[label]` responses per label per question,
/// each asked to deserve its target label, which becomes the stored label.
pub fn generate_labeled_responses(
    client: &LlmClient,
    questions: &[QuestionInfo],
    plan: &SynthesisPlan,
    dataset: &str,
) -> Result<SynthesisOutput> {
    plan.validate()?;
    let mut jobs = Vec::new();
    for (qi, _) in questions.iter().enumerate() {
        let mut rng = question_rng(plan.seed, qi);
        let mut slot = 0;
        for &label in plan.scheme.labels() {
            for _ in 0..plan.per_question_counts.get(&label).copied().unwrap_or(0) {
                jobs.push(make_job(plan, questions, qi, slot, label, None, &mut rng)?);
                slot += 1;
            }
        }
    }
    let samples = run_generation(client, plan, questions, &jobs, dataset)?;
    let report = SynthesisReport {
        method: Some(SynthesisMethod::LabelsAndResponses),
        n_questions: questions.len(),
        n_generated: samples.len(),
        n_output: samples.len(),
        ..Default::default()
    };
    Ok(SynthesisOutput {
        dataset: Dataset::new(dataset, plan.scheme, samples)?,
        report,
    })
}

/// Send one prompt per pending question, parse each reply, and retry the
/// failures once with a strict-format follow-up. Returns per-question
/// results; `None` marks a question that failed twice.
fn parse_stage<T>(
    client: &LlmClient,
    cfg: &ModelConfig,
    prompts: &[(usize, PromptText)],
    parse: impl Fn(usize, &str) -> Result<T>,
) -> Result<Vec<(usize, Option<T>)>> {
    let requests: Vec<ChatRequest> = prompts.iter().map(|(_, p)| ChatRequest::new(cfg, p)).collect();
    let replies = client.chat_many(cfg, &requests);
    let mut results = Vec::with_capacity(prompts.len());
    let mut retry = Vec::new();
    for ((qi, prompt), reply) in prompts.iter().zip(replies) {
        match parse(*qi, &reply?.content) {
            Ok(v) => results.push((*qi, Some(v))),
            Err(e) => {
                log::info!("question index {qi}: {e}; retrying once");
                retry.push((results.len(), *qi, prompt.with_follow_up(templates::RETRY_JSON.text())));
                results.push((*qi, None));
            }
        }
    }
    if !retry.is_empty() {
        let requests: Vec<ChatRequest> = retry.iter().map(|(_, _, p)| ChatRequest::new(cfg, p)).collect();
        for ((pos, qi, _), reply) in retry.iter().zip(client.chat_many(cfg, &requests)) {
            match parse(*qi, &reply?.content) {
                Ok(v) => results[*pos].1 = Some(v),
                Err(e) => log::warn!("question index {qi}: {e}; skipping question"),
            }
        }
    }
    Ok(results)
}

/// Element list → case statements → one generation per case slot →
/// relabel. Stored labels are the relabel grades; `meta.case` holds the
/// case and `meta.target_label` the label it aimed for.
pub fn diversity_enhanced_generate(
    client: &LlmClient,
    questions: &[QuestionInfo],
    plan: &SynthesisPlan,
    dataset: &str,
) -> Result<SynthesisOutput> {
    plan.validate()?;
    let mut rubrics = Vec::with_capacity(questions.len());
    for q in questions {
        match q.rubric_text.as_deref().filter(|r| !r.trim().is_empty()) {
            Some(r) => rubrics.push(r),
            None => return Err(Error::MissingRubric(q.question_id.clone())),
        }
    }
    let mut report = SynthesisReport {
        method: Some(SynthesisMethod::DiversityEnhanced),
        n_questions: questions.len(),
        ..Default::default()
    };

    let element_prompts = rubrics
        .iter()
        .enumerate()
        .map(|(qi, r)| Ok((qi, build_element_list_prompt(r)?)))
        .collect::<Result<Vec<_>>>()?;
    let elements = parse_stage(client, &plan.generation_cfg, &element_prompts, |_, reply| {
        parse_element_list(reply)
    })?;

    let mut element_lists: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (qi, list) in elements {
        match list {
            Some(list) => {
                element_lists.insert(qi, list);
            }
            None => report.skipped_questions.push(questions[qi].question_id.clone()),
        }
    }
    let case_prompts = element_lists
        .iter()
        .map(|(&qi, list)| Ok((qi, build_case_statement_prompt(list, rubrics[qi], plan.scheme, plan.cases_per_question)?)))
        .collect::<Result<Vec<_>>>()?;
    let cases = parse_stage(client, &plan.generation_cfg, &case_prompts, |qi, reply| {
        parse_case_statements(reply, &element_lists[&qi], plan.scheme)
    })?;

    let mut case_lists: Vec<(usize, Vec<CaseStatement>)> = Vec::new();
    for (qi, list) in cases {
        match list {
            Some(list) => case_lists.push((qi, list)),
            None => report.skipped_questions.push(questions[qi].question_id.clone()),
        }
    }
    report.skipped_questions.sort();

    // Spread the requested total over surviving questions; the first
    // `total % n` questions take one extra response.
    let n_live = case_lists.len();
    let quota = |rank: usize, cases: usize| match plan.target_total {
        Some(total) if n_live > 0 => total / n_live + usize::from(rank < total % n_live),
        _ => cases,
    };
    let mut jobs = Vec::new();
    for (rank, (qi, list)) in case_lists.iter().enumerate() {
        let mut rng = question_rng(plan.seed, *qi);
        for slot in 0..quota(rank, list.len()) {
            let case = list[slot % list.len()].clone();
            jobs.push(make_job(plan, questions, *qi, slot, case.label, Some(case), &mut rng)?);
        }
    }
    let generated = run_generation(client, plan, questions, &jobs, dataset)?;
    report.n_generated = generated.len();
    let generated = Dataset::new(dataset, plan.scheme, generated)?;

    let relabeled = relabel_dataset(client, &plan.grading_cfg, &generated, PromptMode::Rubric, None, plan.seed)?;
    report.n_relabeled = relabeled.report.n_relabeled;
    report.n_unscored_dropped = relabeled.report.n_unscored_dropped;
    report.disagreements = relabeled.report.disagreements;
    report.n_output = relabeled.dataset.len();
    Ok(SynthesisOutput {
        dataset: relabeled.dataset,
        report,
    })
}
