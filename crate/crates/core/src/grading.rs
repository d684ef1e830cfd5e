//! Batch grading: prompt → reply → parsed label, with one strict-format
//! retry per sample on unparseable replies.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Dataset, LabeledSample};
use crate::error::{Error, Result};
use crate::label::{Label, LabelScheme};
use crate::llm::{ChatRequest, LlmClient, ModelConfig};
use crate::prompting::{
    build_feedback_prompt, build_grading_prompt, parse_score, select_examples, templates, ExampleSet,
    PromptMode, PromptText,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradingOptions {
    pub mode: PromptMode,
    pub scheme: LabelScheme,
    /// Ask for a written rationale before the score (rubric required).
    pub feedback: bool,
    /// Seeds few-shot example selection.
    pub seed: u64,
}

impl GradingOptions {
    pub fn new(mode: PromptMode, scheme: LabelScheme, seed: u64) -> Self {
        GradingOptions {
            mode,
            scheme,
            feedback: false,
            seed,
        }
    }
}

/// One graded sample as written to `results.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradingRecord {
    pub sample_id: String,
    pub dataset: String,
    pub question_id: String,
    pub scheme: LabelScheme,
    pub mode: PromptMode,
    pub model: String,
    /// Digest of the first request sent for this sample.
    pub prompt_digest: String,
    pub raw_reply: String,
    /// `None` when the sample is unscored.
    pub predicted: Option<Label>,
    pub gold: Label,
    pub attempts: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
    pub n_examples: usize,
    pub response_text: String,
    pub rubric_text: Option<String>,
}

impl GradingRecord {
    pub fn is_scored(&self) -> bool {
        self.predicted.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradingRun {
    pub records: Vec<GradingRecord>,
}

impl GradingRun {
    pub fn n_unscored(&self) -> usize {
        self.records.iter().filter(|r| !r.is_scored()).count()
    }

    /// (predicted, gold) for scored records, in record order.
    pub fn scored_pairs(&self) -> (Vec<Label>, Vec<Label>) {
        self.records
            .iter()
            .filter_map(|r| r.predicted.map(|p| (p, r.gold)))
            .unzip()
    }
}

/// Per-sample RNG stream derived from the sample id, so example selection
/// does not depend on which other samples are in the batch.
fn sample_rng(seed: u64, sample_id: &str) -> ChaCha8Rng {
    let digest = Sha256::digest(sample_id.as_bytes());
    let mut stream = [0u8; 8];
    stream.copy_from_slice(&digest[..8]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from_le_bytes(stream));
    rng
}

/// Build the prompt for one sample. `train` supplies few-shot examples.
pub fn grading_prompt(sample: &LabeledSample, train: Option<&Dataset>, opts: &GradingOptions) -> Result<(PromptText, usize)> {
    if opts.feedback {
        let prompt = build_feedback_prompt(sample, opts.scheme, None)?;
        return Ok((prompt, 0));
    }
    let k = opts.mode.examples_per_label();
    let examples = if k == 0 {
        ExampleSet::empty()
    } else {
        let train = train.ok_or_else(|| Error::InvalidInput("few-shot grading needs a training set".into()))?;
        let mut rng = sample_rng(opts.seed, &sample.id);
        select_examples(train, &sample.question_id, k, Some(&sample.id), &mut rng)?
    };
    let prompt = build_grading_prompt(sample, opts.mode, opts.scheme, &examples)?;
    Ok((prompt, examples.len()))
}

/// Grade every sample. Prompt construction errors (missing rubric, too few
/// examples) abort before any request is sent; transport errors abort the
/// run. Replies without a usable score are retried once, then recorded as
/// unscored.
pub fn grade_samples(
    client: &LlmClient,
    cfg: &ModelConfig,
    samples: &[LabeledSample],
    train: Option<&Dataset>,
    opts: &GradingOptions,
) -> Result<GradingRun> {
    for s in samples {
        if !opts.scheme.contains(s.label) {
            return Err(Error::InvalidInput(format!(
                "sample {} has label {} outside the {} scheme",
                s.id, s.label, opts.scheme
            )));
        }
    }
    let prompts = samples
        .iter()
        .map(|s| grading_prompt(s, train, opts))
        .collect::<Result<Vec<_>>>()?;
    let requests: Vec<ChatRequest> = prompts.iter().map(|(p, _)| ChatRequest::new(cfg, p)).collect();
    let first = client
        .chat_many(cfg, &requests)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut records: Vec<GradingRecord> = samples
        .iter()
        .zip(&prompts)
        .zip(&requests)
        .zip(first)
        .map(|(((s, (_, n_examples)), req), reply)| {
            let parsed = parse_score(&reply.content, opts.scheme);
            GradingRecord {
                sample_id: s.id.clone(),
                dataset: s.dataset.clone(),
                question_id: s.question_id.clone(),
                scheme: opts.scheme,
                mode: opts.mode,
                model: cfg.model_name.clone(),
                prompt_digest: req.digest(),
                raw_reply: reply.content,
                predicted: parsed.ok(),
                gold: s.label,
                attempts: 1,
                parse_error: parsed.err().map(|e| e.to_string()),
                n_examples: *n_examples,
                response_text: s.response_text.clone(),
                rubric_text: s.rubric_text.clone(),
            }
        })
        .collect();

    let retry_idx: Vec<usize> = (0..records.len()).filter(|&i| !records[i].is_scored()).collect();
    if !retry_idx.is_empty() {
        log::info!("{} replies had no usable score; retrying once", retry_idx.len());
        let retries: Vec<ChatRequest> = retry_idx
            .iter()
            .map(|&i| ChatRequest::new(cfg, &prompts[i].0.with_follow_up(templates::RETRY_SCORE.text())))
            .collect();
        let replies = client
            .chat_many(cfg, &retries)
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        for (&i, reply) in retry_idx.iter().zip(replies) {
            let rec = &mut records[i];
            let parsed = parse_score(&reply.content, opts.scheme);
            rec.attempts = 2;
            rec.raw_reply = reply.content;
            rec.predicted = parsed.ok();
            rec.parse_error = parsed.err().map(|e| e.to_string());
        }
    }
    let run = GradingRun { records };
    if run.n_unscored() > 0 {
        log::warn!("{} samples unscored after retry", run.n_unscored());
    }
    Ok(run)
}
