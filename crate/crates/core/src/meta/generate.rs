use std::collections::HashMap;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::rubric::{
    fixed_rubric, generate_meta_rubric, render_rubric_text, CorrectnessVector, MetaRubric, SUB_QUESTIONS,
};
use crate::dataset::{Dataset, LabeledSample, Provenance, Split};
use crate::error::{Error, Result};
use crate::label::{Label, LabelScheme};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubQuestion {
    pub question_id: String,
    pub question_text: String,
    pub model_solution: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaQuestion {
    pub sub_questions: [SubQuestion; SUB_QUESTIONS],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubAnswer {
    pub response_text: String,
    pub source_sample_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaSample {
    pub meta_question: MetaQuestion,
    pub rubric: MetaRubric,
    pub rubric_text: String,
    pub sub_answers: [SubAnswer; SUB_QUESTIONS],
    pub vector: CorrectnessVector,
    pub label: Label,
}

/// A base question with the sample indices of its correct and incorrect
/// responses.
#[derive(Debug, Clone)]
pub struct PoolQuestion {
    pub info: SubQuestion,
    pub correct: Vec<usize>,
    pub incorrect: Vec<usize>,
}

impl PoolQuestion {
    fn responses(&self, bit: bool) -> &[usize] {
        if bit {
            &self.correct
        } else {
            &self.incorrect
        }
    }
}

/// Sampling pool over a 2-way base dataset. Questions lacking either a
/// correct or an incorrect response are excluded.
#[derive(Debug, Clone)]
pub struct MetaPool<'a> {
    base: &'a Dataset,
    questions: Vec<PoolQuestion>,
    by_id: HashMap<String, usize>,
    pub excluded: Vec<String>,
}

impl<'a> MetaPool<'a> {
    pub fn new(base: &'a Dataset) -> Result<Self> {
        if base.scheme != LabelScheme::TwoWay {
            return Err(Error::InvalidInput(format!(
                "meta synthesis needs a 2way base dataset, got {}",
                base.scheme
            )));
        }
        let mut all: Vec<PoolQuestion> = Vec::new();
        let mut pos: HashMap<&str, usize> = HashMap::new();
        for (i, s) in base.samples.iter().enumerate() {
            let slot = *pos.entry(s.question_id.as_str()).or_insert_with(|| {
                all.push(PoolQuestion {
                    info: SubQuestion {
                        question_id: s.question_id.clone(),
                        question_text: s.question_text.clone(),
                        model_solution: s.model_solution.clone(),
                    },
                    correct: Vec::new(),
                    incorrect: Vec::new(),
                });
                all.len() - 1
            });
            match s.label {
                Label::Correct => all[slot].correct.push(i),
                _ => all[slot].incorrect.push(i),
            }
        }
        let (questions, excluded): (Vec<_>, Vec<_>) = all
            .into_iter()
            .partition(|q| !q.correct.is_empty() && !q.incorrect.is_empty());
        let by_id = questions
            .iter()
            .enumerate()
            .map(|(i, q)| (q.info.question_id.clone(), i))
            .collect();
        Ok(MetaPool {
            base,
            questions,
            by_id,
            excluded: excluded.into_iter().map(|q| q.info.question_id).collect(),
        })
    }

    pub fn questions(&self) -> &[PoolQuestion] {
        &self.questions
    }

    pub fn base(&self) -> &Dataset {
        self.base
    }

    fn question(&self, id: &str) -> Result<&PoolQuestion> {
        self.by_id
            .get(id)
            .map(|&i| &self.questions[i])
            .ok_or_else(|| Error::InvalidInput(format!("question {id:?} is not in the meta pool")))
    }
}

/// Draw five distinct eligible questions uniformly without replacement.
pub fn build_meta_question<R: Rng + ?Sized>(pool: &MetaPool<'_>, rng: &mut R) -> Result<MetaQuestion> {
    let n = pool.questions.len();
    if n < SUB_QUESTIONS {
        return Err(Error::InsufficientData(format!(
            "need {SUB_QUESTIONS} eligible questions (with both correct and incorrect responses), found {n}"
        )));
    }
    let picks = index::sample(rng, n, SUB_QUESTIONS);
    let subs: Vec<SubQuestion> = picks.iter().map(|i| pool.questions[i].info.clone()).collect();
    Ok(MetaQuestion {
        sub_questions: subs.try_into().expect("five picks"),
    })
}

/// Build a meta-answer whose vector grades to `target` under `rubric`:
/// the vector is uniform over the target's bucket, and each sub-answer is a
/// uniform draw among base responses whose label matches its bit.
pub fn build_meta_answer<R: Rng + ?Sized>(
    mq: &MetaQuestion,
    target: Label,
    rubric: &MetaRubric,
    pool: &MetaPool<'_>,
    rng: &mut R,
) -> Result<MetaSample> {
    let bucket = rubric.bucket(target);
    let vector = *bucket
        .choose(rng)
        .ok_or_else(|| Error::InvalidInput(format!("label {target} is unreachable under the rubric")))?;
    let mut answers = Vec::with_capacity(SUB_QUESTIONS);
    for (sub, &bit) in mq.sub_questions.iter().zip(vector.bits()) {
        let q = pool.question(&sub.question_id)?;
        let idx = *q.responses(bit).choose(rng).expect("pool questions have both labels");
        let s = &pool.base.samples[idx];
        answers.push(SubAnswer {
            response_text: s.response_text.clone(),
            source_sample_id: s.id.clone(),
        });
    }
    Ok(MetaSample {
        meta_question: mq.clone(),
        rubric: rubric.clone(),
        rubric_text: render_rubric_text(rubric),
        sub_answers: answers.try_into().expect("five answers"),
        label: rubric.evaluate(&vector),
        vector,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RubricMode {
    /// A fresh random rubric per meta-question.
    Random,
    /// `fixed_rubric()` for every meta-question.
    Fixed,
}

#[derive(Debug, Clone)]
pub struct MetaDatasetOptions {
    pub n: usize,
    pub mode: RubricMode,
    pub seed: u64,
    /// Serialize `rubric_text`; when false it is left null.
    pub include_rubric: bool,
    pub split: Split,
}

impl MetaDatasetOptions {
    pub fn new(n: usize, mode: RubricMode, seed: u64) -> Self {
        MetaDatasetOptions {
            n,
            mode,
            seed,
            include_rubric: true,
            split: Split::Test,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MetaGeneration {
    pub samples: Vec<MetaSample>,
    pub dataset: Dataset,
    /// Base response ids that appear in no meta-answer.
    pub uncovered: Vec<String>,
    /// Slots rewritten by the coverage pass.
    pub repairs: usize,
}

const TARGET_CYCLE: [Label; 3] = [Label::Correct, Label::PartiallyCorrect, Label::Incorrect];

/// Generate `n` balanced meta samples. Sample `i` draws from its own ChaCha
/// stream `(seed, i)` and targets labels round-robin (C, P, I, ...). A final
/// coverage pass swaps unused base responses into slots whose current
/// response is used elsewhere, leaving every vector (and so every label)
/// unchanged.
pub fn generate_meta_dataset(base: &Dataset, opts: &MetaDatasetOptions) -> Result<MetaGeneration> {
    if opts.n < TARGET_CYCLE.len() {
        return Err(Error::InvalidInput(format!(
            "n = {} cannot be balanced over three labels (need n >= 3)",
            opts.n
        )));
    }
    let pool = MetaPool::new(base)?;
    let fixed = fixed_rubric();
    let mut samples = Vec::with_capacity(opts.n);
    for i in 0..opts.n {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(i as u64);
        let mq = build_meta_question(&pool, &mut rng)?;
        let rubric = match opts.mode {
            RubricMode::Random => generate_meta_rubric(&mut rng),
            RubricMode::Fixed => fixed.clone(),
        };
        let target = TARGET_CYCLE[i % TARGET_CYCLE.len()];
        samples.push(build_meta_answer(&mq, target, &rubric, &pool, &mut rng)?);
    }
    let (uncovered, repairs) = repair_coverage(&pool, &mut samples);
    if !uncovered.is_empty() {
        log::warn!(
            "{} base responses are not covered by {} meta samples: {}",
            uncovered.len(),
            opts.n,
            uncovered.join(", ")
        );
    }
    let name = format!("{}-meta", base.name);
    let records = samples
        .iter()
        .enumerate()
        .map(|(i, s)| to_labeled_sample(&name, i, s, opts))
        .collect();
    let dataset = Dataset::new(name, LabelScheme::ThreeWay, records)?;
    Ok(MetaGeneration {
        samples,
        dataset,
        uncovered,
        repairs,
    })
}

fn repair_coverage(pool: &MetaPool<'_>, samples: &mut [MetaSample]) -> (Vec<String>, usize) {
    let base = pool.base;
    let id_to_idx: HashMap<&str, usize> = base.samples.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    let mut usage = vec![0usize; base.samples.len()];
    for s in samples.iter() {
        for a in &s.sub_answers {
            usage[id_to_idx[a.source_sample_id.as_str()]] += 1;
        }
    }
    let mut uncovered = Vec::new();
    let mut repairs = 0;
    for q in &pool.questions {
        for (bit, list) in [(true, &q.correct), (false, &q.incorrect)] {
            for &r in list.iter() {
                if usage[r] > 0 {
                    continue;
                }
                match find_slot(samples, &usage, &id_to_idx, &q.info.question_id, bit) {
                    Some((si, j)) => {
                        let old = id_to_idx[samples[si].sub_answers[j].source_sample_id.as_str()];
                        usage[old] -= 1;
                        usage[r] += 1;
                        let sample = &mut samples[si];
                        sample.meta_question.sub_questions[j] = q.info.clone();
                        sample.sub_answers[j] = SubAnswer {
                            response_text: base.samples[r].response_text.clone(),
                            source_sample_id: base.samples[r].id.clone(),
                        };
                        repairs += 1;
                    }
                    None => uncovered.push(base.samples[r].id.clone()),
                }
            }
        }
    }
    (uncovered, repairs)
}

// Prefer a slot already holding the same question; otherwise any slot whose
// sample does not contain the question yet. The displaced response must stay
// covered elsewhere.
fn find_slot(
    samples: &[MetaSample],
    usage: &[usize],
    id_to_idx: &HashMap<&str, usize>,
    question_id: &str,
    bit: bool,
) -> Option<(usize, usize)> {
    let candidate = |same_question: bool| {
        samples.iter().enumerate().find_map(|(si, s)| {
            let contains = s.meta_question.sub_questions.iter().any(|sq| sq.question_id == question_id);
            if !same_question && contains {
                return None;
            }
            (0..SUB_QUESTIONS).find_map(|j| {
                let here = s.meta_question.sub_questions[j].question_id == question_id;
                let ok = here == same_question
                    && s.vector.bits()[j] == bit
                    && usage[id_to_idx[s.sub_answers[j].source_sample_id.as_str()]] >= 2;
                ok.then_some((si, j))
            })
        })
    };
    candidate(true).or_else(|| candidate(false))
}

fn numbered<'a>(items: impl Iterator<Item = &'a str>) -> String {
    items
        .enumerate()
        .map(|(i, t)| format!("{}. {}", i + 1, t))
        .collect::<Vec<_>>()
        .join("\n")
}

fn to_labeled_sample(name: &str, i: usize, s: &MetaSample, opts: &MetaDatasetOptions) -> LabeledSample {
    let subs = &s.meta_question.sub_questions;
    let mut meta = Map::new();
    meta.insert("rubric".into(), serde_json::to_value(&s.rubric).expect("rubric serializes"));
    meta.insert("vector".into(), json!(s.vector.bits()));
    meta.insert(
        "sub_question_ids".into(),
        Value::from(subs.iter().map(|q| q.question_id.clone()).collect::<Vec<_>>()),
    );
    meta.insert(
        "source_sample_ids".into(),
        Value::from(s.sub_answers.iter().map(|a| a.source_sample_id.clone()).collect::<Vec<_>>()),
    );
    meta.insert(
        "rubric_mode".into(),
        serde_json::to_value(opts.mode).expect("mode serializes"),
    );
    LabeledSample {
        id: format!("meta-{i:06}"),
        dataset: name.to_string(),
        question_id: format!("meta-q-{i:06}"),
        question_text: numbered(subs.iter().map(|q| q.question_text.as_str())),
        model_solution: numbered(subs.iter().map(|q| q.model_solution.as_str())),
        rubric_text: opts.include_rubric.then(|| s.rubric_text.clone()),
        response_text: numbered(s.sub_answers.iter().map(|a| a.response_text.as_str())),
        label: s.label,
        split: opts.split,
        provenance: Provenance::Human,
        meta,
    }
}
