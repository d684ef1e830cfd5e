//! Count- and component-based meta rubrics and their grading oracle.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;

/// Number of sub-questions in a meta-question.
pub const SUB_QUESTIONS: usize = 5;

/// Number of distinct correctness vectors (2^5).
pub const VECTOR_COUNT: usize = 1 << SUB_QUESTIONS;

const MAX_RUBRIC_ATTEMPTS: usize = 1000;

/// Which sub-answers of a meta-answer are correct, in sub-question order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CorrectnessVector(pub [bool; SUB_QUESTIONS]);

impl CorrectnessVector {
    /// Bit `i` of `mask` is sub-question `i + 1`.
    pub fn from_mask(mask: u8) -> Self {
        let mut bits = [false; SUB_QUESTIONS];
        for (i, b) in bits.iter_mut().enumerate() {
            *b = mask & (1 << i) != 0;
        }
        CorrectnessVector(bits)
    }

    pub fn mask(&self) -> u8 {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .fold(0, |m, (i, _)| m | (1 << i))
    }

    /// Every vector, ordered by mask.
    pub fn all() -> impl Iterator<Item = CorrectnessVector> {
        (0..VECTOR_COUNT as u8).map(CorrectnessVector::from_mask)
    }

    pub fn count_correct(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// 1-based sub-question lookup.
    pub fn is_correct(&self, question: u8) -> bool {
        self.0[usize::from(question) - 1]
    }

    pub fn bits(&self) -> &[bool; SUB_QUESTIONS] {
        &self.0
    }
}

/// Criterion for one label level: a minimum count of correct sub-answers and
/// a set of sub-questions (1-based) that must all be correct.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LevelCriterion {
    pub min: u8,
    pub required: BTreeSet<u8>,
}

impl LevelCriterion {
    pub fn new(min: u8, required: impl IntoIterator<Item = u8>) -> Self {
        LevelCriterion {
            min,
            required: required.into_iter().collect(),
        }
    }

    pub fn is_met(&self, v: &CorrectnessVector) -> bool {
        v.count_correct() >= usize::from(self.min) && self.required.iter().all(|&q| v.is_correct(q))
    }
}

/// Rubric of a meta-question. `Incorrect` is the implicit fallback level.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MetaRubric {
    pub correct: LevelCriterion,
    pub partially_correct: LevelCriterion,
}

/// Vector counts per label over all 32 correctness vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LabelCensus {
    pub correct: usize,
    pub partially_correct: usize,
    pub incorrect: usize,
}

impl LabelCensus {
    pub fn get(&self, label: Label) -> usize {
        match label {
            Label::Correct => self.correct,
            Label::PartiallyCorrect => self.partially_correct,
            Label::Incorrect => self.incorrect,
        }
    }
}

impl MetaRubric {
    pub fn new(correct: LevelCriterion, partially_correct: LevelCriterion) -> Result<Self> {
        let r = MetaRubric {
            correct,
            partially_correct,
        };
        r.validate()?;
        Ok(r)
    }

    /// Check the structural invariants: count hierarchy, proper-superset
    /// hierarchy, count exceeding the component count, index ranges, and
    /// reachability of all three labels.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("invalid meta rubric: {m}")));
        let (c, p) = (&self.correct, &self.partially_correct);
        for (name, level) in [("correct", c), ("partially_correct", p)] {
            if level.min < 1 || usize::from(level.min) > SUB_QUESTIONS {
                return bad(format!("{name}.min {} outside 1..=5", level.min));
            }
            if let Some(q) = level.required.iter().find(|&&q| q < 1 || usize::from(q) > SUB_QUESTIONS) {
                return bad(format!("{name}.required contains {q}, outside 1..=5"));
            }
            if usize::from(level.min) <= level.required.len() {
                return bad(format!(
                    "{name}.min {} must exceed the {} required questions",
                    level.min,
                    level.required.len()
                ));
            }
        }
        if c.min <= p.min {
            return bad(format!("correct.min {} must exceed partially_correct.min {}", c.min, p.min));
        }
        if !(p.required.is_subset(&c.required) && p.required.len() < c.required.len()) {
            return bad("correct.required must be a proper superset of partially_correct.required".into());
        }
        let census = self.census();
        if census.correct == 0 || census.partially_correct == 0 || census.incorrect == 0 {
            return bad(format!("a label is unreachable: {census:?}"));
        }
        Ok(())
    }

    pub fn evaluate(&self, v: &CorrectnessVector) -> Label {
        evaluate_rubric(self, v)
    }

    pub fn census(&self) -> LabelCensus {
        let mut census = LabelCensus::default();
        for v in CorrectnessVector::all() {
            match self.evaluate(&v) {
                Label::Correct => census.correct += 1,
                Label::PartiallyCorrect => census.partially_correct += 1,
                Label::Incorrect => census.incorrect += 1,
            }
        }
        census
    }

    /// All vectors graded as `label`, ordered by mask.
    pub fn bucket(&self, label: Label) -> Vec<CorrectnessVector> {
        CorrectnessVector::all().filter(|v| self.evaluate(v) == label).collect()
    }
}

/// Grade a correctness vector: `Correct` if the correct-level criterion
/// holds, else `PartiallyCorrect` if the partial-level criterion holds,
/// else `Incorrect`.
pub fn evaluate_rubric(rubric: &MetaRubric, v: &CorrectnessVector) -> Label {
    if rubric.correct.is_met(v) {
        Label::Correct
    } else if rubric.partially_correct.is_met(v) {
        Label::PartiallyCorrect
    } else {
        Label::Incorrect
    }
}

/// The constant baseline rubric: Correct needs four correct sub-answers
/// including the first three; PartiallyCorrect needs three including the
/// first two.
pub fn fixed_rubric() -> MetaRubric {
    MetaRubric {
        correct: LevelCriterion::new(4, [1, 2, 3]),
        partially_correct: LevelCriterion::new(3, [1, 2]),
    }
}

/// Draw a random rubric.
///
/// Sampling: partial min in {2,3}; correct min above it up to 5; the partial
/// required set has 1..min-1 members; the correct required set extends it
/// with uniformly chosen extra questions up to correct min - 1 members.
pub fn generate_meta_rubric<R: Rng + ?Sized>(rng: &mut R) -> MetaRubric {
    for _ in 0..MAX_RUBRIC_ATTEMPTS {
        let min_p: u8 = rng.gen_range(2..=3);
        let min_c: u8 = rng.gen_range(min_p + 1..=SUB_QUESTIONS as u8);
        let n_p = usize::from(rng.gen_range(1..=min_p - 1));
        let n_c = usize::from(rng.gen_range(n_p as u8 + 1..=min_c - 1));
        let mut order: Vec<u8> = (1..=SUB_QUESTIONS as u8).collect();
        order.shuffle(rng);
        let rubric = MetaRubric {
            correct: LevelCriterion::new(min_c, order[..n_c].iter().copied()),
            partially_correct: LevelCriterion::new(min_p, order[..n_p].iter().copied()),
        };
        if rubric.validate().is_ok() {
            return rubric;
        }
    }
    panic!("no valid meta rubric after {MAX_RUBRIC_ATTEMPTS} attempts");
}

/// Every rubric the random generator can produce.
pub fn enumerate_sampling_space() -> Vec<MetaRubric> {
    let mut out = Vec::new();
    let subsets: Vec<BTreeSet<u8>> = (0u8..(1 << SUB_QUESTIONS))
        .map(|m| (1..=SUB_QUESTIONS as u8).filter(|q| m & (1 << (q - 1)) != 0).collect())
        .collect();
    for min_p in 2u8..=3 {
        for min_c in min_p + 1..=SUB_QUESTIONS as u8 {
            for req_p in subsets.iter().filter(|s| (1..usize::from(min_p)).contains(&s.len())) {
                for req_c in subsets.iter().filter(|s| {
                    s.len() > req_p.len() && s.len() < usize::from(min_c) && req_p.is_subset(s)
                }) {
                    out.push(MetaRubric {
                        correct: LevelCriterion {
                            min: min_c,
                            required: req_c.clone(),
                        },
                        partially_correct: LevelCriterion {
                            min: min_p,
                            required: req_p.clone(),
                        },
                    });
                }
            }
        }
    }
    out
}

fn spell_count(n: u8) -> &'static str {
    match n {
        0 => "zero",
        1 => "one",
        2 => "two",
        3 => "three",
        4 => "four",
        5 => "five",
        _ => unreachable!("sub-question counts never exceed five"),
    }
}

fn list_questions(required: &BTreeSet<u8>) -> String {
    let items: Vec<String> = required.iter().map(|q| format!("Question {q}")).collect();
    match items.as_slice() {
        [] => String::new(),
        [one] => one.clone(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => format!("{}, and {last}", init.join(", ")),
    }
}

/// Render the three-bullet natural-language rubric.
pub fn render_rubric_text(rubric: &MetaRubric) -> String {
    let c = &rubric.correct;
    let p = &rubric.partially_correct;
    let mut correct = format!(
        "- Correct: If the total number of correct answers is at least {}",
        spell_count(c.min)
    );
    if !c.required.is_empty() {
        correct.push_str(&format!(
            " and all of the following questions are answered correctly: {}",
            list_questions(&c.required)
        ));
    }
    correct.push('.');
    let mut partial = format!(
        "- Partially Correct: If the criteria for correct are not met, but the total number of correct answers is at least {}",
        spell_count(p.min)
    );
    if !p.required.is_empty() {
        partial.push_str(&format!(
            " and the following questions are answered correctly: {}",
            list_questions(&p.required)
        ));
    }
    partial.push('.');
    format!("{correct}\n{partial}\n- Incorrect: Otherwise.")
}
