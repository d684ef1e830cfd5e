use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::order_free_sum;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::llm::{LlmClient, ModelConfig};

/// Texts per embeddings request.
const EMBED_BATCH: usize = 128;

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "vector dimensions differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidInput("cosine similarity of a zero vector".into()));
    }
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSimilarity {
    pub question_id: String,
    pub rubric_vs_solution: f64,
    /// Mean over the question's responses.
    pub rubric_vs_answers: f64,
    pub n_answers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub dataset: String,
    pub embedding_model: String,
    pub n_questions: usize,
    pub n_answer_pairs: usize,
    pub avg_rubric_vs_solution: f64,
    pub avg_rubric_vs_answers: f64,
    /// Sorted by question id.
    pub per_question: Vec<QuestionSimilarity>,
}

impl SimilarityReport {
    pub fn to_markdown(&self) -> String {
        format!(
            "| Dataset | Questions | Rubric vs solution | Rubric vs answers |\n|---|---|---|---|\n| {} | {} | {:.4} | {:.4} |\n",
            self.dataset, self.n_questions, self.avg_rubric_vs_solution, self.avg_rubric_vs_answers
        )
    }
}

/// The distinct texts a similarity report needs embedded, sorted.
fn texts_needed(ds: &Dataset) -> Result<BTreeSet<String>> {
    let mut texts = BTreeSet::new();
    for s in &ds.samples {
        let rubric = s
            .rubric_text
            .as_deref()
            .filter(|r| !r.trim().is_empty())
            .ok_or_else(|| Error::MissingRubric(s.question_id.clone()))?;
        texts.insert(rubric.to_string());
        texts.insert(s.model_solution.clone());
        texts.insert(s.response_text.clone());
    }
    Ok(texts)
}

/// Build the report from precomputed embeddings keyed by text.
pub fn similarity_from_embeddings(
    ds: &Dataset,
    embedding_model: &str,
    vectors: &HashMap<String, Vec<f64>>,
) -> Result<SimilarityReport> {
    let lookup = |t: &str| {
        vectors
            .get(t)
            .ok_or_else(|| Error::InvalidInput(format!("no embedding for text {:?}", crate::llm::excerpt(t))))
    };
    // question id -> (rubric, solution, answer similarities)
    let mut per_q: BTreeMap<&str, (&str, &str, Vec<f64>)> = BTreeMap::new();
    for s in &ds.samples {
        let rubric = s
            .rubric_text
            .as_deref()
            .ok_or_else(|| Error::MissingRubric(s.question_id.clone()))?;
        let entry = per_q
            .entry(s.question_id.as_str())
            .or_insert_with(|| (rubric, s.model_solution.as_str(), Vec::new()));
        entry
            .2
            .push(cosine_similarity(lookup(rubric)?, lookup(&s.response_text)?)?);
    }
    if per_q.is_empty() {
        return Err(Error::InsufficientData(format!("dataset {} has no samples", ds.name)));
    }
    let mut per_question = Vec::with_capacity(per_q.len());
    for (q, (rubric, solution, sims)) in per_q {
        per_question.push(QuestionSimilarity {
            question_id: q.to_string(),
            rubric_vs_solution: cosine_similarity(lookup(rubric)?, lookup(solution)?)?,
            rubric_vs_answers: order_free_sum(&sims) / sims.len() as f64,
            n_answers: sims.len(),
        });
    }
    let nq = per_question.len() as f64;
    let sol: Vec<f64> = per_question.iter().map(|q| q.rubric_vs_solution).collect();
    let ans: Vec<f64> = per_question.iter().map(|q| q.rubric_vs_answers).collect();
    Ok(SimilarityReport {
        dataset: ds.name.clone(),
        embedding_model: embedding_model.to_string(),
        n_questions: per_question.len(),
        n_answer_pairs: per_question.iter().map(|q| q.n_answers).sum(),
        avg_rubric_vs_solution: order_free_sum(&sol) / nq,
        avg_rubric_vs_answers: order_free_sum(&ans) / nq,
        per_question,
    })
}

/// Embed every rubric, model solution and response once, then compare
/// rubrics against solutions and against answers.
pub fn rubric_similarity_report(client: &LlmClient, cfg: &ModelConfig, ds: &Dataset) -> Result<SimilarityReport> {
    let texts: Vec<String> = texts_needed(ds)?.into_iter().collect();
    let mut vectors = HashMap::with_capacity(texts.len());
    for chunk in texts.chunks(EMBED_BATCH) {
        for (text, v) in chunk.iter().zip(client.embed(cfg, chunk)?) {
            vectors.insert(text.clone(), v);
        }
    }
    similarity_from_embeddings(ds, &cfg.model_name, &vectors)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;
    use serde_json::json;

    use super::*;
    use crate::dataset::{LabeledSample, Provenance, Split};
    use crate::label::{Label, LabelScheme};
    use crate::llm::{HttpReply, Transport, TransportError, WireRequest};

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[0.3, -2.0, 5.0], &[0.3, -2.0, 5.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        // 32 / sqrt(14 * 77)
        let expected = 32.0 / (14.0f64 * 77.0).sqrt();
        let got = cosine_similarity(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.974_631_846_197_076_2).abs() < 1e-9);
        assert!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine_similarity(&[1.0], &[1.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(
            a in prop::collection::vec(-10.0f64..10.0, 4),
            b in prop::collection::vec(-10.0f64..10.0, 4),
            lambda in 0.01f64..100.0,
        ) {
            prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
            let ab = cosine_similarity(&a, &b).unwrap();
            prop_assert_eq!(ab, cosine_similarity(&b, &a).unwrap());
            let scaled: Vec<f64> = a.iter().map(|x| x * lambda).collect();
            prop_assert!((ab - cosine_similarity(&scaled, &b).unwrap()).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }
    }

    /// Embeds each text as letter frequencies.
    struct LetterEmbedder;

    impl Transport for LetterEmbedder {
        fn send(&self, req: &WireRequest<'_>) -> std::result::Result<HttpReply, TransportError> {
            let data: Vec<_> = req.body["input"]
                .as_array()
                .unwrap()
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let mut v = vec![0.0; 27];
                    for c in t.as_str().unwrap().chars() {
                        let slot = if c.is_ascii_lowercase() { (c as u8 - b'a') as usize } else { 26 };
                        v[slot] += 1.0;
                    }
                    json!({"index": i, "embedding": v})
                })
                .collect();
            Ok(HttpReply {
                status: 200,
                retry_after: None,
                body: json!({"data": data}).to_string(),
            })
        }

        fn needs_api_key(&self) -> bool {
            false
        }
    }

    fn sample(i: usize, q: &str, rubric: &str, solution: &str, response: &str) -> LabeledSample {
        LabeledSample {
            id: format!("s{i}"),
            dataset: "toy".into(),
            question_id: q.into(),
            question_text: "q".into(),
            model_solution: solution.into(),
            rubric_text: Some(rubric.into()),
            response_text: response.into(),
            label: Label::Correct,
            split: Split::Test,
            provenance: Provenance::Human,
            meta: Default::default(),
        }
    }

    fn toy() -> Vec<LabeledSample> {
        vec![
            sample(0, "q1", "names both variables", "names both variables", "both variables"),
            sample(1, "q1", "names both variables", "names both variables", "no idea"),
            sample(2, "q2", "current flows in a loop", "current flows in a loop", "a loop"),
            sample(3, "q2", "current flows in a loop", "current flows in a loop", "flows"),
            sample(4, "q2", "current flows in a loop", "current flows in a loop", "current"),
        ]
    }

    #[test]
    fn rubric_equal_to_solution_gives_one() {
        let ds = Dataset::new("toy", LabelScheme::TwoWay, toy()).unwrap();
        let client = LlmClient::new(Arc::new(LetterEmbedder));
        let r = rubric_similarity_report(&client, &ModelConfig::new("x", "letters"), &ds).unwrap();
        assert_eq!(r.avg_rubric_vs_solution, 1.0);
        assert_eq!((r.n_questions, r.n_answer_pairs), (2, 5));
        assert!(r.avg_rubric_vs_answers < 1.0 && r.avg_rubric_vs_answers > 0.0);
    }

    #[test]
    fn report_is_permutation_invariant() {
        let client = LlmClient::new(Arc::new(LetterEmbedder));
        let cfg = ModelConfig::new("x", "letters");
        let base = rubric_similarity_report(&client, &cfg, &Dataset::new("toy", LabelScheme::TwoWay, toy()).unwrap()).unwrap();
        let mut shuffled = toy();
        shuffled.reverse();
        shuffled.swap(0, 2);
        let other =
            rubric_similarity_report(&client, &cfg, &Dataset::new("toy", LabelScheme::TwoWay, shuffled).unwrap()).unwrap();
        assert_eq!(base, other);
    }

    #[test]
    fn missing_rubric_is_reported() {
        let mut samples = toy();
        samples[3].rubric_text = None;
        samples[2].rubric_text = None;
        samples[4].rubric_text = None;
        let ds = Dataset::new("toy", LabelScheme::TwoWay, samples).unwrap();
        let client = LlmClient::new(Arc::new(LetterEmbedder));
        let err = rubric_similarity_report(&client, &ModelConfig::new("x", "letters"), &ds).unwrap_err();
        assert!(matches!(err, Error::MissingRubric(q) if q == "q2"));
    }
}
