use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Map;

use super::*;
use crate::dataset::Provenance;

const CLASSIFIES_RUBRIC: &str = "- Correct: The student answer satisfies all the following components:
  1. Identifies the two variables.
  2. Identifies the explanatory variable and response variable consistent with Component 1.
  3. Indicates the explanatory variable predicts (or explains) the response variable, or the response variable is dependent on the explanatory variable.
- Partially Correct: The student answer does not meet the criteria for \"Correct\" but satisfies Component 1 and/or Component 2.
- Incorrect: The student answer does not meet the rubric for \"Correct\" or \"Partially Correct.\"";

fn sample(id: &str, q: &str, label: Label) -> LabeledSample {
    LabeledSample {
        id: id.into(),
        dataset: "toy".into(),
        question_id: q.into(),
        question_text: "Which variable is explanatory?".into(),
        model_solution: "Hours studied explains exam score.".into(),
        rubric_text: Some(CLASSIFIES_RUBRIC.into()),
        response_text: format!("response {id}"),
        label,
        split: Split::Train,
        provenance: Provenance::Human,
        meta: Map::new(),
    }
}

fn train_set(per_label: [usize; 3]) -> Dataset {
    let mut samples = Vec::new();
    for (label, n) in [Label::Correct, Label::PartiallyCorrect, Label::Incorrect].into_iter().zip(per_label) {
        for i in 0..n {
            samples.push(sample(&format!("{}{i}", label.short_code()), "q1", label));
        }
    }
    Dataset::new("toy", LabelScheme::ThreeWay, samples).unwrap()
}

#[test]
fn select_zero_examples_is_empty() {
    let ds = train_set([3, 3, 3]);
    let set = select_examples(&ds, "q1", 0, None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(set.is_empty());
}

#[test]
fn select_five_per_label_gives_fifteen() {
    let ds = train_set([6, 6, 6]);
    let set = select_examples(&ds, "q1", 5, None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(set.len(), 15);
    for l in Label::ALL {
        assert_eq!(set.count(l), 5);
    }
    // Grouped by label, Correct first.
    assert!(set.examples[..5].iter().all(|e| e.label == Label::Correct));
    assert!(set.examples[10..].iter().all(|e| e.label == Label::Incorrect));
    let again = select_examples(&ds, "q1", 5, None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(set, again);
}

#[test]
fn select_reports_short_label() {
    let ds = train_set([2, 5, 5]);
    let err = select_examples(&ds, "q1", 3, None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap_err();
    match err {
        Error::InsufficientExamples { label, available, .. } => {
            assert_eq!(label, Label::Correct);
            assert_eq!(available, 2);
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn rubric_mode_has_rubric_and_no_examples() {
    let s = sample("x", "q1", Label::Correct);
    let p = build_grading_prompt(&s, PromptMode::Rubric, LabelScheme::ThreeWay, &ExampleSet::empty()).unwrap();
    assert_eq!(p.messages[0].role, Role::System);
    assert!(p.system().starts_with("Context:"));
    assert!(p.user().contains(CLASSIFIES_RUBRIC));
    assert!(!p.user().contains("Graded Examples"));
    assert_eq!(count_rendered_examples(&p), 0);
    assert!(p.user().contains("Correct (C): 2 points"));
    assert!(p.user().contains("prioritize their understanding of the concepts"));
}

#[test]
fn rubric_mode_requires_rubric() {
    let mut s = sample("x", "q9", Label::Correct);
    s.rubric_text = None;
    let err = build_grading_prompt(&s, PromptMode::Rubric, LabelScheme::ThreeWay, &ExampleSet::empty()).unwrap_err();
    assert!(matches!(err, Error::MissingRubric(q) if q == "q9"));
}

#[test]
fn example_mode_zero_uses_generic_rubric() {
    let s = sample("x", "q1", Label::Correct);
    let p = build_grading_prompt(&s, PromptMode::Examples { k: 0 }, LabelScheme::ThreeWay, &ExampleSet::empty())
        .unwrap();
    let user = p.user();
    assert!(user.contains("completely correct to the given question"));
    assert!(!user.contains(CLASSIFIES_RUBRIC));
    assert!(user.contains("- Graded Examples: (none)"));
    assert_eq!(count_rendered_examples(&p), 0);
}

#[test]
fn example_mode_renders_three_k_examples() {
    let ds = train_set([6, 6, 6]);
    let target = sample("eval", "q1", Label::Correct);
    for k in 0..=5u8 {
        let set = select_examples(&ds, "q1", k.into(), Some("eval"), &mut ChaCha8Rng::seed_from_u64(k.into())).unwrap();
        let p = build_grading_prompt(&target, PromptMode::Examples { k }, LabelScheme::ThreeWay, &set).unwrap();
        assert_eq!(count_rendered_examples(&p), 3 * usize::from(k));
    }
}

#[test]
fn example_mode_rejects_wrong_count_and_leaks() {
    let ds = train_set([6, 6, 6]);
    let set = select_examples(&ds, "q1", 2, None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let target = sample("eval", "q1", Label::Correct);
    assert!(build_grading_prompt(&target, PromptMode::Examples { k: 3 }, LabelScheme::ThreeWay, &set).is_err());
    let leaked = ds.samples.iter().find(|s| set.contains_sample(&s.id)).unwrap();
    assert!(build_grading_prompt(leaked, PromptMode::Examples { k: 2 }, LabelScheme::ThreeWay, &set).is_err());
}

#[test]
fn two_tier_wording() {
    let mut s = sample("x", "q1", Label::Correct);
    s.rubric_text = None;
    let p = build_grading_prompt(&s, PromptMode::Examples { k: 0 }, LabelScheme::TwoWay, &ExampleSet::empty()).unwrap();
    let user = p.user();
    assert!(user.contains("Correct (C): 1 point"));
    assert!(!user.contains("Partially Correct"));
    assert!(user.contains("Correct: [[1]]"));
}

#[test]
fn grading_prompt_is_pure() {
    let s = sample("x", "q1", Label::Correct);
    let a = build_grading_prompt(&s, PromptMode::Rubric, LabelScheme::ThreeWay, &ExampleSet::empty()).unwrap();
    let b = build_grading_prompt(&s, PromptMode::Rubric, LabelScheme::ThreeWay, &ExampleSet::empty()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.digest(), b.digest());
}

#[test]
fn parse_examples() {
    assert_eq!(parse_score("[[2]]", LabelScheme::ThreeWay), Ok(Label::Correct));
    assert_eq!(
        parse_score("I think [[1]]. Final: [[0]]", LabelScheme::ThreeWay),
        Ok(Label::Incorrect)
    );
    assert_eq!(parse_score("no score here", LabelScheme::ThreeWay), Err(ScoreError::NoScoreFound));
    assert_eq!(parse_score("[[7]]", LabelScheme::ThreeWay), Err(ScoreError::OutOfRange(7)));
    assert_eq!(parse_score("[[2]]", LabelScheme::TwoWay), Err(ScoreError::OutOfRange(2)));
    assert_eq!(parse_score("score: [[ 1 ]]", LabelScheme::TwoWay), Ok(Label::Correct));
    assert_eq!(parse_score("[[99999999999999999999]]", LabelScheme::TwoWay), Err(ScoreError::OutOfRange(i64::MAX)));
}

#[test]
fn parse_inverts_render() {
    for scheme in [LabelScheme::TwoWay, LabelScheme::ThreeWay] {
        for &l in scheme.labels() {
            let reply = format!("Reasoning first. {}", render_score(l, scheme));
            assert_eq!(parse_score(&reply, scheme), Ok(l));
        }
    }
}

#[test]
fn feedback_prompt_asks_for_rationale() {
    let s = sample("x", "q1", Label::PartiallyCorrect);
    let p = build_feedback_prompt(&s, LabelScheme::ThreeWay, None).unwrap();
    let user = p.user();
    assert!(user.contains(CLASSIFIES_RUBRIC));
    assert!(user.contains("explain the rationale"));
    assert!(user.contains("prioritize their understanding of the concepts"));
    let reply = "Rationale: The answer identifies both variables but never says which one predicts the other, \
                 so only Component 1 and Component 2 are met.\n[[1]]";
    assert_eq!(parse_score(reply, LabelScheme::ThreeWay), Ok(Label::PartiallyCorrect));

    let mut bare = s.clone();
    bare.rubric_text = None;
    assert!(build_feedback_prompt(&bare, LabelScheme::ThreeWay, None).is_err());
}

#[test]
fn generation_prompt_contents() {
    let spec = GenerationSpec {
        question: "Q?",
        model_solution: "M.",
        rubric_text: Some(CLASSIFIES_RUBRIC),
        target_label: Label::Correct,
        scheme: LabelScheme::ThreeWay,
        target_length_words: 40,
        case_elements: None,
    };
    let p = build_generation_prompt(&spec).unwrap();
    let user = p.user();
    assert!(user.contains("Correct"));
    assert!(user.contains("approximately 40 words"));
    assert!(user.contains(CLASSIFIES_RUBRIC));
    let zero = GenerationSpec {
        target_length_words: 0,
        ..spec
    };
    assert!(build_generation_prompt(&zero).is_err());
}

#[test]
fn element_and_case_prompts() {
    let p = build_element_list_prompt(CLASSIFIES_RUBRIC).unwrap();
    let user = p.user();
    assert!(user.contains("1. Identifies the two variables."));
    assert!(user.contains("2. Identifies the explanatory variable"));
    assert!(user.contains("3. Indicates the explanatory variable predicts"));
    assert!(user.contains("JSON array"));
    assert!(build_element_list_prompt("  ").is_err());

    assert!(build_case_statement_prompt(&[], CLASSIFIES_RUBRIC, LabelScheme::ThreeWay, 12).is_err());
    let elements = vec!["two variables".to_string(), "roles".to_string()];
    let p = build_case_statement_prompt(&elements, CLASSIFIES_RUBRIC, LabelScheme::ThreeWay, 12).unwrap();
    assert!(p.user().contains("Write 12 case statements"));
    assert!(p.user().contains("\"partially_correct\""));
}

#[test]
fn json_array_extraction() {
    let reply = "Sure! Here are the elements:\n```json\n[\"two variables\", \"explanatory vs response\", \"prediction\"]\n```";
    let items = extract_json_array(reply).unwrap();
    assert_eq!(items.len(), 3);
    assert_eq!(extract_json_array("see [1] and [\"a\"]").unwrap(), vec![serde_json::json!(1)]);
    assert!(extract_json_array("no arrays [here").is_none());
}

#[test]
fn prompt_mode_parsing() {
    assert_eq!("rubric".parse::<PromptMode>().unwrap(), PromptMode::Rubric);
    assert_eq!("examples-k3".parse::<PromptMode>().unwrap(), PromptMode::Examples { k: 3 });
    assert!("examples-k6".parse::<PromptMode>().is_err());
}

proptest! {
    #[test]
    fn examples_never_include_evaluated_sample(
        counts in prop::array::uniform3(1usize..8),
        k in 0usize..=5,
        pick in 0usize..100,
        seed in any::<u64>(),
    ) {
        let ds = train_set(counts);
        let target = &ds.samples[pick % ds.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match select_examples(&ds, "q1", k, Some(&target.id), &mut rng) {
            Ok(set) => {
                prop_assert!(!set.contains_sample(&target.id));
                prop_assert_eq!(set.len(), 3 * k);
            }
            Err(Error::InsufficientExamples { available, needed, .. }) => prop_assert!(available < needed),
            Err(e) => prop_assert!(false, "unexpected error {}", e),
        }
    }
}
