//! Rubric-governed meta-question synthesis.
//!
//! A meta-question bundles five distinct base questions; a meta-answer picks
//! one base response per sub-question so that its correctness vector grades
//! to a chosen label under the meta-question's rubric.

mod generate;
mod rubric;

pub use generate::{
    build_meta_answer, build_meta_question, generate_meta_dataset, MetaDatasetOptions, MetaGeneration,
    MetaPool, MetaQuestion, MetaSample, PoolQuestion, RubricMode, SubAnswer, SubQuestion,
};
pub use rubric::{
    enumerate_sampling_space, evaluate_rubric, fixed_rubric, generate_meta_rubric, render_rubric_text,
    CorrectnessVector, LabelCensus, LevelCriterion, MetaRubric, SUB_QUESTIONS, VECTOR_COUNT,
};
