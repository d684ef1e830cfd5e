//! Metrics with bootstrap confidence intervals, rubric-similarity analysis
//! and feedback-annotation sheets.

mod annotation;
mod metrics;
mod report;
mod similarity;

pub use annotation::{
    sample_annotation_sheet, summarize_annotations, AnnotationCondition, AnnotationRow, AnnotationSheet,
    AnnotationSummary, Proportion,
};
pub use metrics::{accuracy, bootstrap_ci, confusion_counts, label_metrics, macro_f1, LabelCounts, LabelMetrics};
pub use report::{BootstrapOptions, EvalReport, QuestionAccuracy};
pub use similarity::{
    cosine_similarity, rubric_similarity_report, similarity_from_embeddings, QuestionSimilarity, SimilarityReport,
};

/// Sum after sorting, so the result does not depend on input order.
pub(crate) fn order_free_sum(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}
