//! Rubric-driven automated assessment toolkit.
//!
//! Modules map onto the pipeline stages: [`dataset`] holds the canonical
//! records, [`meta`] synthesizes rubric-governed meta-questions with an exact
//! grading oracle, [`prompting`] renders grading/synthesis prompts and parses
//! replies, [`llm`] talks to chat-completions endpoints (with caching and a
//! replay transport), [`grading`] runs prompt→reply→label batches,
//! [`synthesis`] implements the three data-synthesis methods, and
//! [`evaluation`] computes metrics, similarity reports and annotation sheets.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod grading;
pub mod label;
pub mod llm;
pub mod manifest;
pub mod meta;
pub mod prompting;
pub mod synthesis;

pub use error::{Error, Result};
pub use label::{collapse_label, FiveWayLabel, Label, LabelScheme};
