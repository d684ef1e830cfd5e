//! Versioned prompt templates. Each template is a text resource compiled
//! into the binary; its SHA-256 is recorded in run manifests.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

pub struct Template {
    pub name: &'static str,
    raw: &'static str,
}

impl Template {
    pub fn text(&self) -> &'static str {
        self.raw.trim_end_matches('\n')
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.raw.as_bytes()))
    }

    /// Substitute `{{key}}` placeholders in one pass; substituted values are
    /// never re-scanned. Unknown placeholders are left as-is.
    pub fn render(&self, vars: &[(&str, &str)]) -> String {
        render(self.text(), vars)
    }
}

macro_rules! template {
    ($ident:ident, $file:literal) => {
        pub const $ident: Template = Template {
            name: $file,
            raw: include_str!(concat!("../../templates/", $file)),
        };
    };
}

template!(GRADING_SYSTEM, "grading_system.v1.txt");
template!(GRADING_USER, "grading_user.v1.txt");
template!(LABEL_LEVEL_RUBRIC, "label_level_rubric.v1.txt");
template!(SCORE_FORMAT, "score_format.v1.txt");
template!(FEEDBACK_FORMAT, "feedback_format.v1.txt");
template!(GENERATION, "generation.v1.txt");
template!(ELEMENT_LIST, "element_list.v1.txt");
template!(CASE_STATEMENTS, "case_statements.v1.txt");
template!(SYNTHESIS_SYSTEM, "synthesis_system.v1.txt");
template!(RETRY_SCORE, "retry_score.v1.txt");
template!(RETRY_JSON, "retry_json.v1.txt");

pub const ALL: [&Template; 11] = [
    &GRADING_SYSTEM,
    &GRADING_USER,
    &LABEL_LEVEL_RUBRIC,
    &SCORE_FORMAT,
    &FEEDBACK_FORMAT,
    &GENERATION,
    &ELEMENT_LIST,
    &CASE_STATEMENTS,
    &SYNTHESIS_SYSTEM,
    &RETRY_SCORE,
    &RETRY_JSON,
];

/// Template file name → SHA-256 of its contents.
pub fn template_hashes() -> BTreeMap<String, String> {
    ALL.iter().map(|t| (t.name.to_string(), t.sha256())).collect()
}

pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let key = &after[..end];
                match vars.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push_str("{{");
                        out.push_str(key);
                        out.push_str("}}");
                    }
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_single_pass() {
        let out = render("a {{x}} b {{y}} {{z}}", &[("x", "{{y}}"), ("y", "Y")]);
        assert_eq!(out, "a {{y}} b Y {{z}}");
    }

    #[test]
    fn hashes_cover_every_template() {
        let h = template_hashes();
        assert_eq!(h.len(), ALL.len());
        assert!(h.values().all(|v| v.len() == 64));
    }
}
