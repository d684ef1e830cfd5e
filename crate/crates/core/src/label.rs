//! Correctness labels and the 2-way / 3-way label schemes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Ordinal correctness label. Ordering follows correctness:
/// `Incorrect < PartiallyCorrect < Correct`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Incorrect,
    PartiallyCorrect,
    Correct,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Incorrect, Label::PartiallyCorrect, Label::Correct];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Incorrect => "incorrect",
            Label::PartiallyCorrect => "partially_correct",
            Label::Correct => "correct",
        }
    }

    /// Human-readable name used inside prompts and reports.
    pub fn display_name(self) -> &'static str {
        match self {
            Label::Incorrect => "Incorrect",
            Label::PartiallyCorrect => "Partially Correct",
            Label::Correct => "Correct",
        }
    }

    pub fn short_code(self) -> char {
        match self {
            Label::Incorrect => 'I',
            Label::PartiallyCorrect => 'P',
            Label::Correct => 'C',
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "correct" | "c" => Ok(Label::Correct),
            "partially_correct" | "partially correct" | "partial" | "p" => {
                Ok(Label::PartiallyCorrect)
            }
            "incorrect" | "i" => Ok(Label::Incorrect),
            other => Err(Error::InvalidInput(format!("unknown label {other:?}"))),
        }
    }
}

/// Source labels of the SemEval-2013 style 5-way annotation (six values).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiveWayLabel {
    Correct,
    PartiallyCorrect,
    Incomplete,
    Contradictory,
    Irrelevant,
    NonDomain,
}

impl FiveWayLabel {
    pub const ALL: [FiveWayLabel; 6] = [
        FiveWayLabel::Correct,
        FiveWayLabel::PartiallyCorrect,
        FiveWayLabel::Incomplete,
        FiveWayLabel::Contradictory,
        FiveWayLabel::Irrelevant,
        FiveWayLabel::NonDomain,
    ];
}

impl FromStr for FiveWayLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        match norm.as_str() {
            "correct" => Ok(FiveWayLabel::Correct),
            "partiallycorrect" | "partiallycorrectincomplete" => Ok(FiveWayLabel::PartiallyCorrect),
            "incomplete" => Ok(FiveWayLabel::Incomplete),
            "contradictory" => Ok(FiveWayLabel::Contradictory),
            "irrelevant" => Ok(FiveWayLabel::Irrelevant),
            "nondomain" => Ok(FiveWayLabel::NonDomain),
            _ => Err(Error::InvalidInput(format!("unknown 5-way label {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelScheme {
    #[serde(rename = "2way")]
    TwoWay,
    #[serde(rename = "3way")]
    ThreeWay,
}

impl LabelScheme {
    /// Legal labels, most correct first (the order used in prompts).
    pub fn labels(self) -> &'static [Label] {
        match self {
            LabelScheme::TwoWay => &[Label::Correct, Label::Incorrect],
            LabelScheme::ThreeWay => &[Label::Correct, Label::PartiallyCorrect, Label::Incorrect],
        }
    }

    pub fn contains(self, label: Label) -> bool {
        self.labels().contains(&label)
    }

    pub fn points(self, label: Label) -> Option<u8> {
        match (self, label) {
            (_, Label::Incorrect) => Some(0),
            (LabelScheme::ThreeWay, Label::PartiallyCorrect) => Some(1),
            (LabelScheme::TwoWay, Label::PartiallyCorrect) => None,
            (LabelScheme::ThreeWay, Label::Correct) => Some(2),
            (LabelScheme::TwoWay, Label::Correct) => Some(1),
        }
    }

    pub fn from_points(self, points: i64) -> Option<Label> {
        self.labels()
            .iter()
            .copied()
            .find(|&l| self.points(l).map(i64::from) == Some(points))
    }

    pub fn max_points(self) -> u8 {
        match self {
            LabelScheme::TwoWay => 1,
            LabelScheme::ThreeWay => 2,
        }
    }

    pub fn tiers(self) -> u8 {
        match self {
            LabelScheme::TwoWay => 2,
            LabelScheme::ThreeWay => 3,
        }
    }
}

impl fmt::Display for LabelScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelScheme::TwoWay => "2way",
            LabelScheme::ThreeWay => "3way",
        })
    }
}

impl FromStr for LabelScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "2" | "2way" | "2-way" | "two" | "two_way" => Ok(LabelScheme::TwoWay),
            "3" | "3way" | "3-way" | "three" | "three_way" => Ok(LabelScheme::ThreeWay),
            other => Err(Error::InvalidInput(format!("unknown label scheme {other:?}"))),
        }
    }
}

/// Collapse a 5-way source label into the target scheme.
///
/// Under the 3-way scheme `Incomplete` lands in `PartiallyCorrect`: it is
/// excluded from the 3-way Incorrect group but included in the 2-way one.
pub fn collapse_label(src: FiveWayLabel, scheme: LabelScheme) -> Label {
    match (scheme, src) {
        (_, FiveWayLabel::Correct) => Label::Correct,
        (LabelScheme::TwoWay, _) => Label::Incorrect,
        (LabelScheme::ThreeWay, FiveWayLabel::PartiallyCorrect | FiveWayLabel::Incomplete) => {
            Label::PartiallyCorrect
        }
        (
            LabelScheme::ThreeWay,
            FiveWayLabel::Contradictory | FiveWayLabel::Irrelevant | FiveWayLabel::NonDomain,
        ) => Label::Incorrect,
    }
}
