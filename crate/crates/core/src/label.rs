use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary judgment outcome. `Positive` is "violation" for ECHR and "approval" for FSCS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn flip(self) -> Label {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
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

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positive" => Ok(Label::Positive),
            "negative" => Ok(Label::Negative),
            other => Err(Error::invalid(
                "label",
                format!("`{other}` (expected positive or negative)"),
            )),
        }
    }
}

/// Result of mapping a completion: a label or nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Positive,
    Negative,
    Unmapped,
}

impl Outcome {
    pub fn label(self) -> Option<Label> {
        match self {
            Outcome::Positive => Some(Label::Positive),
            Outcome::Negative => Some(Label::Negative),
            Outcome::Unmapped => None,
        }
    }

    /// Exchanges positive and negative; unmapped is fixed.
    pub fn flip(self) -> Outcome {
        match self {
            Outcome::Positive => Outcome::Negative,
            Outcome::Negative => Outcome::Positive,
            Outcome::Unmapped => Outcome::Unmapped,
        }
    }
}

impl From<Label> for Outcome {
    fn from(label: Label) -> Self {
        match label {
            Label::Positive => Outcome::Positive,
            Label::Negative => Outcome::Negative,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Positive => "positive",
            Outcome::Negative => "negative",
            Outcome::Unmapped => "unmapped",
        })
    }
}

/// Corpus-specific display strings for the two labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelNames {
    pub positive: String,
    pub negative: String,
}

impl LabelNames {
    pub fn new(positive: impl Into<String>, negative: impl Into<String>) -> Result<Self> {
        let names = LabelNames {
            positive: positive.into(),
            negative: negative.into(),
        };
        names.validate()?;
        Ok(names)
    }

    pub fn echr() -> Self {
        LabelNames {
            positive: "violation".into(),
            negative: "no violation".into(),
        }
    }

    pub fn fscs() -> Self {
        LabelNames {
            positive: "approval".into(),
            negative: "dismissal".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.positive.is_empty() || self.negative.is_empty() {
            return Err(Error::invalid("label names", "display strings must be non-empty"));
        }
        if self.positive == self.negative {
            return Err(Error::invalid("label names", "display strings must differ"));
        }
        Ok(())
    }

    pub fn name(&self, label: Label) -> &str {
        match label {
            Label::Positive => &self.positive,
            Label::Negative => &self.negative,
        }
    }
}

impl Default for LabelNames {
    fn default() -> Self {
        LabelNames {
            positive: "positive".into(),
            negative: "negative".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    De,
    Fr,
    It,
}

impl Language {
    pub const ALL: [Language; 4] = [Language::En, Language::De, Language::Fr, Language::It];

    pub fn code(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::De => "de",
            Language::Fr => "fr",
            Language::It => "it",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "en" => Ok(Language::En),
            "de" => Ok(Language::De),
            "fr" => Ok(Language::Fr),
            "it" => Ok(Language::It),
            other => Err(Error::invalid(
                "language",
                format!("`{other}` (expected en, de, fr or it)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(
                "split",
                format!("`{other}` (expected train, validation or test)"),
            )),
        }
    }
}
