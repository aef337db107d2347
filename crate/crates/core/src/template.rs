//! Language-specific prompt templates and budgeted rendering.
//!
//! A rendered prompt has the fixed layout
//!
//! ```text
//! {document}
//! <|endoftext|>
//! Question: Was there a violation of any human rights articles?
//! A, Yes
//! B, No
//! Answer:
//! ```
//!
//! The token budget covers the whole prompt. The scaffold (everything from the
//! separator on) is reserved first and the document head fills what is left.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::CaseDocument;
use crate::error::{Error, Result};
use crate::label::{Label, Language};

pub const SEPARATOR: &str = "<|endoftext|>";
pub const DEFAULT_BUDGET: usize = 2048;

const BUILTIN_SOURCES: [(Language, &str); 4] = [
    (Language::En, include_str!("../data/templates/en.toml")),
    (Language::De, include_str!("../data/templates/de.toml")),
    (Language::Fr, include_str!("../data/templates/fr.toml")),
    (Language::It, include_str!("../data/templates/it.toml")),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplate {
    pub language: Language,
    #[serde(default = "default_separator")]
    pub separator: String,
    pub question_label: String,
    pub question_text: String,
    #[serde(default = "default_letters")]
    pub option_letters: [String; 2],
    pub option_positive: String,
    pub option_negative: String,
    pub answer_label: String,
    #[serde(default)]
    pub options_swapped: bool,
}

fn default_separator() -> String {
    SEPARATOR.to_string()
}

fn default_letters() -> [String; 2] {
    ["A".to_string(), "B".to_string()]
}

impl PromptTemplate {
    pub fn from_toml_str(source: &str) -> Result<Self> {
        let template: PromptTemplate = toml::from_str(source).map_err(|e| Error::Parse {
            what: "template".into(),
            message: e.to_string(),
        })?;
        template.validate()?;
        Ok(template)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&source).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                what: format!("template {}", path.display()),
                message,
            },
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("template fields are plain strings")
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("separator", &self.separator),
            ("question_label", &self.question_label),
            ("question_text", &self.question_text),
            ("option_letters[0]", &self.option_letters[0]),
            ("option_letters[1]", &self.option_letters[1]),
            ("option_positive", &self.option_positive),
            ("option_negative", &self.option_negative),
            ("answer_label", &self.answer_label),
        ];
        for (name, value) in fields {
            if value.is_empty() {
                return Err(Error::invalid("template", format!("`{name}` must be non-empty")));
            }
        }
        if self.option_letters[0] == self.option_letters[1] {
            return Err(Error::invalid("template", "option letters must be distinct"));
        }
        Ok(())
    }

    /// Label bound to the option letter at `index` (0 = first line) under the current assignment.
    pub fn label_at(&self, index: usize) -> Label {
        let first = if self.options_swapped {
            Label::Negative
        } else {
            Label::Positive
        };
        if index == 0 {
            first
        } else {
            first.flip()
        }
    }

    /// Label denoted by `letter`, compared case-insensitively.
    pub fn label_for_letter(&self, letter: &str) -> Option<Label> {
        self.option_letters
            .iter()
            .position(|l| l.to_lowercase() == letter.to_lowercase())
            .map(|i| self.label_at(i))
    }

    pub fn letter_for(&self, label: Label) -> &str {
        if self.label_at(0) == label {
            &self.option_letters[0]
        } else {
            &self.option_letters[1]
        }
    }

    pub fn option_text(&self, label: Label) -> &str {
        match label {
            Label::Positive => &self.option_positive,
            Label::Negative => &self.option_negative,
        }
    }

    /// Everything after the document: separator line through the answer label.
    pub fn scaffold(&self) -> String {
        let first = self.option_text(self.label_at(0));
        let second = self.option_text(self.label_at(1));
        format!(
            "{}\n{} {}\n{}, {}\n{}, {}\n{}",
            self.separator,
            self.question_label,
            self.question_text,
            self.option_letters[0],
            first,
            self.option_letters[1],
            second,
            self.answer_label
        )
    }

    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("template serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}

pub fn builtin_templates() -> BTreeMap<Language, PromptTemplate> {
    BUILTIN_SOURCES
        .iter()
        .map(|(lang, src)| {
            let template = PromptTemplate::from_toml_str(src).expect("shipped template is valid");
            debug_assert_eq!(template.language, *lang);
            (*lang, template)
        })
        .collect()
}

pub fn builtin_template(language: Language) -> PromptTemplate {
    builtin_templates().remove(&language).expect("all languages ship a template")
}

/// Returns a template with the option lines exchanged.
pub fn swap_options(template: &PromptTemplate) -> PromptTemplate {
    PromptTemplate {
        options_swapped: !template.options_swapped,
        ..template.clone()
    }
}

pub trait TokenCounter: Send + Sync {
    fn name(&self) -> &str;

    fn count(&self, text: &str) -> Result<usize>;
}

/// ceil(byte_length / 4), a model-agnostic stand-in for a BPE tokenizer.
#[derive(Debug, Clone, Copy, Default)]
pub struct ApproxCounter;

impl ApproxCounter {
    pub fn count_str(text: &str) -> usize {
        text.len().div_ceil(4)
    }
}

impl TokenCounter for ApproxCounter {
    fn name(&self) -> &str {
        "approx-bytes/4"
    }

    fn count(&self, text: &str) -> Result<usize> {
        Ok(Self::count_str(text))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub doc_id: String,
    pub token_count: usize,
    pub truncated: bool,
    pub template_language: Language,
    /// Byte length of the document region at the start of `text`.
    pub document_len: usize,
}

impl RenderedPrompt {
    pub fn document(&self) -> &str {
        &self.text[..self.document_len]
    }

    /// The text following the document region (empty for document-only prompts).
    pub fn scaffold(&self) -> &str {
        self.text[self.document_len..]
            .strip_prefix('\n')
            .unwrap_or(&self.text[self.document_len..])
    }
}

/// Renders `template` around `doc` so that the whole prompt fits in `budget` tokens.
pub fn render(
    template: &PromptTemplate,
    doc: &CaseDocument,
    counter: &dyn TokenCounter,
    budget: usize,
) -> Result<RenderedPrompt> {
    let suffix = format!("\n{}", template.scaffold());
    let scaffold_tokens = counter.count(&suffix)?;
    if scaffold_tokens >= budget {
        return Err(Error::BudgetTooSmall {
            budget,
            scaffold: scaffold_tokens,
        });
    }
    let document = doc.text.replace(&template.separator, "");
    let (text, token_count, document_len) = fit_head(&document, &suffix, counter, budget)?;
    Ok(RenderedPrompt {
        text,
        doc_id: doc.id.clone(),
        token_count,
        truncated: document_len < document.len(),
        template_language: template.language,
        document_len,
    })
}

/// The bare document with no question at all, truncated to `budget`.
pub fn render_document_only(
    doc: &CaseDocument,
    counter: &dyn TokenCounter,
    budget: usize,
) -> Result<RenderedPrompt> {
    if budget == 0 {
        return Err(Error::BudgetTooSmall { budget, scaffold: 0 });
    }
    let (text, token_count, document_len) = fit_head(&doc.text, "", counter, budget)?;
    Ok(RenderedPrompt {
        text,
        doc_id: doc.id.clone(),
        token_count,
        truncated: document_len < doc.text.len(),
        template_language: doc.language,
        document_len,
    })
}

/// Longest head of `document` (on a char boundary) such that `head + suffix` fits.
fn fit_head(
    document: &str,
    suffix: &str,
    counter: &dyn TokenCounter,
    budget: usize,
) -> Result<(String, usize, usize)> {
    let assemble = |len: usize| format!("{}{}", &document[..len], suffix);

    let full = assemble(document.len());
    let full_count = counter.count(&full)?;
    if full_count <= budget {
        return Ok((full, full_count, document.len()));
    }

    let boundaries: Vec<usize> = document.char_indices().map(|(i, _)| i).collect();
    // boundaries[0] == 0 always fits (checked by the caller); find the last one that fits.
    let (mut lo, mut hi) = (0usize, boundaries.len());
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if counter.count(&assemble(boundaries[mid]))? <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let len = boundaries.get(lo).copied().unwrap_or(0);
    let text = assemble(len);
    let count = counter.count(&text)?;
    Ok((text, count, len))
}
