//! Binarized legal-judgment corpora in a neutral line-delimited JSON format.
//!
//! One record per line:
//!
//! ```text
//! {"id": "001-1234", "language": "en", "text": "...", "label": "positive", "articles": [3, 6], "split": "test"}
//! ```
//!
//! `articles` is optional and only meaningful for ECHR-style corpora. Unknown
//! fields are ignored with a warning.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{Label, Language, Split};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseDocument {
    pub id: String,
    pub language: Language,
    pub text: String,
    #[serde(rename = "label")]
    pub gold_label: Label,
    #[serde(rename = "articles", default, skip_serializing_if = "Option::is_none")]
    pub gold_articles: Option<BTreeSet<u32>>,
    pub split: Split,
}

impl CaseDocument {
    /// Checks the per-record invariants, reporting the offending field name.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.id.is_empty() {
            return Err(("id", "must be non-empty".into()));
        }
        if self.text.is_empty() {
            return Err(("text", "must be non-empty".into()));
        }
        if let Some(articles) = &self.gold_articles {
            if articles.contains(&0) {
                return Err(("articles", "article numbers must be positive".into()));
            }
            let implied = binarize_echr(articles);
            if implied != self.gold_label {
                return Err((
                    "articles",
                    format!(
                        "label is {} but articles {:?} imply {}",
                        self.gold_label, articles, implied
                    ),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct RawRecord {
    #[serde(flatten)]
    doc: CaseDocument,
    #[serde(flatten)]
    extra: BTreeMap<String, serde_json::Value>,
}

/// Loads all records of `split` (optionally restricted to one language), in file order.
///
/// Every line in the file is parsed and validated, not only the selected ones.
/// Ids must be unique within a split.
pub fn load_corpus(
    path: impl AsRef<Path>,
    split: Split,
    language_filter: Option<Language>,
) -> Result<Vec<CaseDocument>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut seen: HashMap<(Split, String), usize> = HashMap::new();
    let mut docs = Vec::new();
    let mut warned = BTreeSet::new();

    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Record {
            path: path.to_path_buf(),
            line: line_no,
            field: field_from_serde_error(&e),
            message: e.to_string(),
        })?;
        for key in raw.extra.keys() {
            if warned.insert(key.clone()) {
                log::warn!("{}:{line_no}: ignoring unknown field `{key}`", path.display());
            }
        }
        let doc = raw.doc;
        doc.validate().map_err(|(field, message)| Error::Record {
            path: path.to_path_buf(),
            line: line_no,
            field: field.to_string(),
            message,
        })?;
        if let Some(first) = seen.insert((doc.split, doc.id.clone()), line_no) {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                id: doc.id,
                first,
                second: line_no,
            });
        }
        if doc.split == split && language_filter.is_none_or(|l| l == doc.language) {
            docs.push(doc);
        }
    }
    Ok(docs)
}

/// Best-effort extraction of the offending field from a serde_json message.
fn field_from_serde_error(err: &serde_json::Error) -> String {
    let msg = err.to_string();
    // serde_json quotes field names with backticks: "missing field `text`"
    if let Some(start) = msg.find('`') {
        if let Some(len) = msg[start + 1..].find('`') {
            return msg[start + 1..start + 1 + len].to_string();
        }
    }
    "record".to_string()
}

pub fn write_corpus(path: impl AsRef<Path>, docs: &[CaseDocument]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for doc in docs {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// ECHR binarization: any violated article makes the case positive.
pub fn binarize_echr(articles: &BTreeSet<u32>) -> Label {
    if articles.is_empty() {
        Label::Negative
    } else {
        Label::Positive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionStats {
    pub n: usize,
    pub positive: usize,
    pub negative: usize,
    pub majority_label: Label,
    pub p_majority: f64,
    /// Set when both classes have equal counts; the majority then defaults to positive.
    pub tie: bool,
}

impl DistributionStats {
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a Label>) -> Result<Self> {
        let (mut positive, mut negative) = (0usize, 0usize);
        for label in labels {
            match label {
                Label::Positive => positive += 1,
                Label::Negative => negative += 1,
            }
        }
        let n = positive + negative;
        if n == 0 {
            return Err(Error::Empty("distribution needs at least one document"));
        }
        let (majority_label, majority) = if positive >= negative {
            (Label::Positive, positive)
        } else {
            (Label::Negative, negative)
        };
        Ok(DistributionStats {
            n,
            positive,
            negative,
            majority_label,
            p_majority: majority as f64 / n as f64,
            tie: positive == negative,
        })
    }

    pub fn count(&self, label: Label) -> usize {
        match label {
            Label::Positive => self.positive,
            Label::Negative => self.negative,
        }
    }
}

pub fn distribution(docs: &[CaseDocument]) -> Result<DistributionStats> {
    DistributionStats::from_labels(docs.iter().map(|d| &d.gold_label))
}
