//! Completion-to-label mapping and article-citation extraction.
//!
//! A completion is mapped by the first rule (in priority order) that fires:
//!
//! * `letter_match`: an option letter at the first alphanumeric position of the
//!   first line, followed by `,`, `.`, whitespace or end of line. The label comes
//!   from the template's current letter assignment, so swapping options flips it.
//! * `option_text_match`: an option string at the same anchored position.
//! * `phrase_match`: a phrase anywhere in the completion.
//!
//! Matching is case-insensitive; leading whitespace is ignored. Spans are byte
//! offsets into the original completion.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::sync::{Mutex, OnceLock};

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::label::{Label, Language, Outcome};
use crate::template::PromptTemplate;

const ANY_RULES: &str = include_str!("../data/rules/any.toml");

fn builtin_rule_source(language: Language) -> &'static str {
    match language {
        Language::En => include_str!("../data/rules/en.toml"),
        Language::De => include_str!("../data/rules/de.toml"),
        Language::Fr => include_str!("../data/rules/fr.toml"),
        Language::It => include_str!("../data/rules/it.toml"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    LetterMatch,
    OptionTextMatch,
    PhraseMatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParseRule {
    pub rule_id: String,
    pub kind: RuleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    /// Fixed target; letter rules resolve theirs through the template instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Label>,
    pub language: String,
    pub priority: i32,
}

impl ParseRule {
    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::invalid("parse rule", format!("`{}`: {msg}", self.rule_id)));
        if self.rule_id.is_empty() {
            return Err(Error::invalid("parse rule", "rule_id must be non-empty"));
        }
        if self.language != "any" && self.language.parse::<Language>().is_err() {
            return bad("language must be `any` or a language code");
        }
        match self.kind {
            RuleKind::LetterMatch => Ok(()),
            RuleKind::OptionTextMatch if self.target.is_none() => bad("option rules need a target"),
            RuleKind::OptionTextMatch => Ok(()),
            RuleKind::PhraseMatch => match (&self.pattern, self.target) {
                (Some(p), Some(_)) if !p.trim().is_empty() => Ok(()),
                _ => bad("phrase rules need a non-empty pattern and a target"),
            },
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    #[serde(default)]
    rules: Vec<ParseRule>,
}

fn parse_rule_file(source: &str, what: &str) -> Result<Vec<ParseRule>> {
    let file: RuleFile = toml::from_str(source).map_err(|e| Error::Parse {
        what: what.to_string(),
        message: e.to_string(),
    })?;
    Ok(file.rules)
}

/// Rules sorted by ascending priority (lower number fires first).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RuleSet {
    rules: Vec<ParseRule>,
}

impl RuleSet {
    pub fn new(mut rules: Vec<ParseRule>) -> Result<Self> {
        if rules.is_empty() {
            return Err(Error::Empty("rule set must contain at least one rule"));
        }
        let mut ids = HashSet::new();
        let mut priorities = HashSet::new();
        for rule in &rules {
            rule.validate()?;
            if !ids.insert(rule.rule_id.as_str()) {
                return Err(Error::invalid("rule set", format!("duplicate rule_id `{}`", rule.rule_id)));
            }
            if !priorities.insert(rule.priority) {
                return Err(Error::invalid(
                    "rule set",
                    format!("priority {} used twice", rule.priority),
                ));
            }
        }
        rules.sort_by_key(|r| r.priority);
        Ok(RuleSet { rules })
    }

    /// Loads `any.toml` and `<language>.toml` from `dir`; either may be absent.
    pub fn load_dir(dir: impl AsRef<Path>, language: Language) -> Result<Self> {
        let dir = dir.as_ref();
        let mut rules = Vec::new();
        for name in ["any".to_string(), language.code().to_string()] {
            let path = dir.join(format!("{name}.toml"));
            if !path.exists() {
                continue;
            }
            let source = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            rules.extend(parse_rule_file(&source, &path.display().to_string())?);
        }
        RuleSet::new(rules)
    }

    pub fn rules(&self) -> &[ParseRule] {
        &self.rules
    }

    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(&self.rules).expect("rules serialize")))
    }
}

/// The shipped cascade for `language`: shared letter/option rules plus its phrase rules.
pub fn default_rules(language: &str) -> Result<RuleSet> {
    let language: Language = language.parse()?;
    let mut rules = parse_rule_file(ANY_RULES, "builtin any rules")?;
    rules.extend(parse_rule_file(builtin_rule_source(language), "builtin language rules")?);
    RuleSet::new(rules)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedLabel {
    pub outcome: Outcome,
    pub rule_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_span: Option<(usize, usize)>,
    #[serde(default)]
    pub coerced: bool,
}

impl ParsedLabel {
    pub fn unmapped() -> Self {
        ParsedLabel {
            outcome: Outcome::Unmapped,
            rule_id: "none".into(),
            matched_span: None,
            coerced: false,
        }
    }
}

/// Compiled once per distinct pattern; templates and rules repeat across documents.
fn case_insensitive(pattern: &str) -> Regex {
    static COMPILED: OnceLock<Mutex<HashMap<String, Regex>>> = OnceLock::new();
    let mut compiled = COMPILED.get_or_init(Default::default).lock().unwrap();
    compiled
        .entry(pattern.to_string())
        .or_insert_with(|| {
            RegexBuilder::new(pattern)
                .case_insensitive(true)
                .build()
                .expect("pattern built from escaped literals")
        })
        .clone()
}

/// Span of the first of `alternatives` found at the first alphanumeric position
/// of `line` (case-insensitively) whose next character satisfies `tail`.
fn anchored_match(line: &str, alternatives: &[&str], tail: fn(Option<char>) -> bool) -> Option<(usize, usize, String)> {
    let start = line.char_indices().find(|(_, c)| c.is_alphanumeric())?.0;
    let rest = &line[start..];
    alternatives.iter().find_map(|alt| {
        let n = alt.chars().count();
        let end = match rest.char_indices().nth(n) {
            Some((i, _)) => i,
            None if rest.chars().count() == n => rest.len(),
            None => return None,
        };
        let candidate = &rest[..end];
        (candidate.to_lowercase() == alt.to_lowercase() && tail(rest[end..].chars().next()))
            .then(|| (start, start + end, candidate.to_string()))
    })
}

fn letter_break(next: Option<char>) -> bool {
    next.is_none_or(|c| c == ',' || c == '.' || c.is_whitespace())
}

fn word_break(next: Option<char>) -> bool {
    next.is_none_or(|c| !c.is_alphanumeric())
}

/// Maps a completion to a label through `rules`.
pub fn parse_completion(completion: &str, template: &PromptTemplate, rules: &RuleSet) -> ParsedLabel {
    let trimmed = completion.trim_start();
    let offset = completion.len() - trimmed.len();
    let first_line = trimmed.split('\n').next().unwrap_or("");

    for rule in rules.rules() {
        let hit: Option<(usize, usize, Label)> = match rule.kind {
            RuleKind::LetterMatch => {
                let letters = [template.option_letters[0].as_str(), template.option_letters[1].as_str()];
                anchored_match(first_line, &letters, letter_break)
                    .and_then(|(s, e, letter)| template.label_for_letter(&letter).map(|l| (s, e, l)))
            }
            RuleKind::OptionTextMatch => rule.target.and_then(|target| {
                anchored_match(first_line, &[template.option_text(target)], word_break)
                    .map(|(s, e, _)| (s, e, target))
            }),
            RuleKind::PhraseMatch => match (&rule.pattern, rule.target) {
                (Some(pattern), Some(target)) => case_insensitive(&format!(r"\b{}", regex::escape(pattern)))
                    .find(trimmed)
                    .map(|m| (m.start(), m.end(), target)),
                _ => None,
            },
        };
        if let Some((start, end, label)) = hit {
            return ParsedLabel {
                outcome: label.into(),
                rule_id: rule.rule_id.clone(),
                matched_span: Some((offset + start, offset + end)),
                coerced: false,
            };
        }
    }
    ParsedLabel::unmapped()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleMentions {
    pub articles: BTreeSet<u32>,
    /// Byte spans of each cited number, in text order.
    pub spans: Vec<(usize, usize)>,
}

fn citation_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let item = r"\d+(?:\s*§+\s*\d+)*";
        let sep = r"(?:\s*,\s*(?:(?:and|und|et|e|ed)\s+)?|\s+(?:and|or|und|oder|et|ou|e|ed|o)\s+|\s*&\s*)";
        let keyword = r"\b(?:articles?|artikeln?|articol[oi]|art\.)";
        case_insensitive(&format!(r"{keyword}\s*({item}(?:{sep}{item})*)"))
    })
}

fn item_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(\d+)(?:\s*§+\s*\d+)*").expect("static pattern"))
}

/// Article numbers cited as "Article N", "Art. N", "Articles N, M and K", "Artikel N", ...
///
/// Section marks are skipped: "Article 5 §3" cites article 5 only.
pub fn extract_articles(text: &str) -> ArticleMentions {
    let mut mentions = ArticleMentions::default();
    for caps in citation_regex().captures_iter(text) {
        let list = caps.get(1).expect("group 1 always participates");
        for item in item_regex().captures_iter(list.as_str()) {
            let number = item.get(1).expect("group 1 always participates");
            let Ok(article) = number.as_str().parse::<u32>() else {
                continue;
            };
            if article == 0 {
                continue;
            }
            mentions.articles.insert(article);
            mentions
                .spans
                .push((list.start() + number.start(), list.start() + number.end()));
        }
    }
    mentions
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArticleOverlap {
    pub intersection: usize,
    pub exact_match: bool,
    pub jaccard: f64,
}

/// Jaccard overlap between cited and gold articles; two empty sets count as a perfect match.
pub fn article_overlap(predicted: &ArticleMentions, gold: &BTreeSet<u32>) -> ArticleOverlap {
    let intersection = predicted.articles.intersection(gold).count();
    let union = predicted.articles.union(gold).count();
    ArticleOverlap {
        intersection,
        exact_match: predicted.articles == *gold,
        jaccard: if union == 0 {
            1.0
        } else {
            intersection as f64 / union as f64
        },
    }
}
