//! End-to-end experiments: render, generate (cache-first), parse, score.
//!
//! Output directory layout:
//!
//! ```text
//! result.json    ExperimentResult
//! records.jsonl  one PredictionRecord per document
//! report.txt     table report
//! report.csv     csv report
//! cache/         completion cache, one file per template/length namespace
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{
    generate, BackendDescriptor, Backend, Completion, CompletionCache, GenerationParams, HttpBackend,
    RemoteCounter, RetryPolicy,
};
use crate::corpus::{distribution, load_corpus, CaseDocument, DistributionStats};
use crate::error::{Error, Result};
use crate::label::{Label, LabelNames, Language, Outcome, Split};
use crate::metrics::{
    compute_metrics, confusion, simulate_random_baseline, ConfusionMatrix, MetricsReport,
};
use crate::parser::{
    article_overlap, default_rules, extract_articles, parse_completion, ArticleMentions, ArticleOverlap, ParsedLabel,
    RuleSet,
};
use crate::report::{baseline_rows, emit_report, ReportFormat, ReportRow};
use crate::template::{builtin_template, render, swap_options, ApproxCounter, PromptTemplate, RenderedPrompt, TokenCounter, DEFAULT_BUDGET};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnmappedPolicy {
    #[default]
    CoerceToMajority,
    CoerceToNegative,
    ExcludeAndReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateSource {
    Builtin(Language),
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CounterKind {
    #[default]
    Approx,
    /// Delegates to the backend's `/tokenize` route; needs an http backend.
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: PathBuf,
    pub split: Split,
    #[serde(default)]
    pub language: Option<Language>,
    /// Defaults to the builtin template of `language` (or of the first document).
    #[serde(default)]
    pub template: Option<TemplateSource>,
    #[serde(default)]
    pub swap_options: bool,
    pub backend: BackendDescriptor,
    pub generation: GenerationParams,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub counter: CounterKind,
    #[serde(default)]
    pub unmapped_policy: UnmappedPolicy,
    /// Directory holding `any.toml` and `<language>.toml`; builtin rules when absent.
    #[serde(default)]
    pub rules: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_in_flight")]
    pub in_flight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub label_names: Option<LabelNames>,
}

fn default_budget() -> usize {
    DEFAULT_BUDGET
}

fn default_in_flight() -> usize {
    4
}

impl ExperimentConfig {
    pub fn new(
        corpus: impl Into<PathBuf>,
        split: Split,
        backend: BackendDescriptor,
        generation: GenerationParams,
        output_dir: impl Into<PathBuf>,
    ) -> Self {
        ExperimentConfig {
            corpus: corpus.into(),
            split,
            language: None,
            template: None,
            swap_options: false,
            backend,
            generation,
            budget: DEFAULT_BUDGET,
            counter: CounterKind::Approx,
            unmapped_policy: UnmappedPolicy::default(),
            rules: None,
            seed: 0,
            output_dir: output_dir.into(),
            cache_dir: None,
            in_flight: default_in_flight(),
            retry: RetryPolicy::default(),
            label_names: None,
        }
    }

    /// Reads a TOML config; relative paths resolve against the file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let source = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: ExperimentConfig = toml::from_str(&source).map_err(|e| Error::Parse {
            what: format!("config {}", path.display()),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            what: "config".into(),
            message: e.to_string(),
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.corpus);
        join(&mut self.output_dir);
        if let Some(p) = self.rules.as_mut() {
            join(p);
        }
        if let Some(p) = self.cache_dir.as_mut() {
            join(p);
        }
        if let Some(TemplateSource::File(p)) = self.template.as_mut() {
            join(p);
        }
        if let BackendDescriptor::Replay { cache_dir: Some(p) } = &mut self.backend {
            join(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.generation.validate()?;
        self.backend.validate()?;
        if self.in_flight == 0 {
            return Err(Error::invalid("config", "in_flight must be >= 1"));
        }
        if self.budget == 0 {
            return Err(Error::invalid("config", "budget must be >= 1"));
        }
        if !self.corpus.exists() {
            return Err(Error::invalid("config", format!("corpus {} does not exist", self.corpus.display())));
        }
        if let Some(rules) = &self.rules {
            if !rules.is_dir() {
                return Err(Error::invalid("config", format!("rule directory {} does not exist", rules.display())));
            }
        }
        if let Some(TemplateSource::File(p)) = &self.template {
            if !p.exists() {
                return Err(Error::invalid("config", format!("template {} does not exist", p.display())));
            }
        }
        if self.counter == CounterKind::Remote && !matches!(self.backend, BackendDescriptor::Http { .. }) {
            return Err(Error::invalid("config", "counter = remote requires an http backend"));
        }
        if let Some(names) = &self.label_names {
            names.validate()?;
        }
        Ok(())
    }

    pub fn cache_root(&self) -> PathBuf {
        match (&self.cache_dir, &self.backend) {
            (Some(dir), _) => dir.clone(),
            (None, BackendDescriptor::Replay { cache_dir: Some(dir) }) => dir.clone(),
            _ => self.output_dir.join("cache"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub doc_id: String,
    pub gold_label: Label,
    pub token_count: usize,
    pub truncated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsed: Option<ParsedLabel>,
    /// `None` when excluded by policy or when generation failed.
    pub final_label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub articles: Option<ArticleMentions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub article_overlap: Option<ArticleOverlap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PredictionRecord {
    pub fn is_complete(&self) -> bool {
        self.completion.is_some()
    }

    pub fn is_unmapped(&self) -> bool {
        self.parsed.as_ref().is_some_and(|p| p.outcome == Outcome::Unmapped)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleSummary {
    pub documents: usize,
    pub exact_matches: usize,
    pub any_overlap: usize,
    pub mean_jaccard: f64,
}

/// Per-run counters that vary between otherwise identical runs; never serialized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    pub backend_calls: usize,
    pub cache_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub fingerprint: String,
    pub model_id: String,
    pub split: Split,
    pub template_language: Language,
    pub options_swapped: bool,
    pub max_new_tokens: u32,
    pub budget: usize,
    pub unmapped_policy: UnmappedPolicy,
    pub label_names: LabelNames,
    pub complete: bool,
    /// Fraction of documents with a completion.
    pub coverage: f64,
    pub distribution: DistributionStats,
    pub confusion: Option<ConfusionMatrix>,
    pub metrics: Option<MetricsReport>,
    pub unmapped_rate: f64,
    pub truncation_rate: f64,
    pub baselines: Vec<ReportRow>,
    pub simulated_random: Option<MetricsReport>,
    pub articles: Option<ArticleSummary>,
    pub records: Vec<PredictionRecord>,
    #[serde(skip)]
    pub stats: RunStats,
}

impl ExperimentResult {
    pub fn model_row_name(&self) -> String {
        format!("{} (0-shot)", self.model_id)
    }

    /// Recomputes the scored metrics from the per-document records alone.
    pub fn recompute_metrics(records: &[PredictionRecord]) -> Option<(ConfusionMatrix, MetricsReport)> {
        let completed: Vec<&PredictionRecord> = records.iter().filter(|r| r.is_complete()).collect();
        let (gold, predicted): (Vec<Label>, Vec<Label>) = completed
            .iter()
            .filter_map(|r| r.final_label.map(|p| (r.gold_label, p)))
            .unzip();
        let cm = confusion(&gold, &predicted).ok()?;
        let mut metrics = compute_metrics(&cm);
        metrics.unmapped_rate = unmapped_rate(records);
        Some((cm, metrics))
    }
}

fn unmapped_rate(records: &[PredictionRecord]) -> f64 {
    let completed = records.iter().filter(|r| r.is_complete()).count();
    if completed == 0 {
        return 0.0;
    }
    records.iter().filter(|r| r.is_unmapped()).count() as f64 / completed as f64
}

pub fn resolve_template(config: &ExperimentConfig, docs: &[CaseDocument]) -> Result<PromptTemplate> {
    let template = match &config.template {
        Some(TemplateSource::File(path)) => PromptTemplate::from_file(path)?,
        Some(TemplateSource::Builtin(lang)) => builtin_template(*lang),
        None => {
            let lang = config
                .language
                .or_else(|| docs.first().map(|d| d.language))
                .unwrap_or(Language::En);
            builtin_template(lang)
        }
    };
    Ok(if config.swap_options {
        swap_options(&template)
    } else {
        template
    })
}

pub fn resolve_rules(config: &ExperimentConfig, language: Language) -> Result<RuleSet> {
    match &config.rules {
        Some(dir) => RuleSet::load_dir(dir, language),
        None => default_rules(language.code()),
    }
}

fn fingerprint(config: &ExperimentConfig, template: &PromptTemplate, rules: &RuleSet) -> String {
    // transport (backend kind, endpoint) and output locations do not affect results
    let identity = serde_json::json!({
        "corpus": config.corpus,
        "split": config.split,
        "language": config.language,
        "generation": config.generation,
        "budget": config.budget,
        "counter": config.counter,
        "unmapped_policy": config.unmapped_policy,
        "seed": config.seed,
        "template": template.fingerprint(),
        "rules": rules.fingerprint(),
    });
    hex::encode(Sha256::digest(identity.to_string().as_bytes()))
}

fn cache_namespace(template: &PromptTemplate, params: &GenerationParams) -> String {
    let digest = Sha256::digest(
        format!("{}\n{}\n{}", template.fingerprint(), params.model_id, params.max_new_tokens).as_bytes(),
    );
    hex::encode(&digest[..8])
}

pub fn cache_file(config: &ExperimentConfig, template: &PromptTemplate) -> PathBuf {
    config
        .cache_root()
        .join(format!("{}.jsonl", cache_namespace(template, &config.generation)))
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let backend = config.backend.build()?;
    run_experiment_with(config, backend)
}

/// Runs `config` against an already constructed backend.
pub fn run_experiment_with(config: &ExperimentConfig, backend: Arc<dyn Backend>) -> Result<ExperimentResult> {
    config.validate()?;
    let docs = load_corpus(&config.corpus, config.split, config.language)?;
    if docs.is_empty() {
        return Err(Error::Empty("no documents match the selected split and language"));
    }
    log::info!("{} {} documents from {}", docs.len(), config.split, config.corpus.display());
    let template = resolve_template(config, &docs)?;
    let rules = resolve_rules(config, template.language)?;
    let counter: Box<dyn TokenCounter> = match (&config.counter, &config.backend) {
        (CounterKind::Remote, BackendDescriptor::Http { endpoint, timeout_secs }) => Box::new(RemoteCounter::new(
            Arc::new(HttpBackend::new(endpoint, Duration::from_secs(*timeout_secs))?),
            config.generation.model_id.clone(),
        )),
        _ => Box::new(ApproxCounter),
    };

    let prompts = docs
        .iter()
        .map(|doc| render(&template, doc, counter.as_ref(), config.budget))
        .collect::<Result<Vec<_>>>()?;

    let cache = CompletionCache::open(cache_file(config, &template))?;
    log::info!("cache {} holds {} completions", cache_file(config, &template).display(), cache.len());
    let calls_before = backend.calls();
    let completions = generate_all(backend.as_ref(), &prompts, config, &cache)?;
    let stats = RunStats {
        backend_calls: backend.calls() - calls_before,
        cache_hits: completions
            .iter()
            .filter(|c| matches!(c, Ok(c) if c.from_cache))
            .count(),
    };

    let dist = distribution(&docs)?;
    let records: Vec<PredictionRecord> = docs
        .iter()
        .zip(&prompts)
        .zip(completions)
        .map(|((doc, prompt), completion)| {
            build_record(doc, prompt, completion, &template, &rules, config.unmapped_policy, dist.majority_label)
        })
        .collect();

    let result = assemble_result(config, &template, &rules, dist, records, stats)?;
    write_outputs(&config.output_dir, &result)?;
    log::info!(
        "{} backend calls, {} cache hits, coverage {:.3}",
        stats.backend_calls,
        stats.cache_hits,
        result.coverage
    );
    Ok(result)
}

/// Bounded-parallel generation; results stay aligned with `prompts` by index.
fn generate_all(
    backend: &dyn Backend,
    prompts: &[RenderedPrompt],
    config: &ExperimentConfig,
    cache: &CompletionCache,
) -> Result<Vec<std::result::Result<Completion, String>>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<std::result::Result<Completion, String>>>> =
        Mutex::new((0..prompts.len()).map(|_| None).collect());
    let fatal: Mutex<Option<Error>> = Mutex::new(None);
    let workers = config.in_flight.min(prompts.len()).max(1);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if fatal.lock().unwrap().is_some() {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(prompt) = prompts.get(i) else { break };
                let outcome = match generate(backend, prompt, &config.generation, cache, &config.retry) {
                    Ok(c) => Ok(c),
                    Err(Error::Backend(e)) => {
                        log::warn!("document {}: {e}", prompt.doc_id);
                        Err(e.to_string())
                    }
                    Err(other) => {
                        *fatal.lock().unwrap() = Some(other);
                        break;
                    }
                };
                slots.lock().unwrap()[i] = Some(outcome);
            });
        }
    });

    if let Some(err) = fatal.into_inner().unwrap() {
        return Err(err);
    }
    Ok(slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("every index is claimed by exactly one worker"))
        .collect())
}

fn build_record(
    doc: &CaseDocument,
    prompt: &RenderedPrompt,
    completion: std::result::Result<Completion, String>,
    template: &PromptTemplate,
    rules: &RuleSet,
    policy: UnmappedPolicy,
    majority: Label,
) -> PredictionRecord {
    let mut record = PredictionRecord {
        doc_id: doc.id.clone(),
        gold_label: doc.gold_label,
        token_count: prompt.token_count,
        truncated: prompt.truncated,
        prompt_key: None,
        completion: None,
        parsed: None,
        final_label: None,
        articles: None,
        article_overlap: None,
        error: None,
    };
    let completion = match completion {
        Ok(c) => c,
        Err(message) => {
            record.error = Some(message);
            return record;
        }
    };
    let mut parsed = parse_completion(&completion.text, template, rules);
    record.final_label = match (parsed.outcome.label(), policy) {
        (Some(label), _) => Some(label),
        (None, UnmappedPolicy::CoerceToMajority) => {
            parsed.coerced = true;
            Some(majority)
        }
        (None, UnmappedPolicy::CoerceToNegative) => {
            parsed.coerced = true;
            Some(Label::Negative)
        }
        (None, UnmappedPolicy::ExcludeAndReport) => None,
    };
    if let Some(gold) = &doc.gold_articles {
        let mentions = extract_articles(&completion.text);
        record.article_overlap = Some(article_overlap(&mentions, gold));
        record.articles = Some(mentions);
    }
    record.prompt_key = Some(completion.prompt_key);
    record.completion = Some(completion.text);
    record.parsed = Some(parsed);
    record
}

fn assemble_result(
    config: &ExperimentConfig,
    template: &PromptTemplate,
    rules: &RuleSet,
    dist: DistributionStats,
    records: Vec<PredictionRecord>,
    stats: RunStats,
) -> Result<ExperimentResult> {
    let n = records.len();
    let completed = records.iter().filter(|r| r.is_complete()).count();
    let (confusion, metrics) = match ExperimentResult::recompute_metrics(&records) {
        Some((cm, m)) => (Some(cm), Some(m)),
        None => (None, None),
    };

    let baselines = baseline_rows(&dist)?;

    let scored_gold: Vec<Label> = records
        .iter()
        .filter(|r| r.is_complete() && r.final_label.is_some())
        .map(|r| r.gold_label)
        .collect();
    let simulated_random = if scored_gold.is_empty() {
        None
    } else {
        let predicted = simulate_random_baseline(&scored_gold, config.seed);
        Some(compute_metrics(&crate::metrics::confusion(&scored_gold, &predicted)?))
    };

    let label_names = config.label_names.clone().unwrap_or_else(|| {
        if template.language == Language::En {
            LabelNames::echr()
        } else {
            LabelNames::fscs()
        }
    });

    Ok(ExperimentResult {
        fingerprint: fingerprint(config, template, rules),
        model_id: config.generation.model_id.clone(),
        split: config.split,
        template_language: template.language,
        options_swapped: template.options_swapped,
        max_new_tokens: config.generation.max_new_tokens,
        budget: config.budget,
        unmapped_policy: config.unmapped_policy,
        label_names,
        complete: completed == n,
        coverage: completed as f64 / n as f64,
        distribution: dist,
        confusion,
        metrics,
        unmapped_rate: unmapped_rate(&records),
        truncation_rate: records.iter().filter(|r| r.truncated).count() as f64 / n as f64,
        baselines,
        simulated_random,
        articles: summarize_articles(&records),
        records,
        stats,
    })
}

/// Only emitted when every completed document carries gold articles.
fn summarize_articles(records: &[PredictionRecord]) -> Option<ArticleSummary> {
    let overlaps: Vec<&ArticleOverlap> = records
        .iter()
        .filter(|r| r.is_complete())
        .map(|r| r.article_overlap.as_ref())
        .collect::<Option<_>>()?;
    if overlaps.is_empty() {
        return None;
    }
    Some(ArticleSummary {
        documents: overlaps.len(),
        exact_matches: overlaps.iter().filter(|o| o.exact_match).count(),
        any_overlap: overlaps.iter().filter(|o| o.intersection > 0).count(),
        mean_jaccard: overlaps.iter().map(|o| o.jaccard).sum::<f64>() / overlaps.len() as f64,
    })
}

pub fn write_outputs(dir: &Path, result: &ExperimentResult) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, contents: &[u8]| {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))
    };
    let mut json = serde_json::to_vec_pretty(result)?;
    json.push(b'\n');
    write("result.json", &json)?;

    let mut lines = Vec::new();
    for record in &result.records {
        serde_json::to_writer(&mut lines, record)?;
        lines.push(b'\n');
    }
    write("records.jsonl", &lines)?;
    write("report.txt", emit_report(result, ReportFormat::Table)?.as_bytes())?;
    write("report.csv", emit_report(result, ReportFormat::Csv)?.as_bytes())?;
    Ok(())
}

pub fn load_result(path: impl AsRef<Path>) -> Result<ExperimentResult> {
    let path = path.as_ref();
    let path = if path.is_dir() { path.join("result.json") } else { path.to_path_buf() };
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapComparison {
    pub original: ExperimentResult,
    pub swapped: ExperimentResult,
    pub f1_macro_original: Option<f64>,
    pub f1_macro_swapped: Option<f64>,
    pub f1_macro_abs_difference: Option<f64>,
    pub accuracy_abs_difference: Option<f64>,
}

/// Runs `config` as given and with the answer options exchanged.
///
/// Sub-runs write to `<output_dir>/original` and `<output_dir>/swapped` and share
/// `<output_dir>/cache`, where each template gets its own namespace.
pub fn option_swap_experiment(config: &ExperimentConfig) -> Result<SwapComparison> {
    config.validate()?;
    let backend = config.backend.build()?;
    option_swap_experiment_with(config, backend)
}

pub fn option_swap_experiment_with(config: &ExperimentConfig, backend: Arc<dyn Backend>) -> Result<SwapComparison> {
    let sub = |name: &str, swap: bool| ExperimentConfig {
        output_dir: config.output_dir.join(name),
        cache_dir: Some(config.cache_root()),
        swap_options: config.swap_options ^ swap,
        ..config.clone()
    };
    let original = run_experiment_with(&sub("original", false), backend.clone())?;
    let swapped = run_experiment_with(&sub("swapped", true), backend)?;

    let f1 = |r: &ExperimentResult| r.metrics.map(|m| m.f1_macro);
    let acc = |r: &ExperimentResult| r.metrics.map(|m| m.accuracy);
    let diff = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| (a - b).abs());
    let comparison = SwapComparison {
        f1_macro_original: f1(&original),
        f1_macro_swapped: f1(&swapped),
        f1_macro_abs_difference: diff(f1(&original), f1(&swapped)),
        accuracy_abs_difference: diff(acc(&original), acc(&swapped)),
        original,
        swapped,
    };
    let summary = crate::report::swap_summary(&comparison);
    fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
    let path = config.output_dir.join("swap_report.txt");
    fs::write(&path, summary).map_err(|e| Error::io(&path, e))?;
    Ok(comparison)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub max_new_tokens: u32,
    pub complete: bool,
    pub unmapped_rate: f64,
    pub metrics: Option<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// The split the selection was made on.
    pub split: Split,
    pub rows: Vec<SweepRow>,
    /// Length with the highest macro-F1; the shortest wins ties.
    pub best: Option<u32>,
}

/// One run per output length, each in `<output_dir>/len-<n>` with a shared cache.
pub fn sweep_output_length(config: &ExperimentConfig, lengths: &[u32]) -> Result<SweepResult> {
    config.validate()?;
    let backend = config.backend.build()?;
    sweep_output_length_with(config, lengths, backend)
}

pub fn sweep_output_length_with(
    config: &ExperimentConfig,
    lengths: &[u32],
    backend: Arc<dyn Backend>,
) -> Result<SweepResult> {
    if lengths.is_empty() {
        return Err(Error::Empty("sweep needs at least one output length"));
    }
    if lengths.contains(&0) {
        return Err(Error::invalid("sweep", "output lengths must be >= 1"));
    }
    let mut rows = Vec::with_capacity(lengths.len());
    for &length in lengths {
        let sub = ExperimentConfig {
            output_dir: config.output_dir.join(format!("len-{length}")),
            cache_dir: Some(config.cache_root()),
            generation: GenerationParams {
                max_new_tokens: length,
                ..config.generation.clone()
            },
            ..config.clone()
        };
        let result = run_experiment_with(&sub, backend.clone())?;
        rows.push(SweepRow {
            max_new_tokens: length,
            complete: result.complete,
            unmapped_rate: result.unmapped_rate,
            metrics: result.metrics,
        });
    }
    let mut best: Option<(u32, f64)> = None;
    let mut ordered: Vec<&SweepRow> = rows.iter().collect();
    ordered.sort_by_key(|r| r.max_new_tokens);
    for row in ordered {
        if let Some(m) = row.metrics {
            if best.is_none_or(|(_, f)| m.f1_macro > f) {
                best = Some((row.max_new_tokens, m.f1_macro));
            }
        }
    }
    let sweep = SweepResult {
        split: config.split,
        rows,
        best: best.map(|(l, _)| l),
    };
    fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
    let path = config.output_dir.join("sweep_report.txt");
    fs::write(&path, crate::report::sweep_table(&sweep)).map_err(|e| Error::io(&path, e))?;
    Ok(sweep)
}
