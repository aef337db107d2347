use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context as _, Result};
use ljp_core::backend::{generate, Backend, BackendDescriptor, CompletionCache, GenerationParams, HttpBackend, MockBackend, RetryPolicy};
use ljp_core::corpus::{distribution, load_corpus, CaseDocument};
use ljp_core::metrics::format_rounded;
use ljp_core::parser::{default_rules, parse_completion, ParsedLabel};
use ljp_core::report::{baseline_rows, emit_report, render_rows, swap_summary, sweep_table, ReportFormat};
use ljp_core::runner::{self, ExperimentConfig};
use ljp_core::template::{builtin_template, render as render_prompt, render_document_only, swap_options, ApproxCounter, PromptTemplate};
use ljp_core::{Error, Language, Split};

use crate::args::*;

pub enum Status {
    Done,
    Partial,
}

impl From<Status> for ExitCode {
    fn from(status: Status) -> ExitCode {
        match status {
            Status::Done => ExitCode::SUCCESS,
            Status::Partial => ExitCode::from(2),
        }
    }
}

fn complete(done: bool) -> Status {
    if done {
        Status::Done
    } else {
        Status::Partial
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli.config.as_ref().ok_or_else(|| anyhow!("this command needs --config <file>"))?;
    let mut config = ExperimentConfig::from_file(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let (Ok(url), BackendDescriptor::Http { endpoint, .. }) = (std::env::var("LJP_ENDPOINT"), &mut config.backend) {
        log::info!("endpoint {endpoint} overridden by LJP_ENDPOINT={url}");
        *endpoint = url;
    }
    Ok(config)
}

fn find_doc(corpus: &std::path::Path, id: &str, split: Option<Split>) -> Result<CaseDocument> {
    let splits = match split {
        Some(s) => vec![s],
        None => vec![Split::Train, Split::Validation, Split::Test],
    };
    for split in splits {
        if let Some(doc) = load_corpus(corpus, split, None)?.into_iter().find(|d| d.id == id) {
            return Ok(doc);
        }
    }
    bail!("document `{id}` not found in {}", corpus.display())
}

pub fn ingest(args: &IngestArgs) -> Result<Status> {
    let splits = match args.split {
        Some(s) => vec![s],
        None => vec![Split::Train, Split::Validation, Split::Test],
    };
    println!("{:<10}  {:>7}  {:>8}  {:>8}  {:>10}", "split", "n", "positive", "negative", "p_majority");
    for split in splits {
        let docs = load_corpus(&args.corpus, split, args.language)?;
        if docs.is_empty() {
            println!("{:<10}  {:>7}  {:>8}  {:>8}  {:>10}", split.as_str(), 0, 0, 0, "n/a");
            continue;
        }
        let stats = distribution(&docs)?;
        println!(
            "{:<10}  {:>7}  {:>8}  {:>8}  {:>10}",
            split.as_str(),
            stats.n,
            stats.positive,
            stats.negative,
            format_rounded(stats.p_majority, 3)
        );
        if stats.tie {
            log::warn!("{split}: classes are tied; positive is treated as the majority");
        }
    }
    Ok(Status::Done)
}

pub fn render(args: &RenderArgs) -> Result<Status> {
    let doc = find_doc(&args.corpus, &args.doc, args.split)?;
    let mut template = match &args.template {
        Some(path) => PromptTemplate::from_file(path)?,
        None => builtin_template(args.language.unwrap_or(doc.language)),
    };
    if args.swap {
        template = swap_options(&template);
    }
    let prompt = render_prompt(&template, &doc, &ApproxCounter, args.budget)?;
    print!("{}", prompt.text);
    eprintln!();
    eprintln!(
        "doc_id={} language={} token_count={} budget={} truncated={} counter=approx",
        prompt.doc_id, prompt.template_language, prompt.token_count, args.budget, prompt.truncated
    );
    Ok(Status::Done)
}

pub fn run(cli: &Cli, args: &RunArgs) -> Result<Status> {
    let config = load_config(cli)?;
    let result = runner::run_experiment(&config)?;
    print!("{}", emit_report(&result, args.format)?);
    eprintln!(
        "wrote {} ({} backend calls, {} cache hits)",
        config.output_dir.display(),
        result.stats.backend_calls,
        result.stats.cache_hits
    );
    Ok(complete(result.complete))
}

pub fn baselines(args: &BaselinesArgs) -> Result<Status> {
    let docs = load_corpus(&args.corpus, args.split, args.language)?;
    let stats = distribution(&docs).with_context(|| format!("no {} documents", args.split))?;
    if args.format == ReportFormat::Table {
        println!(
            "split: {}  n: {}  positive: {}  negative: {}  p_majority: {}",
            args.split,
            stats.n,
            stats.positive,
            stats.negative,
            format_rounded(stats.p_majority, 3)
        );
    }
    print!("{}", render_rows(&baseline_rows(&stats)?, args.format)?);
    Ok(Status::Done)
}

pub fn sweep(cli: &Cli, args: &SweepArgs) -> Result<Status> {
    let config = load_config(cli)?;
    let result = runner::sweep_output_length(&config, &args.lengths)?;
    print!("{}", sweep_table(&result));
    Ok(complete(result.rows.iter().all(|r| r.complete)))
}

pub fn swap(cli: &Cli, _args: &SwapArgs) -> Result<Status> {
    let config = load_config(cli)?;
    let cmp = runner::option_swap_experiment(&config)?;
    print!("{}", swap_summary(&cmp));
    println!();
    println!("original:");
    print!("{}", emit_report(&cmp.original, ReportFormat::Table)?);
    println!();
    println!("swapped:");
    print!("{}", emit_report(&cmp.swapped, ReportFormat::Table)?);
    Ok(complete(cmp.original.complete && cmp.swapped.complete))
}

pub fn report(args: &ReportArgs) -> Result<Status> {
    let result = runner::load_result(&args.result)?;
    print!("{}", emit_report(&result, args.format)?);
    Ok(complete(result.complete))
}

fn try_template(args: &TryArgs, language: Language) -> Result<PromptTemplate> {
    let mut template = builtin_template(language);
    if let Some(q) = &args.question {
        template.question_text = q.clone();
    }
    if let Some(options) = &args.options {
        let (pos, neg) = options
            .split_once(',')
            .ok_or_else(|| anyhow!("--options expects \"positive,negative\", got {options:?}"))?;
        template.option_positive = pos.trim().to_string();
        template.option_negative = neg.trim().to_string();
    }
    template.validate()?;
    Ok(template)
}

pub fn try_prompt(args: &TryArgs) -> Result<Status> {
    let doc = find_doc(&args.corpus, &args.doc, args.split)?;
    let language = args.language.unwrap_or(doc.language);
    let template = try_template(args, language)?;
    let prompt = if args.no_question {
        render_document_only(&doc, &ApproxCounter, args.budget)?
    } else {
        render_prompt(&template, &doc, &ApproxCounter, args.budget)?
    };

    let backend: Arc<dyn Backend> = match (&args.mock, &args.backend) {
        (Some(text), _) => Arc::new(MockBackend::new(Default::default(), Some(text.clone()))),
        (None, Some(endpoint)) => {
            BackendDescriptor::Http { endpoint: endpoint.clone(), timeout_secs: args.timeout_secs }.validate()?;
            Arc::new(HttpBackend::new(endpoint, Duration::from_secs(args.timeout_secs))?)
        }
        (None, None) => bail!("give --backend <url> (or set LJP_ENDPOINT) or --mock <text>"),
    };
    let params = GenerationParams {
        max_new_tokens: args.max_new_tokens,
        ..GenerationParams::new(args.model.clone())
    };
    let completion = match generate(backend.as_ref(), &prompt, &params, &CompletionCache::in_memory(), &RetryPolicy::default()) {
        Ok(c) => c,
        Err(err @ Error::Backend(_)) => {
            return Err(anyhow!(err).context("generation failed; check that the server is up and retry"))
        }
        Err(err) => return Err(err.into()),
    };

    let parsed = if args.no_question {
        ParsedLabel::unmapped()
    } else {
        parse_completion(&completion.text, &template, &default_rules(language.code())?)
    };
    let kind = default_rules(language.code())?
        .rules()
        .iter()
        .find(|r| r.rule_id == parsed.rule_id)
        .and_then(|r| serde_json::to_value(r.kind).ok())
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_else(|| "none".into());

    println!("=== prompt ({} tokens, truncated={}) ===", prompt.token_count, prompt.truncated);
    println!("{}", prompt.text);
    println!("=== completion ===");
    println!("{}", completion.text);
    println!("=== parsed ===");
    println!("outcome: {}", parsed.outcome);
    println!("rule: {} ({kind})", parsed.rule_id);
    match parsed.matched_span {
        Some((s, e)) => println!("span: {s}..{e} {:?}", &completion.text[s..e]),
        None => println!("span: none"),
    }
    if args.no_question {
        println!("note: document-only prompt, completion left unparsed");
    }
    Ok(Status::Done)
}
