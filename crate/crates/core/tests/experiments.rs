use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use ljp_core::backend::{
    Backend, BackendDescriptor, BackendError, BackendOutput, GenerationParams, GenerationRequest, MockBackend,
    ReplayBackend, RetryPolicy,
};
use ljp_core::corpus::{write_corpus, CaseDocument};
use ljp_core::metrics::ConfusionMatrix;
use ljp_core::report::{emit_report, parse_csv_report, parse_json_report, ReportFormat};
use ljp_core::runner::{
    load_result, option_swap_experiment_with, run_experiment_with, sweep_output_length_with, ExperimentConfig,
    ExperimentResult, UnmappedPolicy,
};
use ljp_core::{Label, Language, Outcome, Split};

fn doc(id: &str, label: Label, text: &str) -> CaseDocument {
    CaseDocument {
        id: id.into(),
        language: Language::En,
        text: text.into(),
        gold_label: label,
        gold_articles: None,
        split: Split::Test,
    }
}

/// d1..d4 with gold P, N, P, N.
fn four_docs() -> Vec<CaseDocument> {
    vec![
        doc("d1", Label::Positive, "The applicant was detained for six years without review."),
        doc("d2", Label::Negative, "The applicant complained about the length of civil proceedings."),
        doc("d3", Label::Positive, "The applicant alleged ill-treatment in police custody."),
        doc("d4", Label::Negative, "The applicant challenged a tax assessment."),
    ]
}

fn four_answers() -> BTreeMap<String, String> {
    [
        ("d1", "A, Yes"),
        ("d2", "B, No"),
        ("d3", "There were no violations."),
        ("d4", "The case raises questions"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

fn config(dir: &Path, docs: &[CaseDocument], name: &str) -> ExperimentConfig {
    let corpus = dir.join(format!("{name}.jsonl"));
    write_corpus(&corpus, docs).unwrap();
    let mut config = ExperimentConfig::new(
        corpus,
        Split::Test,
        BackendDescriptor::Mock { script: four_answers(), default: None },
        GenerationParams::new("test-model"),
        dir.join(format!("{name}-out")),
    );
    config.retry = RetryPolicy { max_retries: 2, base_delay_ms: 1 };
    config
}

fn mock(script: BTreeMap<String, String>) -> Arc<MockBackend> {
    Arc::new(MockBackend::new(script, None))
}

#[test]
fn fixture_experiment_matches_hand_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), &four_docs(), "c");
    cfg.unmapped_policy = UnmappedPolicy::CoerceToNegative;
    let result = run_experiment_with(&cfg, mock(four_answers())).unwrap();

    // d1 letter A -> P (tp), d2 letter B -> N (tn), d3 phrase -> N (fn), d4 unmapped -> N (tn)
    assert_eq!(result.confusion, Some(ConfusionMatrix { tp: 1, fp: 0, fn_: 1, tn: 2 }));
    let rules: Vec<&str> = result.records.iter().map(|r| r.parsed.as_ref().unwrap().rule_id.as_str()).collect();
    assert_eq!(rules, ["letter", "letter", "en.no_violation", "none"]);
    assert!(result.records[3].parsed.as_ref().unwrap().coerced);

    let m = result.metrics.unwrap();
    // class P: precision 1, recall 1/2, F1 2/3; class N: precision 2/3, recall 1, F1 4/5
    assert!((m.precision_macro - 5.0 / 6.0).abs() < 1e-12);
    assert!((m.recall_macro - 0.75).abs() < 1e-12);
    assert!((m.f1_macro - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
    assert!((m.f1_weighted - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
    assert_eq!(m.accuracy, 0.75);
    assert_eq!(m.f1_micro, 0.75);
    assert_eq!(result.unmapped_rate, 0.25);
    assert!(result.complete);
    assert_eq!(result.coverage, 1.0);

    for name in ["result.json", "records.jsonl", "report.txt", "report.csv"] {
        assert!(cfg.output_dir.join(name).exists(), "{name}");
    }
    // run counters are not persisted
    let stored = ExperimentResult { stats: result.stats, ..load_result(&cfg.output_dir).unwrap() };
    assert_eq!(stored, result);
}

#[test]
fn policies_account_for_unmapped() {
    let dir = tempfile::tempdir().unwrap();
    let run = |policy, name| {
        let mut cfg = config(dir.path(), &four_docs(), name);
        cfg.unmapped_policy = policy;
        run_experiment_with(&cfg, mock(four_answers())).unwrap()
    };

    let excluded = run(UnmappedPolicy::ExcludeAndReport, "ex");
    assert_eq!(excluded.confusion, Some(ConfusionMatrix { tp: 1, fp: 0, fn_: 1, tn: 1 }));
    assert_eq!(excluded.unmapped_rate, 0.25);
    assert_eq!(excluded.records[3].final_label, None);
    assert!(!excluded.records[3].parsed.as_ref().unwrap().coerced);
    // exclusion is not incompleteness
    assert!(excluded.complete);

    // two of each class: the tie resolves the majority to positive
    let majority = run(UnmappedPolicy::CoerceToMajority, "maj");
    assert!(majority.distribution.tie);
    assert_eq!(majority.confusion, Some(ConfusionMatrix { tp: 1, fp: 1, fn_: 1, tn: 1 }));
    assert_eq!(majority.records[3].final_label, Some(Label::Positive));

    for r in [&excluded, &majority] {
        let unmapped = r.records.iter().filter(|r| r.is_unmapped()).count();
        let scored = r.confusion.unwrap().total() as usize;
        let excluded = r.records.iter().filter(|r| r.final_label.is_none()).count();
        assert_eq!(unmapped, 1);
        assert_eq!(scored + excluded, r.records.len());
    }
}

#[test]
fn replay_is_byte_identical_with_no_calls() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &four_docs(), "r");
    let backend = mock(four_answers());
    let first = run_experiment_with(&cfg, backend.clone()).unwrap();
    assert_eq!(first.stats.backend_calls, 4);
    assert_eq!(backend.calls(), 4);

    // same backend again: everything comes from the cache
    let again = run_experiment_with(&cfg, backend.clone()).unwrap();
    assert_eq!(again.stats.backend_calls, 0);
    assert_eq!(again.stats.cache_hits, 4);
    assert_eq!(backend.calls(), 4);

    // a cache-only backend writing elsewhere
    let replay_cfg = ExperimentConfig {
        backend: BackendDescriptor::Replay { cache_dir: Some(cfg.cache_root()) },
        output_dir: dir.path().join("replayed"),
        ..cfg.clone()
    };
    let replayed = run_experiment_with(&replay_cfg, Arc::new(ReplayBackend)).unwrap();
    assert_eq!(replayed.stats.backend_calls, 0);
    assert!(replayed.complete);
    let a = fs::read(cfg.output_dir.join("result.json")).unwrap();
    let b = fs::read(replay_cfg.output_dir.join("result.json")).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        fs::read(cfg.output_dir.join("records.jsonl")).unwrap(),
        fs::read(replay_cfg.output_dir.join("records.jsonl")).unwrap()
    );
}

#[test]
fn replay_miss_yields_partial_result() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        backend: BackendDescriptor::Replay { cache_dir: None },
        ..config(dir.path(), &four_docs(), "miss")
    };
    let result = run_experiment_with(&cfg, Arc::new(ReplayBackend)).unwrap();
    assert!(!result.complete);
    assert_eq!(result.coverage, 0.0);
    assert_eq!(result.metrics, None);
    assert!(result.records.iter().all(|r| r.error.as_deref().unwrap().contains("not in the cache")));
}

type Comparable = (Option<ConfusionMatrix>, Option<[f64; 6]>, f64, Vec<(String, Option<Label>)>);

fn comparable(r: &ExperimentResult) -> Comparable {
    let mut labels: Vec<(String, Option<Label>)> =
        r.records.iter().map(|r| (r.doc_id.clone(), r.final_label)).collect();
    labels.sort();
    (r.confusion, r.metrics.map(|m| m.columns()), r.unmapped_rate, labels)
}

#[test]
fn document_order_and_concurrency_do_not_matter() {
    let dir = tempfile::tempdir().unwrap();
    let mut docs = four_docs();
    let base = run_experiment_with(&config(dir.path(), &docs, "a"), mock(four_answers())).unwrap();

    docs.reverse();
    docs.swap(0, 2);
    let mut shuffled_cfg = config(dir.path(), &docs, "b");
    shuffled_cfg.in_flight = 1;
    let shuffled = run_experiment_with(&shuffled_cfg, mock(four_answers())).unwrap();
    assert_eq!(comparable(&base), comparable(&shuffled));
    assert_eq!(base.baselines, shuffled.baselines);

    let mut wide = config(dir.path(), &four_docs(), "c");
    wide.in_flight = 16;
    let wide = run_experiment_with(&wide, mock(four_answers())).unwrap();
    assert_eq!(comparable(&base), comparable(&wide));
    assert_eq!(base.records, wide.records);
}

/// Fails permanently for one document and transiently once for another.
struct Unreliable {
    inner: MockBackend,
    seen: std::sync::Mutex<Vec<String>>,
}

impl Backend for Unreliable {
    fn name(&self) -> &str {
        "unreliable"
    }

    fn complete(&self, request: &GenerationRequest<'_>) -> Result<BackendOutput, BackendError> {
        let mut seen = self.seen.lock().unwrap();
        let first_time = !seen.iter().any(|d| d == request.doc_id);
        seen.push(request.doc_id.to_string());
        drop(seen);
        match request.doc_id {
            "d2" => Err(BackendError::Transient { message: "503".into() }),
            "d3" if first_time => Err(BackendError::Transient { message: "timeout".into() }),
            _ => self.inner.complete(request),
        }
    }

    fn calls(&self) -> usize {
        self.seen.lock().unwrap().len()
    }
}

#[test]
fn exhausted_retries_give_partial_result_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &four_docs(), "p");
    let backend = Arc::new(Unreliable { inner: MockBackend::new(four_answers(), None), seen: Default::default() });
    let result = run_experiment_with(&cfg, backend.clone()).unwrap();

    assert!(!result.complete);
    assert_eq!(result.coverage, 0.75);
    let failed = &result.records[1];
    assert_eq!(failed.doc_id, "d2");
    assert!(failed.error.as_deref().unwrap().contains("after 3 attempts"));
    // d3 succeeded on retry
    assert!(result.records[2].is_complete());
    assert_eq!(result.confusion.unwrap().total(), 3);

    let table = emit_report(&result, ReportFormat::Table).unwrap();
    assert!(table.starts_with("INCOMPLETE: 3/4 documents have completions (coverage 0.750)"));
    let csv = emit_report(&result, ReportFormat::Csv).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.starts_with("INCOMPLETE,")));
    let json: serde_json::Value = serde_json::from_str(&emit_report(&result, ReportFormat::Json).unwrap()).unwrap();
    assert_eq!(json["status"], "INCOMPLETE");
    assert_eq!(json["coverage"], 0.75);

    // resuming with a healthy backend only asks for the missing document
    let healthy = mock(four_answers());
    let resumed = run_experiment_with(&cfg, healthy.clone()).unwrap();
    assert!(resumed.complete);
    assert_eq!(healthy.calls(), 1);
}

#[test]
fn reports_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let result = run_experiment_with(&config(dir.path(), &four_docs(), "rt"), mock(four_answers())).unwrap();
    let mut rows = result.baselines.clone();
    rows.push(ljp_core::report::ReportRow { name: result.model_row_name(), metrics: result.metrics.unwrap() });

    let csv = emit_report(&result, ReportFormat::Csv).unwrap();
    assert_eq!(parse_csv_report(&csv).unwrap(), rows);
    let json = emit_report(&result, ReportFormat::Json).unwrap();
    assert_eq!(parse_json_report(&json).unwrap(), rows);

    let table = emit_report(&result, ReportFormat::Table).unwrap();
    assert!(!table.contains("INCOMPLETE"));
    assert!(table.contains("test-model (0-shot)"));
    assert!(table.contains("majority class"));
}

#[test]
fn swap_experiment_exposes_position_bias() {
    let dir = tempfile::tempdir().unwrap();
    let docs = vec![
        doc("p1", Label::Positive, "one"),
        doc("p2", Label::Positive, "two"),
        doc("p3", Label::Positive, "three"),
        doc("n1", Label::Negative, "four"),
    ];
    let always_a = Arc::new(MockBackend::new(BTreeMap::new(), Some("A".into())));
    let cmp = option_swap_experiment_with(&config(dir.path(), &docs, "s"), always_a).unwrap();
    let p = 0.75f64;
    assert!((cmp.accuracy_abs_difference.unwrap() - (2.0 * p - 1.0).abs()).abs() < 1e-12);
    assert!(cmp.original.records.iter().all(|r| r.final_label == Some(Label::Positive)));
    assert!(cmp.swapped.records.iter().all(|r| r.final_label == Some(Label::Negative)));
    assert!(cmp.swapped.options_swapped);
    assert!(dir.path().join("s-out/swap_report.txt").exists());

    // answers naming the option text are position independent
    let by_text: BTreeMap<String, String> = [("p1", "Yes"), ("p2", "No"), ("p3", "Yes."), ("n1", "no, none")]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let cmp = option_swap_experiment_with(&config(dir.path(), &docs, "t"), mock(by_text)).unwrap();
    let labels = |r: &ExperimentResult| r.records.iter().map(|r| r.final_label).collect::<Vec<_>>();
    assert_eq!(labels(&cmp.original), labels(&cmp.swapped));
    assert_eq!(cmp.f1_macro_abs_difference, Some(0.0));
}

#[test]
fn sweep_over_output_length() {
    let dir = tempfile::tempdir().unwrap();
    let letters = Arc::new(MockBackend::new(BTreeMap::new(), Some("B, No there was no violation".into())));
    let sweep = sweep_output_length_with(&config(dir.path(), &four_docs(), "w"), &[1, 50], letters).unwrap();
    assert_eq!(sweep.rows.len(), 2);
    assert_eq!(sweep.rows[0].metrics, sweep.rows[1].metrics);
    assert_eq!(sweep.best, Some(1));
    assert_eq!(sweep.split, Split::Test);

    let prose = Arc::new(MockBackend::new(BTreeMap::new(), Some("There were no violations.".into())));
    let mut cfg = config(dir.path(), &four_docs(), "v");
    cfg.unmapped_policy = UnmappedPolicy::ExcludeAndReport;
    let sweep = sweep_output_length_with(&cfg, &[1, 50], prose).unwrap();
    assert_eq!(sweep.rows[0].unmapped_rate, 1.0);
    assert_eq!(sweep.rows[0].metrics, None);
    assert_eq!(sweep.rows[1].unmapped_rate, 0.0);
    assert_eq!(sweep.best, Some(50));
    let long = load_result(dir.path().join("v-out/len-50")).unwrap();
    assert!(long.records.iter().all(|r| r.parsed.as_ref().unwrap().outcome == Outcome::Negative));
    assert!(dir.path().join("v-out/sweep_report.txt").exists());
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &four_docs(), "cfg");
    let path = dir.path().join("experiment.toml");
    fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    assert_eq!(ExperimentConfig::from_file(&path).unwrap(), cfg);

    fs::write(&path, "corpus = 'x.jsonl'\nsplit = 'test'\nbogus = 1\n").unwrap();
    assert!(ExperimentConfig::from_file(&path).is_err());
}

#[test]
fn gold_articles_are_scored() {
    let dir = tempfile::tempdir().unwrap();
    let mut docs = four_docs();
    docs[0].gold_articles = Some([3, 5].into_iter().collect());
    docs[1].gold_articles = Some(Default::default());
    docs[2].gold_articles = Some([6].into_iter().collect());
    docs[3].gold_articles = Some(Default::default());
    let script: BTreeMap<String, String> = [
        ("d1", "A, Yes. Articles 3 and 5 were violated."),
        ("d2", "B, No"),
        ("d3", "A. Article 6 §1 and Article 8."),
        ("d4", "B"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    let result = run_experiment_with(&config(dir.path(), &docs, "art"), mock(script)).unwrap();
    let summary = result.articles.unwrap();
    assert_eq!(summary.documents, 4);
    assert_eq!(summary.exact_matches, 3);
    assert_eq!(summary.any_overlap, 2);
    assert!((summary.mean_jaccard - (1.0 + 1.0 + 0.5 + 1.0) / 4.0).abs() < 1e-12);
}
