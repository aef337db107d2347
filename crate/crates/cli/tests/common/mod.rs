#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use ljp_core::corpus::{write_corpus, CaseDocument};
use ljp_core::{Label, Language, Split};
use serde_json::{json, Value};

pub fn ljp() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ljp"));
    cmd.env_remove("LJP_ENDPOINT").env_remove("RUST_LOG");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    ljp().args(args).output().expect("ljp binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

pub fn doc(id: &str, language: Language, label: Label, split: Split, text: &str) -> CaseDocument {
    CaseDocument {
        id: id.into(),
        language,
        text: text.into(),
        gold_label: label,
        gold_articles: None,
        split,
    }
}

/// `positive` then `negative` synthetic documents in one split.
pub fn synthetic(split: Split, positive: usize, negative: usize) -> Vec<CaseDocument> {
    (0..positive + negative)
        .map(|i| {
            let label = if i < positive { Label::Positive } else { Label::Negative };
            doc(&format!("{split}-{i}"), Language::En, label, split, &format!("Synthetic case {i}."))
        })
        .collect()
}

pub fn write(dir: &Path, name: &str, docs: &[CaseDocument]) -> PathBuf {
    let path = dir.join(name);
    write_corpus(&path, docs).unwrap();
    path
}

/// Four English test documents, gold P, N, P, N.
pub fn fixture_docs() -> Vec<CaseDocument> {
    vec![
        doc("d1", Language::En, Label::Positive, Split::Test, "The applicant was detained for six years without any review."),
        doc("d2", Language::En, Label::Negative, Split::Test, "The applicant complained about the length of civil proceedings."),
        doc("d3", Language::En, Label::Positive, Split::Test, "The applicant was detained and alleged ill-treatment in custody."),
        doc("d4", Language::En, Label::Negative, Split::Test, "The applicant challenged a tax assessment."),
    ]
}

pub const FIXTURE_SCRIPT: &str = r#"
[backend]
kind = "mock"
[backend.script]
d1 = "A, Yes"
d2 = "B, No"
d3 = "There were no violations."
d4 = "The case raises questions"
"#;

/// Writes an experiment config next to the corpus and returns its path.
pub fn write_config(dir: &Path, name: &str, corpus: &Path, backend: &str, extra: &str) -> PathBuf {
    let body = format!(
        "corpus = {corpus:?}\nsplit = \"test\"\noutput_dir = \"{name}-out\"\nunmapped_policy = \"coerce_to_negative\"\n{extra}\n\n[generation]\nmodel_id = \"gpt-j-6b\"\nmax_new_tokens = 50\n\n[retry]\nmax_retries = 2\nbase_delay_ms = 1\n{backend}\n",
        corpus = corpus.display().to_string(),
    );
    let path = dir.join(format!("{name}.toml"));
    std::fs::write(&path, body).unwrap();
    path
}

/// Inference stub: answers "A, Yes" when the prompt mentions detention, "B, No" otherwise.
pub struct Stub {
    pub generate_hits: AtomicUsize,
    pub tokenize_hits: AtomicUsize,
}

async fn generate_route(State(stub): State<Arc<Stub>>, Json(body): Json<Value>) -> Json<Value> {
    stub.generate_hits.fetch_add(1, Ordering::SeqCst);
    let prompt = body["prompt"].as_str().unwrap_or_default();
    let document = prompt.split("<|endoftext|>").next().unwrap_or_default();
    let text = if document.contains("detained") { "A, Yes" } else { "B, No" };
    Json(json!({ "text": text }))
}

async fn tokenize_route(State(stub): State<Arc<Stub>>, Json(body): Json<Value>) -> Json<Value> {
    stub.tokenize_hits.fetch_add(1, Ordering::SeqCst);
    let words = body["text"].as_str().unwrap_or_default().split_whitespace().count();
    Json(json!({ "count": words }))
}

pub fn serve() -> (String, Arc<Stub>) {
    let stub = Arc::new(Stub { generate_hits: AtomicUsize::new(0), tokenize_hits: AtomicUsize::new(0) });
    let app = Router::new()
        .route("/generate", post(generate_route))
        .route("/tokenize", post(tokenize_route))
        .with_state(stub.clone());
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    (format!("http://{}", rx.recv().unwrap()), stub)
}
