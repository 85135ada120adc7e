use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use curate::corpus::{write_corpus, RunManifest};
use curate::decontam::{build_ngram_index, Benchmark, BenchmarkItem, IndexOptions};
use curate::endpoint::MockHttpServer;
use curate::pipeline::{run_pipeline, PipelineOptions};
use curate::recall::{train_classifier, ClassifierConfig};
use curate::{Document, Source, TokenizerSpec};

use crate::common::{random_words, rng, vocab, Outcome};

const WEB: usize = 70_000;
const MATH: usize = 20_000;
const KNOWLEDGE: usize = 10_000;
const BUDGET: Duration = Duration::from_secs(60);

/// About 1KB of sentences, one per line.
fn text(r: &mut ChaCha8Rng, words: &[String]) -> String {
    let mut out = String::with_capacity(1100);
    while out.len() < 1000 {
        let n = r.gen_range(8..=16);
        out.push_str(&random_words(r, words, n).join(" "));
        out.push_str(".\n");
    }
    out
}

struct Fixture {
    web: Vec<String>,
    math: Vec<String>,
    bench: Vec<String>,
}

impl Fixture {
    fn new() -> Self {
        Fixture {
            web: vocab("w", 3000),
            math: vocab("m", 1500),
            bench: vocab("q", 500),
        }
    }

    /// Web text, a fifth of it written in the math vocabulary.
    fn corpus(&self, r: &mut ChaCha8Rng, source: Source, n: usize, questions: &[Vec<String>]) -> Vec<Document> {
        let mut docs: Vec<Document> = Vec::with_capacity(n);
        for i in 0..n {
            let id = format!("{}{i:06}", source.as_str());
            let roll: f64 = r.gen();
            let t = if roll < 0.01 {
                "too short to keep.".to_string()
            } else if roll < 0.03 && !docs.is_empty() {
                docs[r.gen_range(0..docs.len())].text.clone()
            } else if roll < 0.035 {
                let q = &questions[r.gen_range(0..questions.len())];
                format!("{}{}.\n{}", text(r, &self.math), q[..12].join(" "), text(r, &self.math))
            } else if source == Source::Math || (source == Source::Web && roll < 0.2) {
                text(r, &self.math)
            } else {
                text(r, &self.web)
            };
            docs.push(Document::new(id, t, source));
        }
        docs
    }
}

fn score(text: &str, lo: f64) -> f64 {
    let s: u32 = text.bytes().map(u32::from).fold(0, |a, b| a.wrapping_mul(31).wrapping_add(b));
    lo + f64::from(s % 5)
}

fn setup(dir: &Path, server: &MockHttpServer) -> RunManifest {
    let fx = Fixture::new();
    let mut r = rng(20, 0);
    let questions: Vec<Vec<String>> = (0..40).map(|_| random_words(&mut r, &fx.bench, 25)).collect();

    for (source, n) in [(Source::Web, WEB), (Source::Math, MATH), (Source::Knowledge, KNOWLEDGE)] {
        let docs = fx.corpus(&mut r, source, n, &questions);
        write_corpus(dir.join(format!("{}.jsonl", source.as_str())), &docs).unwrap();
    }

    let seeds = |r: &mut ChaCha8Rng, words: &[String], p: &str| -> Vec<Document> {
        (0..500).map(|i| Document::new(format!("{p}{i}"), text(r, words), Source::Web)).collect()
    };
    let (pos, neg) = (seeds(&mut r, &fx.math, "pos"), seeds(&mut r, &fx.web, "neg"));
    let (model, _) = train_classifier("math", &pos, &neg, ClassifierConfig::default()).unwrap();
    model.save(dir.join("math.crcl")).unwrap();

    let items = questions
        .iter()
        .map(|q| BenchmarkItem {
            question: q.join(" "),
            answer: None,
        })
        .collect();
    build_ngram_index(&[Benchmark::new("bench", items)], IndexOptions::default(), &TokenizerSpec::default())
        .unwrap()
        .save(dir.join("bench.cngx"))
        .unwrap();

    let manifest = json!({
        "seed": 42,
        "sources": [
            {"path": "web.jsonl", "source": "web"},
            {"path": "math.jsonl", "source": "math"},
            {"path": "knowledge.jsonl", "source": "knowledge"}
        ],
        "mixing_ratios": {"web": 0.3, "math": 0.5, "knowledge": 0.2},
        "stages": [
            {"name": "heuristic", "kind": "heuristic"},
            {"name": "recall", "kind": "recall", "params": {"model": "math.crcl", "sources": ["web"]}},
            {"name": "dedup", "kind": "dedup"},
            {"name": "quality", "kind": "quality", "params": {"scorers": {
                "fineweb-edu": {"endpoint": server.url("/edu"), "scale": [0, 5]},
                "math-reasoning": {"endpoint": server.url("/math"), "scale": [1, 5]}
            }}},
            {"name": "decontaminate", "kind": "decontaminate", "params": {"index": "bench.cngx"}}
        ]
    });
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&manifest).unwrap()).unwrap();
    RunManifest::load(&path).unwrap()
}

fn without_timings(mut report: Value) -> Value {
    for s in report["stages"].as_array_mut().unwrap() {
        s["duration_ms"] = Value::Null;
    }
    report
}

struct Run {
    elapsed: Duration,
    final_bytes: Vec<u8>,
    report: Value,
}

fn run(manifest: &RunManifest, out: &Path, threads: usize) -> Run {
    let start = Instant::now();
    run_pipeline(
        manifest,
        &PipelineOptions {
            out_dir: Some(out.to_path_buf()),
            threads: Some(threads),
            ..PipelineOptions::default()
        },
    )
    .unwrap();
    let elapsed = start.elapsed();
    Run {
        elapsed,
        final_bytes: std::fs::read(out.join("final.jsonl")).unwrap(),
        report: without_timings(serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap()),
    }
}

/// 100k documents through all five stages with a mock scoring service:
/// wall time, and byte-identical output across repeated runs and thread
/// counts.
pub fn determinism_and_throughput() -> Outcome {
    let server = MockHttpServer::start(|path, body| {
        let lo = if path == "/math" { 1.0 } else { 0.0 };
        let scores: Vec<f64> = body["texts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| score(t.as_str().unwrap(), lo))
            .collect();
        (200, json!({ "scores": scores }))
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = setup(dir.path(), &server);

    let a = run(&manifest, &dir.path().join("a"), 8);
    let b = run(&manifest, &dir.path().join("b"), 8);
    let c = run(&manifest, &dir.path().join("c"), 1);

    let identical_runs = a.final_bytes == b.final_bytes && a.report == b.report;
    let identical_threads = a.final_bytes == c.final_bytes && a.report == c.report;
    let counts: Vec<String> = a.report["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| format!("{}:{}", s["name"].as_str().unwrap(), s["output_count"]))
        .collect();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    Outcome::new(
        a.elapsed < BUDGET && b.elapsed < BUDGET && identical_runs && identical_threads && a.report["output_count"] != 0,
        format!(
            "{} docs in; {}; final {}; 8 threads {:.1}s / {:.1}s, 1 thread {:.1}s on {cores} core(s); \
             repeat identical: {identical_runs}, 1 vs 8 threads identical: {identical_threads}",
            WEB + MATH + KNOWLEDGE,
            counts.join(" "),
            a.report["output_count"],
            a.elapsed.as_secs_f64(),
            b.elapsed.as_secs_f64(),
            c.elapsed.as_secs_f64()
        ),
    )
}
