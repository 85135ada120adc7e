use std::collections::HashSet;

use rand::Rng;

use curate::decontam::{
    build_ngram_index, check_document, decontaminate_corpus, Benchmark, BenchmarkItem, ContaminationPolicy,
    IndexOptions, NGramIndex,
};
use curate::{Document, Source, TokenizerSpec};

use crate::common::{random_words, random_words_between, rng, vocab, Outcome};

const N: usize = 10;

fn benchmarks(words: &[String], seed: u64) -> Vec<Benchmark> {
    let mut r = rng(seed, 0);
    ["gsm", "mmlu"]
        .iter()
        .map(|name| {
            let items = (0..25)
                .map(|_| BenchmarkItem {
                    question: random_words(&mut r, words, 30).join(" "),
                    answer: Some(random_words(&mut r, words, 12).join(" ")),
                })
                .collect();
            Benchmark::new(*name, items)
        })
        .collect()
}

fn index(benches: &[Benchmark], spec: &TokenizerSpec) -> NGramIndex {
    build_ngram_index(
        benches,
        IndexOptions {
            n: N,
            include_answers: true,
        },
        spec,
    )
    .unwrap()
}

fn questions(benches: &[Benchmark]) -> Vec<Vec<String>> {
    benches
        .iter()
        .flat_map(|b| &b.items)
        .map(|i| i.question.split_whitespace().map(String::from).collect())
        .collect()
}

/// Planted 10-token spans are all found, 9-token overlaps never trigger a
/// removal, and hashed lookup equals a brute-force n-gram intersection.
pub fn detection_and_oracle() -> Outcome {
    let spec = TokenizerSpec::default();
    let bench_words = vocab("b", 800);
    let filler = vocab("c", 3000);
    let benches = benchmarks(&bench_words, 8);
    let idx = index(&benches, &spec);
    let qs = questions(&benches);

    // 50 planted verbatim spans, one per question, in a 10k corpus
    let mut r = rng(9, 0);
    let planted: HashSet<usize> = rand::seq::index::sample(&mut r, 10_000, 50).into_iter().collect();
    let mut planted_ids = Vec::new();
    let mut q_iter = qs.iter();
    let docs: Vec<Document> = (0..10_000)
        .map(|i| {
            let mut t = random_words_between(&mut r, &filler, 80, 160);
            if planted.contains(&i) {
                let q = q_iter.next().unwrap();
                let start = r.gen_range(0..=q.len() - N);
                let at = r.gen_range(0..=t.len());
                t.splice(at..at, q[start..start + N].iter().cloned());
                planted_ids.push(format!("p{i}"));
            }
            Document::new(format!("p{i}"), t.join(" "), Source::Web)
        })
        .collect();
    let (_, report) = decontaminate_corpus(docs, &idx, &spec, ContaminationPolicy::DropDocument).unwrap();
    let detected = report.removed_ids.iter().filter(|id| planted_ids.contains(id)).count();
    let false_pos = report.removed_ids.len() - detected;

    // 9-token overlaps only, several per document, separated by filler
    let near: Vec<Document> = (0..10_000)
        .map(|i| {
            let mut t = Vec::new();
            for _ in 0..r.gen_range(1..=4) {
                t.extend(random_words_between(&mut r, &filler, 1, 20));
                let q = &qs[r.gen_range(0..qs.len())];
                let len = r.gen_range(1..N);
                let start = r.gen_range(0..=q.len() - len);
                t.extend(q[start..start + len].iter().cloned());
            }
            t.extend(random_words_between(&mut r, &filler, 1, 20));
            Document::new(format!("n{i}"), t.join(" "), Source::Web)
        })
        .collect();
    let (_, near_report) = decontaminate_corpus(near, &idx, &spec, ContaminationPolicy::DropDocument).unwrap();

    // brute force on a 1k corpus drawing from the benchmark vocabulary, with
    // spans of 6 to 14 tokens so many documents sit right at the boundary
    let mut grams: HashSet<Vec<String>> = HashSet::new();
    for b in &benches {
        for item in &b.items {
            for text in [Some(&item.question), item.answer.as_ref()].into_iter().flatten() {
                let toks: Vec<String> = text.split_whitespace().map(String::from).collect();
                grams.extend(toks.windows(N).map(<[String]>::to_vec));
            }
        }
    }
    let mut agree = 0;
    let mut contaminated = 0;
    for i in 0..1000 {
        let mut t = random_words_between(&mut r, &bench_words, 5, 40);
        if r.gen_bool(0.6) {
            let q = &qs[r.gen_range(0..qs.len())];
            let len = r.gen_range(6..=14).min(q.len());
            let start = r.gen_range(0..=q.len() - len);
            let at = r.gen_range(0..=t.len());
            t.splice(at..at, q[start..start + len].iter().cloned());
        }
        let hits = t.windows(N).filter(|w| grams.contains(*w)).count();
        let doc = Document::new(format!("o{i}"), t.join(" "), Source::Web);
        let v = check_document(&doc, &idx, &spec).unwrap();
        if v.hit_count == hits && v.contaminated == (hits > 0) {
            agree += 1;
        }
        contaminated += usize::from(hits > 0);
    }

    Outcome::new(
        detected == 50 && false_pos == 0 && near_report.removed_ids.is_empty() && agree == 1000,
        format!(
            "planted: {detected}/50 detected, {false_pos} false positives; 9-token overlaps: {} removals of 10000; \
             brute force agrees on {agree}/1000 ({contaminated} contaminated)",
            near_report.removed_ids.len()
        ),
    )
}
