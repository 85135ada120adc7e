use std::collections::{HashMap, HashSet};

use rand::Rng;

use curate::dedup::{dedup, estimate_jaccard, exact_jaccard, signature, DedupConfig, ShingleSet};
use curate::{Document, Source};

use crate::common::{random_words, rng, vocab, Outcome};

const DOCS: usize = 10_000;
const PLANTED: usize = 500;

/// Mean MinHash estimate on sets with Jaccard exactly 0.5, then dedup
/// decisions against an exact pairwise Jaccard oracle.
pub fn calibration_and_oracle() -> Outcome {
    let mut total = 0.0;
    let mut exact_ok = true;
    for i in 0..200u64 {
        let mut r = rng(6, i);
        let mut draw = |n: usize| (0..n).map(|_| r.gen::<u64>()).collect::<Vec<u64>>();
        let (common, only_a, only_b) = (draw(100), draw(50), draw(50));
        let a = ShingleSet::from_hashes(common.iter().chain(&only_a).copied().collect());
        let b = ShingleSet::from_hashes(common.iter().chain(&only_b).copied().collect());
        exact_ok &= a.len() == 150 && b.len() == 150 && exact_jaccard(&a, &b) == 0.5;
        let sa = signature(&a, 128, 1000 + i).unwrap();
        let sb = signature(&b, 128, 1000 + i).unwrap();
        total += estimate_jaccard(&sa, &sb).unwrap();
    }
    let mean = total / 200.0;
    let calibrated = exact_ok && (mean - 0.5).abs() <= 0.03;

    let (docs, tokens) = corpus();
    let oracle = oracle_pairs(&tokens, 5, 0.8);
    let config = DedupConfig::default();
    let (_, report) = dedup(docs, &config).unwrap();
    let index: HashMap<&str, usize> = (0..DOCS).map(|i| (ID[i].as_str(), i)).collect();
    let mut predicted = HashSet::new();
    for c in &report.clusters {
        let members: Vec<usize> = std::iter::once(&c.kept_id)
            .chain(&c.removed_ids)
            .map(|id| index[id.as_str()])
            .collect();
        for (x, &a) in members.iter().enumerate() {
            for &b in &members[x + 1..] {
                predicted.insert((a.min(b), a.max(b)));
            }
        }
    }
    let pairs = DOCS * (DOCS - 1) / 2;
    let disagree = oracle.symmetric_difference(&predicted).count();
    let agreement = 1.0 - disagree as f64 / pairs as f64;
    let flagged = oracle.union(&predicted).count();
    Outcome::new(
        calibrated && agreement >= 0.99,
        format!(
            "mean estimate {mean:.4} over 200 pairs at J=0.5; {DOCS} docs, {} oracle duplicate pairs, {} predicted, \
             {disagree} disagreements, agreement {:.6} of all pairs ({:.4} of the {flagged} flagged by either)",
            oracle.len(),
            predicted.len(),
            agreement,
            1.0 - disagree as f64 / flagged.max(1) as f64
        ),
    )
}

static ID: std::sync::LazyLock<Vec<String>> = std::sync::LazyLock::new(|| (0..DOCS).map(|i| format!("d{i:05}")).collect());

/// 9,500 random documents and 500 copies of distinct ones with 0 to 4
/// substituted words, which puts their Jaccard on both sides of 0.8.
fn corpus() -> (Vec<Document>, Vec<Vec<String>>) {
    let words = vocab("", 5000);
    let mut r = rng(7, 0);
    let base = DOCS - PLANTED;
    let mut tokens: Vec<Vec<String>> = (0..base)
        .map(|_| {
            let n = r.gen_range(120..=200);
            random_words(&mut r, &words, n)
        })
        .collect();
    let sources = rand::seq::index::sample(&mut r, base, PLANTED).into_vec();
    for src in sources {
        let mut t = tokens[src].clone();
        for _ in 0..r.gen_range(0..=4) {
            let pos = r.gen_range(0..t.len());
            t[pos] = words[r.gen_range(0..words.len())].clone();
        }
        tokens.push(t);
    }
    let docs = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| Document::new(ID[i].clone(), t.join(" "), Source::Web))
        .collect();
    (docs, tokens)
}

/// Every pair with exact shingle Jaccard ≥ `threshold`. An inverted index
/// limits the work to pairs sharing at least one shingle; all others have
/// Jaccard 0.
fn oracle_pairs(tokens: &[Vec<String>], w: usize, threshold: f64) -> HashSet<(usize, usize)> {
    let sets: Vec<HashSet<&[String]>> = tokens.iter().map(|t| t.windows(w).collect()).collect();
    let mut postings: HashMap<&[String], Vec<usize>> = HashMap::new();
    for (i, s) in sets.iter().enumerate() {
        for &sh in s {
            postings.entry(sh).or_default().push(i);
        }
    }
    let mut out = HashSet::new();
    for (i, s) in sets.iter().enumerate() {
        let mut inter: HashMap<usize, usize> = HashMap::new();
        for sh in s {
            for &j in &postings[sh] {
                if j > i {
                    *inter.entry(j).or_default() += 1;
                }
            }
        }
        for (j, c) in inter {
            let union = s.len() + sets[j].len() - c;
            if c as f64 / union as f64 >= threshold {
                out.insert((i, j));
            }
        }
    }
    out
}
