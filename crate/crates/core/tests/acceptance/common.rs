use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use curate::mixeval::{NGramTableModel, Vocabulary};

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

const SYLLABLES: [&str; 20] = [
    "ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ze", "pa", "do", "fi", "gu", "he", "ji", "bo", "ce", "wa", "ly",
    "qu",
];

/// A pronounceable lowercase word, distinct for every `i`, prefixed so
/// that separate vocabularies never share a word.
pub fn word(prefix: &str, mut i: usize) -> String {
    let mut w = String::from(prefix);
    loop {
        w.push_str(SYLLABLES[i % SYLLABLES.len()]);
        i /= SYLLABLES.len();
        if i == 0 {
            break w;
        }
    }
}

pub fn vocab(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| word(prefix, i)).collect()
}

pub fn random_words(r: &mut ChaCha8Rng, vocab: &[String], n: usize) -> Vec<String> {
    (0..n).map(|_| vocab[r.gen_range(0..vocab.len())].clone()).collect()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Random distribution over `v` outcomes. With `zeros`, some entries are
/// exactly zero (at least one stays positive).
pub fn random_dist(r: &mut ChaCha8Rng, v: usize, zeros: bool) -> Vec<f64> {
    let mut d: Vec<f64> = (0..v).map(|_| (r.gen::<f64>() * 4.0).exp()).collect();
    if zeros {
        let keep = r.gen_range(0..v);
        for (i, x) in d.iter_mut().enumerate() {
            if i != keep && r.gen_bool(0.3) {
                *x = 0.0;
            }
        }
    }
    let s: f64 = d.iter().sum();
    d.iter().map(|x| x / s).collect()
}

/// Reference n-gram table kept next to the library model, so expected
/// probabilities are computed without going through the library.
pub struct Table {
    pub v: usize,
    pub order: usize,
    pub default: Vec<f64>,
    pub contexts: HashMap<Vec<u32>, Vec<f64>>,
}

impl Table {
    pub fn random(r: &mut ChaCha8Rng, v: usize, zeros: bool) -> Self {
        let order = r.gen_range(1..=3);
        let default = random_dist(r, v, zeros);
        let mut contexts = HashMap::new();
        if order > 1 {
            for _ in 0..r.gen_range(0..=2 * v) {
                let len = r.gen_range(1..order);
                let ctx: Vec<u32> = (0..len).map(|_| r.gen_range(0..v as u32)).collect();
                contexts.insert(ctx, random_dist(r, v, zeros));
            }
        }
        Table {
            v,
            order,
            default,
            contexts,
        }
    }

    pub fn dist(&self, ctx: &[u32]) -> &[f64] {
        for len in (1..=(self.order - 1).min(ctx.len())).rev() {
            if let Some(d) = self.contexts.get(&ctx[ctx.len() - len..]) {
                return d;
            }
        }
        &self.default
    }

    pub fn model(&self) -> Arc<NGramTableModel> {
        Arc::new(NGramTableModel::new(token_vocab(self.v), self.order, self.default.clone(), self.contexts.clone()).unwrap())
    }

    /// Samples token ids from the table itself.
    pub fn sample(&self, r: &mut ChaCha8Rng, len: usize) -> Vec<u32> {
        let mut seq = Vec::with_capacity(len);
        for _ in 0..len {
            let d = self.dist(&seq);
            let u: f64 = r.gen();
            let mut acc = 0.0;
            let mut pick = d.iter().rposition(|&p| p > 0.0).unwrap() as u32;
            for (i, &p) in d.iter().enumerate() {
                acc += p;
                if u < acc && p > 0.0 {
                    pick = i as u32;
                    break;
                }
            }
            seq.push(pick);
        }
        seq
    }

    /// Per-token probabilities of `seq`.
    pub fn probs(&self, seq: &[u32]) -> Vec<f64> {
        (0..seq.len()).map(|i| self.dist(&seq[..i])[seq[i] as usize]).collect()
    }
}

pub fn token_vocab(v: usize) -> Vocabulary {
    Vocabulary::new((0..v).map(|i| format!("t{i}")))
}

pub fn token_strings(seq: &[u32]) -> Vec<String> {
    seq.iter().map(|i| format!("t{i}")).collect()
}

pub fn random_words_between(r: &mut ChaCha8Rng, vocab: &[String], lo: usize, hi: usize) -> Vec<String> {
    let n = r.gen_range(lo..=hi);
    random_words(r, vocab, n)
}
