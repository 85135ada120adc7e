use rand::Rng;

use curate::recall::{recall, train_classifier, ClassifierConfig};
use curate::{Document, Source};

use crate::common::{random_words, rng, vocab, Outcome};

fn docs(prefix: &str, words: &[String], n: usize, seed: u64) -> Vec<Document> {
    let mut r = rng(seed, 0);
    (0..n)
        .map(|i| {
            let len = r.gen_range(40..=120);
            Document::new(format!("{prefix}{i}"), random_words(&mut r, words, len).join(" "), Source::Web)
        })
        .collect()
}

/// Two domains with disjoint vocabularies: F1 on held-out documents, then
/// bit-identical weights from two trainings with the same seed.
pub fn f1_and_determinism() -> Outcome {
    let math = vocab("m", 400);
    let web = vocab("w", 400);
    let (train_pos, test_pos) = (docs("mp", &math, 200, 10), docs("mt", &math, 100, 11));
    let (train_neg, test_neg) = (docs("wp", &web, 200, 12), docs("wt", &web, 100, 13));

    let mut config = ClassifierConfig::default();
    config.hyper.seed = 17;
    let (model, _) = train_classifier("math", &train_pos, &train_neg, config).unwrap();
    let test: Vec<Document> = test_pos.iter().chain(&test_neg).cloned().collect();
    let (kept, _) = recall(&model, test, 0.5);
    let tp = kept.iter().filter(|d| d.id.starts_with("mt")).count() as f64;
    let fp = kept.len() as f64 - tp;
    let fn_ = 100.0 - tp;
    let f1 = 2.0 * tp / (2.0 * tp + fp + fn_);

    let (again, _) = train_classifier("math", &train_pos, &train_neg, config).unwrap();
    let same_weights = model.weights.len() == again.weights.len()
        && model.weights.iter().zip(&again.weights).all(|(a, b)| a.to_bits() == b.to_bits())
        && model.bias.to_bits() == again.bias.to_bits();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    model.write_to(&mut a).unwrap();
    again.write_to(&mut b).unwrap();

    Outcome::new(
        f1 >= 0.95 && same_weights && a == b,
        format!(
            "F1 {f1:.4} (tp {tp}, fp {fp}, fn {fn_}); retrained weights bit-identical: {same_weights}, \
             serialized models identical: {}",
            a == b
        ),
    )
}
