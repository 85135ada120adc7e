use serde::{Deserialize, Serialize};

use super::{LogProbProvider, MixEvalError};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NllOptions {
    /// Replace zero probabilities with this floor instead of failing.
    pub floor: Option<f64>,
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NllReport {
    pub total_nll: f64,
    pub n: usize,
    /// `total_nll / n`; 0 for an empty sequence.
    pub nll_per_token: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_token_trace: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerplexityReport {
    pub ppl: f64,
    pub n: usize,
    pub nll_per_token: f64,
}

/// −Σ ln P(tᵢ | t₁..tᵢ₋₁), natural log.
pub fn nll<P: LogProbProvider + ?Sized>(model: &P, tokens: &[String]) -> Result<NllReport, MixEvalError> {
    nll_with(model, tokens, &NllOptions::default())
}

pub fn nll_with<P: LogProbProvider + ?Sized>(
    model: &P,
    tokens: &[String],
    options: &NllOptions,
) -> Result<NllReport, MixEvalError> {
    let lps = model.token_logprobs(tokens)?;
    if lps.len() != tokens.len() {
        return Err(MixEvalError::Protocol(format!(
            "expected {} logprobs, got {}",
            tokens.len(),
            lps.len()
        )));
    }
    let mut trace = Vec::with_capacity(if options.trace { lps.len() } else { 0 });
    // Compensated sums. The mean is taken over deviations from the first
    // term, so n equal terms average to exactly that term.
    let mut total = Neumaier::default();
    let mut dev = Neumaier::default();
    let mut first = None;
    for (i, &lp) in lps.iter().enumerate() {
        let lp = if lp.is_finite() {
            lp
        } else {
            match options.floor {
                Some(f) if lp == f64::NEG_INFINITY => f.ln(),
                _ => {
                    return Err(MixEvalError::ZeroProbability {
                        position: i,
                        token: tokens[i].clone(),
                    })
                }
            }
        };
        total.add(-lp);
        let f = *first.get_or_insert(-lp);
        dev.add(-lp - f);
        if options.trace {
            trace.push(-lp);
        }
    }
    let n = tokens.len();
    Ok(NllReport {
        total_nll: total.sum(),
        n,
        nll_per_token: first.map_or(0.0, |f| f + dev.sum() / n as f64),
        per_token_trace: options.trace.then_some(trace),
    })
}

#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        self.comp += if self.sum.abs() >= x.abs() {
            (self.sum - t) + x
        } else {
            (x - t) + self.sum
        };
        self.sum = t;
    }

    fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

/// exp of the per-token NLL.
pub fn perplexity<P: LogProbProvider + ?Sized>(
    model: &P,
    tokens: &[String],
) -> Result<PerplexityReport, MixEvalError> {
    if tokens.is_empty() {
        return Err(MixEvalError::EmptySequence);
    }
    let r = nll(model, tokens)?;
    Ok(PerplexityReport {
        ppl: r.nll_per_token.exp(),
        n: r.n,
        nll_per_token: r.nll_per_token,
    })
}

/// Per-choice scores, typically the total log-likelihood of each choice's
/// continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceScoreSet {
    pub scores: Vec<f64>,
    #[serde(default)]
    pub correct_index: Option<usize>,
}

impl ChoiceScoreSet {
    pub fn new(scores: Vec<f64>) -> Self {
        ChoiceScoreSet {
            scores,
            correct_index: None,
        }
    }

    pub fn k(&self) -> usize {
        self.scores.len()
    }
}

/// Softmax over the scores, computed after subtracting the maximum.
pub fn normalized_choice_probs(set: &ChoiceScoreSet) -> Result<Vec<f64>, MixEvalError> {
    if set.k() < 2 {
        return Err(MixEvalError::TooFewChoices(set.k()));
    }
    if let Some(index) = set.scores.iter().position(|s| !s.is_finite()) {
        return Err(MixEvalError::NonFiniteScore { index });
    }
    let max = set.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = set.scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixeval::{NGramTableModel, UniformModel, Vocabulary};
    use std::collections::HashMap;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn v4() -> Vocabulary {
        Vocabulary::new(["a", "b", "c", "d"])
    }

    #[test]
    fn certain_model_has_zero_nll() {
        // a -> b -> c -> d -> a, deterministic.
        let mut ctx = HashMap::new();
        for i in 0..4u32 {
            let mut d = vec![0.0; 4];
            d[((i + 1) % 4) as usize] = 1.0;
            ctx.insert(vec![i], d);
        }
        let m = NGramTableModel::new(v4(), 2, vec![1.0, 0.0, 0.0, 0.0], ctx).unwrap();
        let r = nll(&m, &toks("a b c d a")).unwrap();
        assert_eq!(r.total_nll, 0.0);
        assert_eq!(perplexity(&m, &toks("a b c d a")).unwrap().ppl, 1.0);
    }

    #[test]
    fn uniform_analytic() {
        let m = UniformModel::new(v4()).unwrap();
        let r = nll(&m, &toks("a c d")).unwrap();
        assert!((r.total_nll - 3.0 * 4f64.ln()).abs() < 1e-12);
        assert!((r.total_nll - 4.1589).abs() < 1e-4);
        assert_eq!(perplexity(&m, &toks("d d b a")).unwrap().ppl, 4.0);
    }

    #[test]
    fn bigram_hand_computed() {
        // default: a .5 b .5 ; after a: a .1 b .6 c .3 ; after b: c 1 ; after c: a .2 d .8
        let spec = serde_json::from_str(
            r#"{"vocab":["a","b","c","d"],"order":2,
                "default":{"a":0.5,"b":0.5},
                "contexts":{"a":{"a":0.1,"b":0.6,"c":0.3},"b":{"c":1.0},"c":{"a":0.2,"d":0.8}}}"#,
        )
        .unwrap();
        let m = NGramTableModel::from_spec(&spec).unwrap();
        // a b c a c : 0.5 * 0.6 * 1.0 * 0.2 * 0.3
        let expected = -(0.5f64.ln() + 0.6f64.ln() + 1.0f64.ln() + 0.2f64.ln() + 0.3f64.ln());
        let r = nll_with(&m, &toks("a b c a c"), &NllOptions { floor: None, trace: true }).unwrap();
        assert!((r.total_nll - expected).abs() < 1e-12);
        assert_eq!(r.per_token_trace.as_ref().unwrap().len(), 5);
        let p = perplexity(&m, &toks("a b c a c")).unwrap();
        assert!((p.ppl - (r.total_nll / 5.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_names_position() {
        let m = NGramTableModel::new(v4(), 1, vec![0.5, 0.5, 0.0, 0.0], HashMap::new()).unwrap();
        match nll(&m, &toks("a b c")) {
            Err(MixEvalError::ZeroProbability { position, token }) => {
                assert_eq!((position, token.as_str()), (2, "c"))
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(nll(&m, &toks("a zz")), Err(MixEvalError::ZeroProbability { position: 1, .. })));
        let floored = nll_with(&m, &toks("a c"), &NllOptions { floor: Some(1e-6), trace: false }).unwrap();
        assert!((floored.total_nll - (2f64.ln() - 1e-6f64.ln())).abs() < 1e-12);
        assert!(matches!(perplexity(&m, &[]), Err(MixEvalError::EmptySequence)));
    }

    #[test]
    fn choice_probs() {
        let p = normalized_choice_probs(&ChoiceScoreSet::new(vec![1.5; 4])).unwrap();
        assert!(p.iter().all(|x| (x - 0.25).abs() < 1e-15));
        let p = normalized_choice_probs(&ChoiceScoreSet::new(vec![0.0, 3f64.ln()])).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-12 && (p[1] - 0.75).abs() < 1e-12);
        let a = normalized_choice_probs(&ChoiceScoreSet::new(vec![-1.0, 0.5, 2.0])).unwrap();
        let b = normalized_choice_probs(&ChoiceScoreSet::new(vec![999.0, 1000.5, 1002.0])).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!(matches!(
            normalized_choice_probs(&ChoiceScoreSet::new(vec![1.0])),
            Err(MixEvalError::TooFewChoices(1))
        ));
        assert!(matches!(
            normalized_choice_probs(&ChoiceScoreSet::new(vec![1.0, f64::NAN])),
            Err(MixEvalError::NonFiniteScore { index: 1 })
        ));
    }

    proptest::proptest! {
        #[test]
        fn softmax_sums_to_one_and_shift_invariant(
            scores in proptest::collection::vec(-50.0f64..50.0, 2..12),
            shift in -1e3f64..1e3,
        ) {
            let p = normalized_choice_probs(&ChoiceScoreSet::new(scores.clone())).unwrap();
            proptest::prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            proptest::prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
            // Strictly inside (0, 1) while the spread stays representable.
            let spread = scores.iter().copied().fold(f64::MIN, f64::max)
                - scores.iter().copied().fold(f64::MAX, f64::min);
            if spread < 30.0 {
                proptest::prop_assert!(p.iter().all(|&x| x > 0.0 && x < 1.0));
            }
            let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
            let q = normalized_choice_probs(&ChoiceScoreSet::new(shifted)).unwrap();
            for (a, b) in p.iter().zip(&q) {
                proptest::prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
