use rand::Rng;

use curate::mixeval::{nll, normalized_choice_probs, perplexity, ChoiceScoreSet, UniformModel};

use crate::common::{rel_diff, rng, token_strings, token_vocab, Outcome, Table};

/// perplexity == exp(NLL / n) on random fixtures, with NLL summed here from
/// the tables; a uniform model's perplexity is its vocabulary size.
pub fn perplexity_consistency() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let mut r = rng(3, i);
        let v = r.gen_range(2..=20);
        let table = Table::random(&mut r, v, false);
        let model = table.model();
        let len = r.gen_range(1..=200);
        let seq = table.sample(&mut r, len);
        let toks = token_strings(&seq);
        let oracle_nll: f64 = table.probs(&seq).iter().map(|p| -p.ln()).sum();
        let want = (oracle_nll / len as f64).exp();
        let got = perplexity(model.as_ref(), &toks).unwrap();
        let lib_nll = nll(model.as_ref(), &toks).unwrap();
        worst = worst
            .max(rel_diff(got.ppl, want))
            .max(rel_diff(got.ppl, (lib_nll.total_nll / lib_nll.n as f64).exp()));
    }

    // Bit equality with V itself is out of reach in binary floating point
    // (exp(ln 3) is 3.0000000000000004), so the analytic value is the closed
    // form exp(-ln(1/V)) evaluated once; the pipeline of per-token sums must
    // reproduce it exactly, with no accumulated error.
    let mut uniform_exact = 0;
    let mut uniform_cases = 0;
    let mut max_ulps = 0.0f64;
    for v in 1..=64usize {
        let model = UniformModel::new(token_vocab(v)).unwrap();
        let closed = (-(1.0 / v as f64).ln()).exp();
        let mut r = rng(4, v as u64);
        for _ in 0..5 {
            let len = r.gen_range(1..=300);
            let seq: Vec<u32> = (0..len).map(|_| r.gen_range(0..v as u32)).collect();
            let ppl = perplexity(&model, &token_strings(&seq)).unwrap().ppl;
            uniform_cases += 1;
            if ppl.to_bits() == closed.to_bits() {
                uniform_exact += 1;
            }
            let ulp = f64::from_bits((v as f64).to_bits() + 1) - v as f64;
            max_ulps = max_ulps.max((ppl - v as f64).abs() / ulp);
        }
    }
    Outcome::new(
        worst <= 1e-9 && uniform_exact == uniform_cases,
        format!(
            "1000 table fixtures, max relative error {worst:.2e}; uniform: {uniform_exact}/{uniform_cases} equal the \
             closed form exactly, at most {max_ulps} ulp from the vocabulary size"
        ),
    )
}

/// Probabilities sum to 1 and do not move when every score is shifted.
pub fn choice_normalization() -> Outcome {
    let (mut worst_sum, mut worst_shift, mut worst_oracle) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..10_000 {
        let mut r = rng(5, i);
        let k = r.gen_range(2..=10);
        let spread = [1.0, 10.0, 100.0, 1000.0][r.gen_range(0..4)];
        let scores: Vec<f64> = (0..k).map(|_| -r.gen::<f64>() * spread).collect();
        let shift = r.gen_range(-1000.0..1000.0);
        let probs = normalized_choice_probs(&ChoiceScoreSet::new(scores.clone())).unwrap();
        let shifted =
            normalized_choice_probs(&ChoiceScoreSet::new(scores.iter().map(|s| s + shift).collect())).unwrap();
        worst_sum = worst_sum.max((probs.iter().sum::<f64>() - 1.0).abs());
        for (a, b) in probs.iter().zip(&shifted) {
            worst_shift = worst_shift.max((a - b).abs());
        }
        // log-sum-exp reference
        let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
        for (s, p) in scores.iter().zip(&probs) {
            worst_oracle = worst_oracle.max(((s - lse).exp() - p).abs());
        }
    }
    Outcome::new(
        worst_sum <= 1e-9 && worst_shift <= 1e-9 && worst_oracle <= 1e-9,
        format!(
            "10000 sets: max |sum - 1| {worst_sum:.2e}, max shift change {worst_shift:.2e}, \
             max deviation from log-sum-exp {worst_oracle:.2e}"
        ),
    )
}
