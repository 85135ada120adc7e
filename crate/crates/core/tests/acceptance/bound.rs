use std::sync::Arc;

use rand::Rng;

use curate::mixeval::{contamination_bound_check, corrupted_token_rate, mix, ConditionalTokenModel};

use crate::common::{rel_diff, rng, token_strings, Outcome, Table};

const EPSILONS: [f64; 4] = [0.01, 0.05, 0.1, 0.3];
const PAIRS: usize = 1000;

/// ppl_q / ppl_p ≤ 1/(1 − ε) on random table pairs. The ratio is also
/// recomputed here from the tables and must match the library's.
pub fn bound_holds() -> Outcome {
    let mut violations = 0;
    let mut mismatches = 0;
    let mut sequences = 0;
    let mut worst_gap = f64::NEG_INFINITY;
    // ε = 0.05 against the first-order 1 + ε reading
    let (mut max_ratio_05, mut above_first_order) = (0.0f64, 0);

    for pair in 0..PAIRS {
        let mut r = rng(1, pair as u64);
        let v = r.gen_range(2..=8);
        let p_table = Table::random(&mut r, v, false);
        let r_table = Table::random(&mut r, v, true);
        let seqs: Vec<Vec<u32>> = (0..3).map(|_| {
            let len = r.gen_range(1..=60);
            p_table.sample(&mut r, len)
        }).collect();
        let strings: Vec<Vec<String>> = seqs.iter().map(|s| token_strings(s)).collect();
        let (p, q): (Arc<dyn ConditionalTokenModel>, Arc<dyn ConditionalTokenModel>) =
            (p_table.model(), r_table.model());
        for &eps in &EPSILONS {
            let report = contamination_bound_check(p.clone(), q.clone(), eps, &strings).unwrap();
            violations += report.violations.len();
            let bound = 1.0 / (1.0 - eps);
            for (seq, &got) in seqs.iter().zip(&report.ratios) {
                sequences += 1;
                let pp = p_table.probs(seq);
                let rr = r_table.probs(seq);
                let n = seq.len() as f64;
                let lp: f64 = pp.iter().map(|x| -x.ln()).sum::<f64>() / n;
                let lq: f64 = pp
                    .iter()
                    .zip(&rr)
                    .map(|(a, b)| -((1.0 - eps) * a + eps * b).ln())
                    .sum::<f64>()
                    / n;
                let want = (lq - lp).exp();
                if rel_diff(got, want) > 1e-9 {
                    mismatches += 1;
                }
                if want > bound * (1.0 + 1e-9) {
                    violations += 1;
                }
                worst_gap = worst_gap.max(want / bound);
                if eps == 0.05 {
                    max_ratio_05 = max_ratio_05.max(want);
                    if want > 1.05 {
                        above_first_order += 1;
                    }
                }
            }
        }
    }
    Outcome::new(
        violations == 0 && mismatches == 0,
        format!(
            "{PAIRS} pairs, {sequences} sequence checks, {violations} violations, {mismatches} ratio mismatches; \
             max ratio/bound {worst_gap:.6}; eps=0.05: bound {:.5} (5.263%), first-order 1.05 (5%), \
             max observed {max_ratio_05:.5}, {above_first_order} sequences above 1.05",
            1.0 / 0.95
        ),
    )
}

/// Latent-source sampling at ε = 0.05 over 10⁵ tokens.
pub fn corrupted_rate() -> Outcome {
    let mut r = rng(2, 0);
    let p = Table::random(&mut r, 12, false).model();
    let c = Table::random(&mut r, 12, false).model();
    let q = mix(p, c, 0.05).unwrap();
    let s = corrupted_token_rate(&q, 1000, 100, 7);
    Outcome::new(
        s.total == 100_000 && (0.04..=0.06).contains(&s.rate),
        format!(
            "{} of {} tokens corrupted, rate {:.4} (one every {:.1} tokens)",
            s.corrupted,
            s.total,
            s.rate,
            1.0 / s.rate
        ),
    )
}
