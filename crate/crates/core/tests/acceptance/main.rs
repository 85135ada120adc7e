//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any fails. Pass name fragments as arguments to
//! run a subset: `cargo test --test acceptance -- dedup`.

mod common;

mod bound;
mod choices;
mod decontam;
mod minhash;
mod mm;
mod pipeline;
mod recall;
mod rejection;

use std::process::ExitCode;
use std::time::Instant;

use common::Outcome;

type Criterion = (&'static str, fn() -> Outcome);

const CRITERIA: &[Criterion] = &[
    ("contamination-bound", bound::bound_holds),
    ("corrupted-token-rate", bound::corrupted_rate),
    ("perplexity-consistency", choices::perplexity_consistency),
    ("choice-normalization", choices::choice_normalization),
    ("minhash-calibration", minhash::calibration_and_oracle),
    ("decontamination", decontam::detection_and_oracle),
    ("recall-classifier", recall::f1_and_determinism),
    ("rejection-sampling", rejection::invariance_and_diversity),
    ("pipeline-determinism", pipeline::determinism_and_throughput),
    ("multimodal-filter", mm::drop_rate),
];

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for &(name, run) in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "{} {name} [{secs:.1}s] {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
