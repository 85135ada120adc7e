use std::collections::BTreeMap;

use rand::Rng;

use curate::endpoint::{EndpointError, RetryPolicy};
use curate::sft::{diversity_sample, rejection_sample_reward, Candidate, CandidateSet, InstructionSample, ShortfallPolicy};

use crate::common::{rng, Outcome};

type Transform = (&'static str, fn(f64) -> f64);

const TRANSFORMS: [Transform; 4] = [
    ("affine", |x| 3.0 * x + 7.0),
    ("exp", |x| (x / 4.0).exp()),
    ("cube", |x| x * x * x),
    ("atan", f64::atan),
];

fn first_max(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Hamilton apportionment, ties to the smallest key.
fn hamilton(n: usize, weights: &BTreeMap<String, f64>) -> BTreeMap<String, usize> {
    let quotas: Vec<(&String, f64)> = weights.iter().map(|(k, w)| (k, n as f64 * w)).collect();
    let mut out: BTreeMap<String, usize> = quotas.iter().map(|(k, q)| ((*k).clone(), q.floor() as usize)).collect();
    let left = n - out.values().sum::<usize>();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    let rem = |i: usize| quotas[i].1 - quotas[i].1.floor();
    order.sort_by(|&a, &b| {
        if (rem(a) - rem(b)).abs() <= 1e-9 {
            a.cmp(&b)
        } else {
            rem(b).total_cmp(&rem(a))
        }
    });
    for &i in order.iter().take(left) {
        *out.get_mut(quotas[i].0).unwrap() += 1;
    }
    out
}

/// The chosen candidate survives strictly increasing reward transforms,
/// and diversity counts equal the largest-remainder apportionment.
pub fn invariance_and_diversity() -> Outcome {
    let mut changed = 0;
    let mut oracle_miss = 0;
    for i in 0..10_000u64 {
        let mut r = rng(14, i);
        let k = r.gen_range(1..=10);
        let rewards: Vec<f64> = if r.gen_bool(0.2) {
            // coarse values, so ties are common
            (0..k).map(|_| f64::from(r.gen_range(0..4))).collect()
        } else {
            (0..k).map(|_| r.gen_range(-10.0..10.0)).collect()
        };
        let mut set = CandidateSet {
            instruction_id: format!("q{i}"),
            candidates: (0..k)
                .map(|j| Candidate {
                    text: format!("c{j}"),
                    meta: BTreeMap::new(),
                })
                .collect(),
            rewards: None,
        };
        let base = {
            let rw = rewards.clone();
            let model = move |_: &[&str]| -> Result<Vec<f64>, EndpointError> { Ok(rw.clone()) };
            rejection_sample_reward(&mut set, &model, &RetryPolicy::none()).unwrap().index
        };
        if base != first_max(&rewards) {
            oracle_miss += 1;
        }
        for (_, f) in TRANSFORMS {
            let rw: Vec<f64> = rewards.iter().map(|&x| f(x)).collect();
            let model = move |_: &[&str]| -> Result<Vec<f64>, EndpointError> { Ok(rw.clone()) };
            if rejection_sample_reward(&mut set, &model, &RetryPolicy::none()).unwrap().index != base {
                changed += 1;
            }
        }
    }

    let mut mismatched = 0;
    for case in 0..100u64 {
        let mut r = rng(15, case);
        let k = r.gen_range(1..=8);
        let n = r.gen_range(0..=1000);
        let raw: Vec<f64> = if case % 10 == 0 {
            vec![1.0; k]
        } else {
            (0..k).map(|_| r.gen_range(0.05..1.0)).collect()
        };
        let sum: f64 = raw.iter().sum();
        let target: BTreeMap<String, f64> = raw.iter().enumerate().map(|(i, w)| (format!("d{i}"), w / sum)).collect();
        let pool: Vec<InstructionSample> = target
            .keys()
            .flat_map(|d| (0..n).map(move |j| InstructionSample::seed(format!("{d}-{j:04}"), format!("item {j}"), d.clone())))
            .collect();
        let (out, report) = diversity_sample(pool, &target, n, case, ShortfallPolicy::Strict).unwrap();
        let mut counts: BTreeMap<String, usize> = target.keys().map(|k| (k.clone(), 0)).collect();
        for s in &out {
            *counts.get_mut(&s.domain_label).unwrap() += 1;
        }
        if counts != hamilton(n, &target) || report.realized != counts || out.len() != n {
            mismatched += 1;
        }
    }

    Outcome::new(
        changed == 0 && oracle_miss == 0 && mismatched == 0,
        format!(
            "10000 candidate sets x {} transforms: {changed} changed choices, {oracle_miss} differ from first argmax; \
             diversity: {mismatched}/100 cases differ from largest remainder",
            TRANSFORMS.len()
        ),
    )
}
