//! Final mix: draws each source's share of the output at the manifest ratios.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::alloc::{allocate, largest_remainder};
use crate::corpus::{Document, RunManifest, Source};
use crate::hash::hash_str;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MixReport {
    /// False when the manifest has no ratios and the corpus passes through.
    pub applied: bool,
    pub requested_size: Option<usize>,
    pub size: usize,
    pub available: BTreeMap<Source, usize>,
    pub counts: BTreeMap<Source, usize>,
    pub target_ratios: BTreeMap<Source, f64>,
    pub realized_ratios: BTreeMap<Source, f64>,
}

fn ratios_of(counts: &BTreeMap<Source, usize>) -> BTreeMap<Source, f64> {
    let total: usize = counts.values().sum();
    counts
        .iter()
        .map(|(s, &c)| (*s, if total == 0 { 0.0 } else { c as f64 / total as f64 }))
        .collect()
}

/// Largest total whose largest-remainder split fits every source.
fn fitting_size(ratios: &BTreeMap<Source, f64>, available: &BTreeMap<Source, usize>, cap: Option<usize>) -> usize {
    let avail = |s: &Source| available.get(s).copied().unwrap_or(0);
    let mut n = ratios
        .iter()
        .filter(|(_, &r)| r > 0.0)
        .map(|(s, &r)| (avail(s) as f64 / r).floor().min(usize::MAX as f64) as usize)
        .min()
        .unwrap_or(0);
    if let Some(cap) = cap {
        n = n.min(cap);
    }
    // Flooring per source can still overshoot by a remainder unit.
    while n > 0 && largest_remainder(n, ratios).iter().any(|(s, &q)| q > avail(s)) {
        n -= 1;
    }
    n
}

/// Mixes `corpus` at `manifest.mixing_ratios`. `origin[i]` is the index of
/// the manifest source entry document `i` was loaded from. Files share
/// their source's quota by weight; weight 0 excludes a file. Within a file
/// the kept documents are a seeded uniform sample. Output is grouped by
/// source, then file, then original position.
pub fn mix_final(corpus: Vec<Document>, origin: &[usize], manifest: &RunManifest) -> (Vec<Document>, MixReport) {
    let mut counts = BTreeMap::new();
    for d in &corpus {
        *counts.entry(d.source).or_insert(0) += 1;
    }
    if manifest.mixing_ratios.is_empty() {
        let report = MixReport {
            applied: false,
            size: corpus.len(),
            available: counts.clone(),
            realized_ratios: ratios_of(&counts),
            counts,
            ..MixReport::default()
        };
        return (corpus, report);
    }

    let weight = |entry: usize| manifest.sources.get(entry).map_or(1.0, |e| e.weight);
    // (source, entry) -> positions in `corpus`
    let mut groups: BTreeMap<(Source, usize), Vec<usize>> = BTreeMap::new();
    for (i, d) in corpus.iter().enumerate() {
        let entry = origin[i];
        if weight(entry) > 0.0 {
            groups.entry((d.source, entry)).or_default().push(i);
        }
    }
    let mut available: BTreeMap<Source, usize> = BTreeMap::new();
    for ((s, _), idx) in &groups {
        *available.entry(*s).or_insert(0) += idx.len();
    }

    let ratios = &manifest.mixing_ratios;
    let size = fitting_size(ratios, &available, manifest.mix_size);
    let quotas = largest_remainder(size, ratios);

    let mut chosen: Vec<usize> = Vec::with_capacity(size);
    for (source, &quota) in &quotas {
        if quota == 0 {
            continue;
        }
        let files: Vec<(usize, &Vec<usize>)> = groups
            .iter()
            .filter(|((s, _), _)| s == source)
            .map(|((_, e), idx)| (*e, idx))
            .collect();
        let wsum: f64 = files.iter().map(|(e, _)| weight(*e)).sum();
        let weights: BTreeMap<usize, f64> = files.iter().map(|(e, _)| (*e, weight(*e) / wsum)).collect();
        let avail: BTreeMap<usize, usize> = files.iter().map(|(e, idx)| (*e, idx.len())).collect();
        let per_file = allocate(quota, &weights, &avail, true).expect("quota fits the source by construction");
        for (entry, positions) in files {
            let take = per_file[&entry];
            let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed);
            rng.set_stream(hash_str(&format!("{source}/{entry}"), 0));
            let mut pick = rand::seq::index::sample(&mut rng, positions.len(), take).into_vec();
            pick.sort_unstable();
            chosen.extend(pick.into_iter().map(|p| positions[p]));
        }
    }

    let mut keep = vec![false; corpus.len()];
    for &i in &chosen {
        keep[i] = true;
    }
    let mut by_pos: BTreeMap<usize, Document> = corpus
        .into_iter()
        .enumerate()
        .filter(|(i, _)| keep[*i])
        .collect();
    let out: Vec<Document> = chosen.iter().map(|i| by_pos.remove(i).expect("chosen once")).collect();

    let mut realized_counts = BTreeMap::new();
    for (s, &q) in &quotas {
        realized_counts.insert(*s, q);
    }
    let report = MixReport {
        applied: true,
        requested_size: manifest.mix_size,
        size: out.len(),
        available,
        realized_ratios: ratios_of(&realized_counts),
        counts: realized_counts,
        target_ratios: ratios.clone(),
    };
    (out, report)
}
