//! Corpus summary statistics.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{Document, Source, TokenizerSpec};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SourceStats {
    pub documents: usize,
    pub tokens: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StatsReport {
    pub documents: usize,
    pub tokens: usize,
    pub per_source: BTreeMap<Source, SourceStats>,
    /// Documents by token count: bin 0 holds lengths 0 and 1, bin `b > 0`
    /// holds `[2^b, 2^(b+1))`. Trailing empty bins are trimmed.
    pub length_histogram: Vec<usize>,
    /// Documents per domain label; unlabeled ones are counted under `""`.
    pub domains: BTreeMap<String, usize>,
}

fn length_bin(tokens: usize) -> usize {
    if tokens < 2 {
        0
    } else {
        tokens.ilog2() as usize
    }
}

pub fn stats(corpus: &[Document], spec: &TokenizerSpec) -> StatsReport {
    let lengths: Vec<usize> = corpus.par_iter().map(|d| spec.tokenize(&d.text).len()).collect();
    let mut report = StatsReport::default();
    for (d, &n) in corpus.iter().zip(&lengths) {
        report.documents += 1;
        report.tokens += n;
        let s = report.per_source.entry(d.source).or_default();
        s.documents += 1;
        s.tokens += n;
        let bin = length_bin(n);
        if report.length_histogram.len() <= bin {
            report.length_histogram.resize(bin + 1, 0);
        }
        report.length_histogram[bin] += 1;
        *report.domains.entry(d.domain_label.clone().unwrap_or_default()).or_default() += 1;
    }
    report
}
