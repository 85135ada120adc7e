use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{InstructionSample, SftError};
use crate::alloc::{self, largest_remainder, AllocError};
use crate::hash::hash_str;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShortfallPolicy {
    /// A domain with too few samples is an error.
    #[default]
    Strict,
    /// Take everything from short domains and reallocate the deficit over
    /// the others in proportion to their targets.
    Redistribute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub requested: BTreeMap<String, usize>,
    pub realized: BTreeMap<String, usize>,
    pub available: BTreeMap<String, usize>,
}

fn validate_target(target: &BTreeMap<String, f64>) -> Result<(), SftError> {
    if target.is_empty() {
        return Err(SftError::InvalidTarget("empty target distribution".into()));
    }
    if let Some((k, w)) = target.iter().find(|(_, w)| !w.is_finite() || **w < 0.0) {
        return Err(SftError::InvalidTarget(format!("weight for {k} is {w}")));
    }
    let sum: f64 = target.values().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(SftError::InvalidTarget(format!("fractions sum to {sum}")));
    }
    Ok(())
}

fn allocate(
    n: usize,
    target: &BTreeMap<String, f64>,
    available: &BTreeMap<String, usize>,
    policy: ShortfallPolicy,
) -> Result<BTreeMap<String, usize>, SftError> {
    alloc::allocate(n, target, available, policy == ShortfallPolicy::Redistribute).map_err(|e| match e {
        AllocError::Shortfall {
            key,
            requested,
            available,
        } => SftError::Shortfall {
            domain: key,
            requested,
            available,
        },
        AllocError::Insufficient { requested, available } => SftError::InsufficientPool { requested, available },
    })
}

/// Draws `n` samples whose per-domain counts follow `target`. Within a
/// domain the draw is without replacement and depends only on `seed`, the
/// domain name and the set of ids available. Output is grouped by domain
/// name, ids ascending within a domain.
pub fn diversity_sample(
    pool: Vec<InstructionSample>,
    target: &BTreeMap<String, f64>,
    n: usize,
    seed: u64,
    policy: ShortfallPolicy,
) -> Result<(Vec<InstructionSample>, DiversityReport), SftError> {
    validate_target(target)?;
    let mut by_domain: BTreeMap<String, Vec<InstructionSample>> = BTreeMap::new();
    for s in pool {
        if target.contains_key(&s.domain_label) {
            by_domain.entry(s.domain_label.clone()).or_default().push(s);
        }
    }
    let available: BTreeMap<String, usize> = target
        .keys()
        .map(|k| (k.clone(), by_domain.get(k).map_or(0, Vec::len)))
        .collect();
    let requested = largest_remainder(n, target);
    let alloc = allocate(n, target, &available, policy)?;

    let mut out = Vec::with_capacity(n);
    let mut realized = BTreeMap::new();
    for (domain, &count) in &alloc {
        realized.insert(domain.clone(), count);
        if count == 0 {
            continue;
        }
        let mut items = by_domain.remove(domain).unwrap_or_default();
        items.sort_by(|a, b| a.id.cmp(&b.id));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(hash_str(domain, 0));
        let mut picked = sample(&mut rng, items.len(), count).into_vec();
        picked.sort_unstable();
        let mut items: Vec<Option<InstructionSample>> = items.into_iter().map(Some).collect();
        out.extend(picked.into_iter().map(|i| items[i].take().expect("distinct indices")));
    }
    Ok((
        out,
        DiversityReport {
            requested,
            realized,
            available,
        },
    ))
}
