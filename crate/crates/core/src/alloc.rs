//! Integer apportionment of a total over weighted keys.

use std::collections::BTreeMap;

/// Remainders closer than this count as tied.
const TIE_EPS: f64 = 1e-9;

/// Splits `n` by normalized `weights`: floors first, then one extra unit to
/// each of the largest remainders. Tied remainders go to the smallest key.
pub fn largest_remainder<K: Ord + Clone>(n: usize, weights: &BTreeMap<K, f64>) -> BTreeMap<K, usize> {
    let mut counts = BTreeMap::new();
    let mut rems = Vec::with_capacity(weights.len());
    let mut assigned = 0;
    for (k, &w) in weights {
        let exact = n as f64 * w;
        let floor = exact.floor() as usize;
        assigned += floor;
        counts.insert(k.clone(), floor);
        rems.push((k.clone(), exact - floor as f64));
    }
    // Key order going in makes the stable sort break ties by key.
    rems.sort_by(|a, b| {
        if (a.1 - b.1).abs() <= TIE_EPS {
            std::cmp::Ordering::Equal
        } else {
            b.1.total_cmp(&a.1)
        }
    });
    for (k, _) in rems.into_iter().take(n.saturating_sub(assigned)) {
        *counts.get_mut(&k).unwrap() += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AllocError<K> {
    /// A key's share exceeds what it has (strict mode).
    Shortfall { key: K, requested: usize, available: usize },
    /// Everything together cannot cover `n`.
    Insufficient { requested: usize, available: usize },
}

/// Like [`largest_remainder`], but never assigns a key more than
/// `available[key]`. With `redistribute`, saturated keys are fixed at their
/// availability and the rest of `n` is re-split over the others by weight;
/// otherwise the first saturated key is an error.
pub fn allocate<K: Ord + Clone>(
    n: usize,
    weights: &BTreeMap<K, f64>,
    available: &BTreeMap<K, usize>,
    redistribute: bool,
) -> Result<BTreeMap<K, usize>, AllocError<K>> {
    let avail = |k: &K| available.get(k).copied().unwrap_or(0);
    let mut alloc = largest_remainder(n, weights);
    if let Some((k, &c)) = alloc.iter().find(|(k, &c)| c > avail(k)) {
        if !redistribute {
            return Err(AllocError::Shortfall {
                key: k.clone(),
                requested: c,
                available: avail(k),
            });
        }
    } else {
        return Ok(alloc);
    }
    let total: usize = weights.keys().map(avail).sum();
    if total < n {
        return Err(AllocError::Insufficient {
            requested: n,
            available: total,
        });
    }
    let mut fixed: BTreeMap<K, usize> = BTreeMap::new();
    loop {
        let newly: Vec<K> = alloc
            .iter()
            .filter(|(k, &c)| !fixed.contains_key(*k) && c > avail(k))
            .map(|(k, _)| k.clone())
            .collect();
        if newly.is_empty() {
            return Ok(alloc);
        }
        for k in newly {
            let a = avail(&k);
            fixed.insert(k, a);
        }
        let used: usize = fixed.values().sum();
        let free: BTreeMap<K, f64> = weights
            .iter()
            .filter(|(k, _)| !fixed.contains_key(*k))
            .map(|(k, &w)| (k.clone(), w))
            .collect();
        let wsum: f64 = free.values().sum();
        let normalized: BTreeMap<K, f64> = if wsum > 0.0 {
            free.iter().map(|(k, &w)| (k.clone(), w / wsum)).collect()
        } else {
            // Only zero-weight keys have room left; split evenly.
            let m = free.len() as f64;
            free.keys().map(|k| (k.clone(), 1.0 / m)).collect()
        };
        alloc = largest_remainder(n - used, &normalized);
        alloc.extend(fixed.iter().map(|(k, &v)| (k.clone(), v)));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(pairs: &[(&'static str, f64)]) -> BTreeMap<&'static str, f64> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn thirds() {
        let t = w(&[("a", 1.0 / 3.0), ("b", 1.0 / 3.0), ("c", 1.0 / 3.0)]);
        let c: Vec<_> = largest_remainder(10, &t).into_values().collect();
        assert_eq!(c, [4, 3, 3]);
    }

    #[test]
    fn redistribution() {
        let t = w(&[("a", 0.5), ("b", 0.25), ("c", 0.25)]);
        let avail: BTreeMap<_, _> = [("a", 10), ("b", 100), ("c", 12)].into();
        let c = allocate(40, &t, &avail, true).unwrap();
        assert_eq!(c.values().copied().collect::<Vec<_>>(), [10, 18, 12]);
        assert!(matches!(
            allocate(40, &t, &avail, false),
            Err(AllocError::Shortfall { key: "a", requested: 20, available: 10 })
        ));
        assert!(matches!(allocate(200, &t, &avail, true), Err(AllocError::Insufficient { .. })));
    }
}
