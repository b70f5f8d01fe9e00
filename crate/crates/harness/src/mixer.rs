//! Deterministic request-mix construction.
//!
//! A seeded generator turns the dataset into a work list of valid and
//! invalid items. The same seed, ratio and length always produce the
//! same multiset of items (and the same order), so rejection counts are
//! reproducible run to run even though latencies are not.

use crate::corpus::{InvalidClass, ALL_CLASSES};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{RngExt as _, SeedableRng};
use std::collections::BTreeMap;
use trustlayer_core::schema::TransactionRecord;

#[derive(Debug, Clone)]
pub enum WorkItem {
    Valid(TransactionRecord),
    Invalid(InvalidClass, TransactionRecord),
}

impl WorkItem {
    pub fn kind(&self) -> &'static str {
        match self {
            WorkItem::Valid(_) => "valid",
            WorkItem::Invalid(class, _) => class.name(),
        }
    }
}

/// Draws `total` items; each is invalid with probability
/// `invalid_ratio`, its class chosen uniformly.
pub fn build_mix(
    records: &[TransactionRecord],
    invalid_ratio: f64,
    total: usize,
    seed: u64,
) -> Vec<WorkItem> {
    assert!(!records.is_empty(), "dataset must not be empty");
    assert!((0.0..=1.0).contains(&invalid_ratio), "ratio out of range");
    let mut rng = StdRng::seed_from_u64(seed);
    (0..total)
        .map(|_| {
            let record = records[rng.random_range(0..records.len())].clone();
            if rng.random::<f64>() < invalid_ratio {
                let class = ALL_CLASSES[rng.random_range(0..ALL_CLASSES.len())];
                WorkItem::Invalid(class, record)
            } else {
                WorkItem::Valid(record)
            }
        })
        .collect()
}

/// Builds a mix with exact counts: `valid` good items plus `invalid`
/// bad ones spread as evenly as possible across the classes, shuffled.
pub fn build_exact_mix(
    records: &[TransactionRecord],
    valid: usize,
    invalid: usize,
    seed: u64,
) -> Vec<WorkItem> {
    assert!(!records.is_empty(), "dataset must not be empty");
    let mut rng = StdRng::seed_from_u64(seed);
    let pick = |rng: &mut StdRng| records[rng.random_range(0..records.len())].clone();
    let mut items: Vec<WorkItem> = Vec::with_capacity(valid + invalid);
    for _ in 0..valid {
        let record = pick(&mut rng);
        items.push(WorkItem::Valid(record));
    }
    for i in 0..invalid {
        let class = ALL_CLASSES[i % ALL_CLASSES.len()];
        let record = pick(&mut rng);
        items.push(WorkItem::Invalid(class, record));
    }
    items.shuffle(&mut rng);
    items
}

/// Item counts by kind ("valid" or the class name).
pub fn mix_counts(items: &[WorkItem]) -> BTreeMap<&'static str, usize> {
    let mut counts = BTreeMap::new();
    for item in items {
        *counts.entry(item.kind()).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::load_embedded;

    #[test]
    fn same_seed_same_mix() {
        let records = load_embedded();
        let a = build_mix(&records, 0.3, 500, 7);
        let b = build_mix(&records, 0.3, 500, 7);
        assert_eq!(mix_counts(&a), mix_counts(&b));
        let kinds_a: Vec<_> = a.iter().map(WorkItem::kind).collect();
        let kinds_b: Vec<_> = b.iter().map(WorkItem::kind).collect();
        assert_eq!(kinds_a, kinds_b, "order is reproducible too");
    }

    #[test]
    fn different_seed_different_order() {
        let records = load_embedded();
        let a = build_mix(&records, 0.5, 500, 1);
        let b = build_mix(&records, 0.5, 500, 2);
        let kinds_a: Vec<_> = a.iter().map(WorkItem::kind).collect();
        let kinds_b: Vec<_> = b.iter().map(WorkItem::kind).collect();
        assert_ne!(kinds_a, kinds_b);
    }

    #[test]
    fn exact_mix_hits_requested_counts() {
        let records = load_embedded();
        let mix = build_exact_mix(&records, 1000, 1000, 42);
        assert_eq!(mix.len(), 2000);
        let counts = mix_counts(&mix);
        assert_eq!(counts["valid"], 1000);
        let invalid_total: usize = ALL_CLASSES
            .iter()
            .map(|c| counts.get(c.name()).copied().unwrap_or(0))
            .sum();
        assert_eq!(invalid_total, 1000);
        // 1000 = 7 * 142 + 6: six classes get one extra item.
        for class in ALL_CLASSES {
            let n = counts[class.name()];
            assert!((142..=143).contains(&n), "{}: {n}", class.name());
        }
    }

    #[test]
    fn zero_ratio_is_all_valid() {
        let records = load_embedded();
        let mix = build_mix(&records, 0.0, 200, 3);
        assert!(mix.iter().all(|i| matches!(i, WorkItem::Valid(_))));
    }
}
