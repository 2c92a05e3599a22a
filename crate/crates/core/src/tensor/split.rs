use rand::seq::{index, SliceRandom};

use super::{DatasetSplit, EntryBatch, ObservedEntry};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// Uniform random train/test split. `round(test_fraction * n)` entries go to
/// the test side; both sides keep the input order.
pub fn split_train_test(
    entries: &[ObservedEntry],
    test_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if entries.len() < 2 {
        return Err(Error::arg("splitting needs at least two entries"));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::arg(format!("test fraction {test_fraction} not in (0, 1)")));
    }
    let n = entries.len();
    let n_test = (test_fraction * n as f64).round() as usize;
    let mut rng = stream(seed, Purpose::Split);
    let mut is_test = vec![false; n];
    for i in index::sample(&mut rng, n, n_test) {
        is_test[i] = true;
    }
    let (mut train, mut test) = (Vec::with_capacity(n - n_test), Vec::with_capacity(n_test));
    for (e, t) in entries.iter().zip(is_test) {
        if t {
            test.push(e.clone());
        } else {
            train.push(e.clone());
        }
    }
    Ok(DatasetSplit { train, test })
}

/// Shuffles with a seeded Fisher-Yates pass and chunks into batches of
/// `batch_size` (the last batch may be shorter). Ordinals start at 0.
pub fn partition_stream(
    entries: &[ObservedEntry],
    batch_size: usize,
    seed: u64,
) -> Result<Vec<EntryBatch>> {
    if batch_size == 0 {
        return Err(Error::arg("batch size must be positive"));
    }
    let mut shuffled = entries.to_vec();
    shuffled.shuffle(&mut stream(seed, Purpose::Shuffle));
    shuffled
        .chunks(batch_size)
        .enumerate()
        .map(|(i, chunk)| EntryBatch::new(i as u64, chunk.to_vec()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn entries(n: usize) -> Vec<ObservedEntry> {
        (0..n).map(|i| ObservedEntry::new(vec![i, i % 7], i as f64 * 0.5)).collect()
    }

    #[test]
    fn ten_entries_tenth_fraction() {
        let s = split_train_test(&entries(10), 0.1, 42).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (9, 1));
    }

    #[test]
    fn split_is_deterministic() {
        let e = entries(50);
        assert_eq!(split_train_test(&e, 0.3, 7).unwrap(), split_train_test(&e, 0.3, 7).unwrap());
        assert_ne!(split_train_test(&e, 0.3, 7).unwrap(), split_train_test(&e, 0.3, 8).unwrap());
    }

    #[test]
    fn movielens_sized_split() {
        let e: Vec<_> = (0..1_000_209).map(|i| ObservedEntry::new(vec![i], 1.0)).collect();
        let s = split_train_test(&e, 0.1, 3).unwrap();
        assert!((s.test.len() as i64 - 100_021).abs() <= 1);
        assert_eq!(s.train.len() + s.test.len(), 1_000_209);
    }

    #[test]
    fn split_rejects_tiny_input_and_bad_fraction() {
        assert!(split_train_test(&entries(1), 0.5, 0).is_err());
        assert!(split_train_test(&[], 0.5, 0).is_err());
        assert!(split_train_test(&entries(5), 1.0, 0).is_err());
    }

    #[test]
    fn chunk_sizes() {
        let sizes: Vec<_> = partition_stream(&entries(1000), 256, 1).unwrap().iter().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![256, 256, 256, 232]);
        let one = partition_stream(&entries(5), 10, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].len(), 5);
        for bs in [64, 128, 256, 512] {
            let b = partition_stream(&entries(1000), bs, 2).unwrap();
            assert_eq!(b.len(), 1000usize.div_ceil(bs));
        }
    }

    #[test]
    fn zero_batch_size_is_rejected() {
        assert!(partition_stream(&entries(3), 0, 1).is_err());
    }

    fn sort_key(e: &ObservedEntry) -> (Vec<usize>, u64) {
        (e.index.clone(), e.value.to_bits())
    }

    proptest! {
        #[test]
        fn partition_is_a_permutation(n in 0usize..300, bs in 1usize..50, seed in any::<u64>()) {
            let input = entries(n);
            let batches = partition_stream(&input, bs, seed).unwrap();
            let ordinals: Vec<u64> = batches.iter().map(|b| b.ordinal).collect();
            prop_assert!(ordinals.windows(2).all(|w| w[0] < w[1]));
            let mut flat: Vec<_> = batches.into_iter().flat_map(|b| b.entries).map(|e| sort_key(&e)).collect();
            let mut want: Vec<_> = input.iter().map(sort_key).collect();
            flat.sort();
            want.sort();
            prop_assert_eq!(flat, want);
        }

        #[test]
        fn split_sides_are_disjoint(n in 2usize..300, frac in 0.05f64..0.95, seed in any::<u64>()) {
            let input = entries(n);
            let s = split_train_test(&input, frac, seed).unwrap();
            let train: HashSet<_> = s.train.iter().map(|e| e.index.clone()).collect();
            prop_assert!(s.test.iter().all(|e| !train.contains(&e.index)));
            prop_assert_eq!(s.train.len() + s.test.len(), n);
            prop_assert!((s.test.len() as f64 - frac * n as f64).abs() <= 1.0);
        }
    }
}
