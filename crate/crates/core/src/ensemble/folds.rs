use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Splits sample indices `0..drive_ids.len()` into `k` folds, keeping all
/// samples of one drive together.
///
/// Drives are shuffled from `seed`, stably sorted by size (largest first)
/// and dealt to the currently smallest fold. Indices within a fold are
/// ascending.
pub fn partition_folds<S: AsRef<str>>(drive_ids: &[S], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::invalid("fold count must be positive"));
    }
    if drive_ids.len() < k {
        return Err(Error::invalid(format!(
            "{} samples cannot fill {k} folds",
            drive_ids.len()
        )));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, d) in drive_ids.iter().enumerate() {
        groups.entry(d.as_ref()).or_default().push(i);
    }
    if groups.len() < k {
        return Err(Error::invalid(format!(
            "{} drives cannot fill {k} drive-disjoint folds",
            groups.len()
        )));
    }
    let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    groups.sort_by(|a, b| b.len().cmp(&a.len()));

    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for g in groups {
        let target = (0..k).min_by_key(|&f| (folds[f].len(), f)).expect("k > 0");
        folds[target].extend(g);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_sizes_for_single_sample_drives() {
        let ids: Vec<String> = (0..10).map(|i| format!("d{i}")).collect();
        let folds = partition_folds(&ids, 5, 0).unwrap();
        assert!(folds.iter().all(|f| f.len() == 2));
        let folds = partition_folds(&(0..11).map(|i| i.to_string()).collect::<Vec<_>>(), 5, 0).unwrap();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn too_few_samples_or_drives() {
        assert!(partition_folds(&["a", "b", "c"], 5, 0).is_err());
        assert!(partition_folds(&["a"; 10], 5, 0).is_err());
    }

    proptest! {
        #[test]
        fn disjoint_covering_drive_preserving(
            drives in prop::collection::vec(0u8..20, 5..80),
            seed in any::<u64>(),
        ) {
            let ids: Vec<String> = drives.iter().map(|d| format!("drive{d}")).collect();
            let distinct = drives.iter().collect::<std::collections::BTreeSet<_>>().len();
            let result = partition_folds(&ids, 5, seed);
            if distinct < 5 {
                prop_assert!(result.is_err());
                return Ok(());
            }
            let folds = result.unwrap();
            let mut seen = vec![usize::MAX; ids.len()];
            for (f, fold) in folds.iter().enumerate() {
                prop_assert!(!fold.is_empty());
                for &i in fold {
                    prop_assert_eq!(seen[i], usize::MAX);
                    seen[i] = f;
                }
            }
            prop_assert!(seen.iter().all(|&f| f != usize::MAX));
            for i in 0..ids.len() {
                for j in 0..ids.len() {
                    if ids[i] == ids[j] {
                        prop_assert_eq!(seen[i], seen[j]);
                    }
                }
            }
            prop_assert_eq!(partition_folds(&ids, 5, seed).unwrap(), folds);
        }
    }
}
