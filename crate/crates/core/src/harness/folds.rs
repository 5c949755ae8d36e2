use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;

/// Seeded assignment of tracts to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub seed: u64,
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in self.assignment.values() {
            s[f] += 1;
        }
        s
    }

    /// Fold index per id, in the order given; `None` if an id is unassigned.
    pub fn row_folds(&self, ids: &[String]) -> Option<Vec<usize>> {
        ids.iter().map(|id| self.assignment.get(id).copied()).collect()
    }
}

/// Shuffles the sorted ids with a ChaCha8 stream seeded by `seed`, then cuts the
/// sequence into `k` contiguous chunks; the first `n mod k` chunks get one extra.
pub fn kfold_split(tract_ids: &[String], k: usize, seed: u64) -> Result<FoldAssignment, HarnessError> {
    if k < 2 {
        return Err(HarnessError::BadK(k));
    }
    let mut ids: Vec<&String> = tract_ids.iter().collect();
    ids.sort();
    ids.dedup();
    let n = ids.len();
    if n < k {
        return Err(HarnessError::TooFewTracts { n, k });
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, rem) = (n / k, n % k);
    let mut assignment = BTreeMap::new();
    let mut it = ids.into_iter();
    for fold in 0..k {
        for id in it.by_ref().take(base + usize::from(fold < rem)) {
            assignment.insert(id.clone(), fold);
        }
    }
    Ok(FoldAssignment { seed, k, assignment })
}

/// Mixes `seed` and `tag` into an independent stream seed (splitmix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
