use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, Result};

/// Disjoint train/validation index sets, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// 80/20 split: `floor(n / 5)` validation examples, the rest train.
pub fn make_split(n: usize, seed: u64) -> Result<DatasetSplit> {
    if n < 5 {
        return Err(DatasetError::TooFewForSplit(n));
    }
    let perm = permutation(n, seed);
    let n_val = n / 5;
    let mut validation = perm[..n_val].to_vec();
    let mut train = perm[n_val..].to_vec();
    validation.sort_unstable();
    train.sort_unstable();
    Ok(DatasetSplit { train, validation })
}

/// K random folds; the first `n % k` folds carry one extra example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.folds.iter().map(Vec::len).collect()
    }

    /// Fold `i` held out for validation, the remaining folds for training.
    pub fn split(&self, i: usize) -> DatasetSplit {
        let mut train: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        train.sort_unstable();
        DatasetSplit {
            train,
            validation: self.folds[i].clone(),
        }
    }
}

pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || n < k {
        return Err(DatasetError::BadFolds { n, k });
    }
    let perm = permutation(n, seed);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        let mut fold = perm[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(FoldPlan { folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn split_sizes() {
        let s = make_split(816, 7).unwrap();
        assert_eq!((s.train.len(), s.validation.len()), (653, 163));
        let s = make_split(10, 7).unwrap();
        assert_eq!((s.train.len(), s.validation.len()), (8, 2));
        assert!(matches!(make_split(4, 0), Err(DatasetError::TooFewForSplit(4))));
    }

    #[test]
    fn split_is_seeded() {
        assert_eq!(make_split(100, 3).unwrap(), make_split(100, 3).unwrap());
        assert_ne!(make_split(100, 3).unwrap(), make_split(100, 4).unwrap());
    }

    #[test]
    fn fold_sizes() {
        assert_eq!(make_folds(816, 5, 1).unwrap().sizes(), [164, 163, 163, 163, 163]);
        assert_eq!(make_folds(10, 5, 1).unwrap().sizes(), [2; 5]);
        assert!(make_folds(4, 5, 1).is_err());
        assert!(make_folds(10, 1, 1).is_err());
    }

    fn check_cover(parts: &[&[usize]], n: usize) {
        let mut all: Vec<usize> = parts.iter().flat_map(|p| p.iter().copied()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn split_disjoint_and_covering(n in 5usize..400, seed in any::<u64>()) {
            let s = make_split(n, seed).unwrap();
            prop_assert_eq!(s.validation.len(), n / 5);
            check_cover(&[&s.train, &s.validation], n);
        }

        #[test]
        fn folds_disjoint_covering_balanced(n in 2usize..400, k in 2usize..12, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let plan = make_folds(n, k, seed).unwrap();
            let parts: Vec<&[usize]> = plan.folds.iter().map(Vec::as_slice).collect();
            check_cover(&parts, n);
            let sizes = plan.sizes();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for i in 0..k {
                let s = plan.split(i);
                prop_assert!(s.validation.iter().all(|v| s.train.binary_search(v).is_err()));
                check_cover(&[&s.train, &s.validation], n);
            }
        }
    }
}
