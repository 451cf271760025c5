use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use super::{Label, Manifest};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FoldMode {
    /// Label-stratified random partition.
    Shuffled,
    /// Fold `i` tests on the `i`-th center (lexicographic order).
    ByCenter,
}

/// Train/test split. Indices refer to manifest (dataset) order and are
/// sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Held-out center for by-center folds.
    pub test_center: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub mode: FoldMode,
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }
}

pub fn build_folds(manifest: &Manifest, mode: FoldMode, k: usize, seed: u64) -> Result<FoldPlan> {
    plan_folds(&manifest.labels(), &manifest.centers(), mode, k, seed)
}

pub fn plan_folds(
    labels: &[Label],
    centers: &[String],
    mode: FoldMode,
    k: usize,
    seed: u64,
) -> Result<FoldPlan> {
    let n = labels.len();
    if centers.len() != n {
        return Err(Error::shape("labels and centers differ in length"));
    }
    if k == 0 {
        return Err(Error::invalid("fold count must be positive"));
    }
    let tests: Vec<(Vec<usize>, Option<String>)> = match mode {
        FoldMode::Shuffled => {
            if n < k {
                return Err(Error::invalid(format!("{n} slides cannot fill {k} folds")));
            }
            let mut rng = rng::seeded(rng::derive(seed, rng::stream::FOLDS));
            let mut neg: Vec<usize> = (0..n).filter(|&i| !labels[i].is_positive()).collect();
            let mut pos: Vec<usize> = (0..n).filter(|&i| labels[i].is_positive()).collect();
            neg.shuffle(&mut rng);
            pos.shuffle(&mut rng);
            let mut tests = vec![(Vec::new(), None); k];
            for (slot, idx) in neg.into_iter().chain(pos).enumerate() {
                tests[slot % k].0.push(idx);
            }
            tests
        }
        FoldMode::ByCenter => {
            let distinct: BTreeSet<&String> = centers.iter().collect();
            if distinct.len() != k {
                return Err(Error::invalid(format!(
                    "by-center folds need exactly {k} centers, found {}",
                    distinct.len()
                )));
            }
            distinct
                .into_iter()
                .map(|c| ((0..n).filter(|&i| &centers[i] == c).collect(), Some(c.clone())))
                .collect()
        }
    };
    let folds = tests
        .into_iter()
        .map(|(mut test, test_center)| {
            test.sort_unstable();
            let train = (0..n).filter(|i| test.binary_search(i).is_err()).collect();
            Fold { train, test, test_center }
        })
        .collect();
    Ok(FoldPlan { mode, folds })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced(n: usize) -> Vec<Label> {
        (0..n).map(|i| if i % 2 == 0 { Label::Normal } else { Label::Tumor }).collect()
    }

    #[test]
    fn shuffled_ten_into_five() {
        let plan = plan_folds(&balanced(10), &vec!["c".into(); 10], FoldMode::Shuffled, 5, 1).unwrap();
        assert_eq!(plan.len(), 5);
        let mut all: Vec<usize> = Vec::new();
        for f in &plan.folds {
            assert_eq!(f.test.len(), 2);
            assert_eq!(f.train.len(), 8);
            all.extend(&f.test);
        }
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn by_center_tests_one_center_each() {
        let centers: Vec<String> = (0..15).map(|i| format!("c{}", i % 5)).collect();
        let plan = plan_folds(&balanced(15), &centers, FoldMode::ByCenter, 5, 0).unwrap();
        assert_eq!(plan.len(), 5);
        for (i, f) in plan.folds.iter().enumerate() {
            assert!(f.test.iter().all(|&t| centers[t] == format!("c{i}")));
            assert_eq!(f.test_center.as_deref(), Some(format!("c{i}").as_str()));
        }
        assert!(plan_folds(&balanced(15), &centers, FoldMode::ByCenter, 4, 0).is_err());
    }

    #[test]
    fn same_seed_same_plan() {
        let c = vec!["c".to_string(); 23];
        let a = plan_folds(&balanced(23), &c, FoldMode::Shuffled, 5, 9).unwrap();
        assert_eq!(a, plan_folds(&balanced(23), &c, FoldMode::Shuffled, 5, 9).unwrap());
        assert!(plan_folds(&balanced(3), &c[..3], FoldMode::Shuffled, 5, 9).is_err());
    }
}
