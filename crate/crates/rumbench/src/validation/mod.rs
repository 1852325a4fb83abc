//! Group-aware data splitting, cross-validation and hyperparameter search.
//!
//! Observations that share a group identifier (an individual answering
//! several survey waves, a household, a panel respondent) must land entirely
//! in the training or the evaluation side of any split; otherwise the model
//! is scored on decision makers it has already seen, inflating every metric.
//! The helpers here enforce that constraint for both plain train/test splits
//! and K-fold cross-validation. Rows without a group identifier count as
//! singleton groups.

pub mod hpo;

pub use hpo::{
    random_search, tpe_search, Assignment, Domain, HpoResult, ParamValue, SearchSpace,
    TpeConfig, Trial, TrialScore,
};

use rand::Rng;

use crate::dataset::ChoiceDataset;
use crate::error::{Error, Result};
use crate::metrics;
use crate::models::ChoiceModel;
use crate::rng;

/// Row membership of each cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    k: usize,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    /// Rows belonging to `fold`, in dataset order.
    pub fn fold_rows(&self, fold: usize) -> Vec<usize> {
        self.fold_of
            .iter()
            .enumerate()
            .filter(|(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    /// Rows belonging to every fold except `fold`, in dataset order.
    pub fn complement_rows(&self, fold: usize) -> Vec<usize> {
        self.fold_of
            .iter()
            .enumerate()
            .filter(|(_, &f)| f != fold)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Group labels per row: the declared identifier when present and non-empty,
/// otherwise a fresh singleton per row.
fn group_rows(dataset: &ChoiceDataset) -> Vec<Vec<usize>> {
    let mut order: Vec<Vec<usize>> = Vec::new();
    match dataset.group_ids() {
        None => {
            order.extend((0..dataset.n_rows()).map(|r| vec![r]));
        }
        Some(ids) => {
            let mut index: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
            for (r, id) in ids.iter().enumerate() {
                if id.is_empty() {
                    order.push(vec![r]);
                    continue;
                }
                match index.get(id.as_str()) {
                    Some(&g) => order[g].push(r),
                    None => {
                        index.insert(id, order.len());
                        order.push(vec![r]);
                    }
                }
            }
        }
    }
    order
}

/// Random train/test split that keeps groups intact.
///
/// Groups are visited in a seeded random order and assigned to the test side
/// until it reaches `test_fraction` of the rows, so the realised fraction
/// can overshoot by at most one group.
pub fn grouped_split(
    dataset: &ChoiceDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(ChoiceDataset, ChoiceDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::config("test_fraction must lie strictly between 0 and 1"));
    }
    let mut groups = group_rows(dataset);
    if groups.len() < 2 {
        return Err(Error::config(
            "cannot split a dataset whose rows all share one group",
        ));
    }
    let mut split_rng = rng::stream(seed, "split/order");
    for i in (1..groups.len()).rev() {
        let j = split_rng.random_range(0..=i);
        groups.swap(i, j);
    }

    let target = test_fraction * dataset.n_rows() as f64;
    let mut test_rows = Vec::new();
    let mut train_rows = Vec::new();
    for group in groups {
        if (test_rows.len() as f64) < target {
            test_rows.extend(group);
        } else {
            train_rows.extend(group);
        }
    }
    train_rows.sort_unstable();
    test_rows.sort_unstable();
    Ok((dataset.subset(&train_rows)?, dataset.subset(&test_rows)?))
}

/// Assign every group to one of `k` folds, balancing fold sizes.
///
/// Groups are placed largest-first onto the currently smallest fold, with a
/// seeded shuffle breaking ties among equal-sized groups; folds of singleton
/// groups therefore come out balanced to within one row.
pub fn grouped_kfold(dataset: &ChoiceDataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::config("cross-validation needs k >= 2"));
    }
    let mut groups = group_rows(dataset);
    if groups.len() < k {
        return Err(Error::config(format!(
            "{} groups cannot fill {k} folds",
            groups.len()
        )));
    }
    let mut fold_rng = rng::stream(seed, "kfold/order");
    for i in (1..groups.len()).rev() {
        let j = fold_rng.random_range(0..=i);
        groups.swap(i, j);
    }
    // Stable sort keeps the shuffled order within each size class.
    groups.sort_by_key(|g| std::cmp::Reverse(g.len()));

    let mut fold_sizes = vec![0usize; k];
    let mut fold_of = vec![0usize; dataset.n_rows()];
    for group in groups {
        let smallest = fold_sizes
            .iter()
            .enumerate()
            .min_by_key(|(_, &s)| s)
            .map(|(i, _)| i)
            .unwrap();
        fold_sizes[smallest] += group.len();
        for r in group {
            fold_of[r] = smallest;
        }
    }
    Ok(FoldAssignment { fold_of, k })
}

/// Per-fold evaluation metrics of one cross-validated estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct CvMetrics {
    pub fold_cross_entropy: Vec<f64>,
    pub fold_accuracy: Vec<f64>,
    pub fold_gmpca: Vec<f64>,
}

impl CvMetrics {
    pub fn mean_cross_entropy(&self) -> f64 {
        mean(&self.fold_cross_entropy)
    }

    pub fn mean_accuracy(&self) -> f64 {
        mean(&self.fold_accuracy)
    }

    pub fn mean_gmpca(&self) -> f64 {
        mean(&self.fold_gmpca)
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Fit on each fold's complement and score on the held-out fold.
///
/// `fit` receives the fold index and the training subset; failures are
/// reported with the fold attached.
pub fn cv_evaluate<F>(
    dataset: &ChoiceDataset,
    folds: &FoldAssignment,
    mut fit: F,
) -> Result<CvMetrics>
where
    F: FnMut(usize, &ChoiceDataset) -> Result<Box<dyn ChoiceModel>>,
{
    if folds.fold_of.len() != dataset.n_rows() {
        return Err(Error::dimension(format!(
            "fold assignment covers {} rows, dataset has {}",
            folds.fold_of.len(),
            dataset.n_rows()
        )));
    }
    let mut metrics_out = CvMetrics {
        fold_cross_entropy: Vec::with_capacity(folds.k),
        fold_accuracy: Vec::with_capacity(folds.k),
        fold_gmpca: Vec::with_capacity(folds.k),
    };
    for fold in 0..folds.k {
        let train = dataset.subset(&folds.complement_rows(fold))?;
        let valid = dataset.subset(&folds.fold_rows(fold))?;
        let model = fit(fold, &train)
            .map_err(|e| Error::config(format!("fold {fold} training failed: {e}")))?;
        let ce = metrics::cross_entropy(model.as_ref(), &valid)?;
        metrics_out.fold_cross_entropy.push(ce);
        metrics_out
            .fold_accuracy
            .push(metrics::accuracy(model.as_ref(), &valid)?);
        metrics_out.fold_gmpca.push(metrics::gmpca_from_cross_entropy(ce));
    }
    Ok(metrics_out)
}

/// Mean cross-validated cross-entropy, the objective the hyperparameter
/// search minimises.
pub fn cv_score<F>(dataset: &ChoiceDataset, folds: &FoldAssignment, fit: F) -> Result<TrialScore>
where
    F: FnMut(usize, &ChoiceDataset) -> Result<Box<dyn ChoiceModel>>,
{
    let metrics = cv_evaluate(dataset, folds, fit)?;
    Ok(TrialScore {
        score: metrics.mean_cross_entropy(),
        fold_scores: metrics.fold_cross_entropy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Model that always predicts the uniform distribution.
    struct UniformModel {
        n_features: usize,
        k: usize,
    }

    impl ChoiceModel for UniformModel {
        fn n_features(&self) -> usize {
            self.n_features
        }

        fn n_alternatives(&self) -> usize {
            self.k
        }

        fn predict_proba_row(&self, _row: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![1.0 / self.k as f64; self.k])
        }
    }

    fn dataset_with_groups(n_groups: usize, group_size: usize) -> ChoiceDataset {
        let n = n_groups * group_size;
        let features: Vec<f64> = (0..n * 2).map(|i| (i % 17) as f64 / 17.0).collect();
        let chosen: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let groups: Vec<String> = (0..n).map(|i| format!("g{}", i / group_size)).collect();
        ChoiceDataset::new(
            vec!["a".into(), "b".into()],
            vec!["1".into(), "2".into(), "3".into()],
            features,
            chosen,
            Some(groups),
            None,
        )
        .unwrap()
    }

    #[test]
    fn row_wise_split_hits_the_target_fraction() {
        let ds = dataset_with_groups(100, 1);
        let ds = ChoiceDataset::new(
            ds.attribute_names().to_vec(),
            ds.alternative_names().to_vec(),
            (0..100 * 2).map(|i| i as f64).collect(),
            ds.chosen_all().to_vec(),
            None,
            None,
        )
        .unwrap();
        let (train, test) = grouped_split(&ds, 0.3, 7).unwrap();
        assert_eq!(test.n_rows(), 30);
        assert_eq!(train.n_rows(), 70);
    }

    #[test]
    fn grouped_split_keeps_groups_intact() {
        let ds = dataset_with_groups(10, 10);
        let (train, test) = grouped_split(&ds, 0.3, 1).unwrap();
        assert_eq!(test.n_rows(), 30);
        let train_groups: std::collections::HashSet<_> =
            train.group_ids().unwrap().iter().cloned().collect();
        let test_groups: std::collections::HashSet<_> =
            test.group_ids().unwrap().iter().cloned().collect();
        assert!(train_groups.is_disjoint(&test_groups));
    }

    #[test]
    fn single_group_cannot_be_split() {
        let ds = ChoiceDataset::new(
            vec!["a".into()],
            vec!["1".into(), "2".into()],
            vec![0.1, 0.2, 0.3],
            vec![0, 1, 0],
            Some(vec!["same".into(); 3]),
            None,
        )
        .unwrap();
        assert!(grouped_split(&ds, 0.5, 0).is_err());
    }

    #[test]
    fn kfold_balances_singleton_groups() {
        let ds = dataset_with_groups(100, 1);
        let folds = grouped_kfold(&ds, 5, 3).unwrap();
        for fold in 0..5 {
            assert_eq!(folds.fold_rows(fold).len(), 20);
        }
        // Union of folds is the dataset, pairwise disjoint.
        let mut seen = vec![false; 100];
        for fold in 0..5 {
            for r in folds.fold_rows(fold) {
                assert!(!seen[r]);
                seen[r] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn kfold_keeps_groups_in_one_fold() {
        let ds = dataset_with_groups(20, 5);
        let folds = grouped_kfold(&ds, 4, 9).unwrap();
        let ids = ds.group_ids().unwrap();
        let mut fold_of_group: std::collections::HashMap<&String, usize> =
            std::collections::HashMap::new();
        for (r, id) in ids.iter().enumerate() {
            let f = folds.fold_of()[r];
            if let Some(&prev) = fold_of_group.get(id) {
                assert_eq!(prev, f, "group {id} straddles folds");
            } else {
                fold_of_group.insert(id, f);
            }
        }
    }

    #[test]
    fn kfold_requires_enough_groups() {
        let ds = dataset_with_groups(3, 4);
        assert!(grouped_kfold(&ds, 5, 0).is_err());
        assert!(grouped_kfold(&ds, 1, 0).is_err());
    }

    #[test]
    fn kfold_is_deterministic_per_seed() {
        let ds = dataset_with_groups(50, 2);
        let a = grouped_kfold(&ds, 5, 11).unwrap();
        let b = grouped_kfold(&ds, 5, 11).unwrap();
        assert_eq!(a, b);
        let c = grouped_kfold(&ds, 5, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn uniform_predictor_scores_ln_k_on_every_fold() {
        let ds = dataset_with_groups(60, 1);
        let folds = grouped_kfold(&ds, 5, 2).unwrap();
        let score = cv_score(&ds, &folds, |_, train| {
            Ok(Box::new(UniformModel {
                n_features: train.n_attributes(),
                k: train.n_alternatives(),
            }) as Box<dyn ChoiceModel>)
        })
        .unwrap();
        for fold_score in &score.fold_scores {
            assert_relative_eq!(*fold_score, 3.0f64.ln(), epsilon = 1e-12);
        }
        assert_relative_eq!(score.score, mean(&score.fold_scores), epsilon = 1e-12);
    }
}
