//! Train-set standardisation for externally supplied data.
//!
//! Statistics come from the training rows only and are then applied
//! unchanged to held-out rows, so nothing about the test set leaks into the
//! preprocessing. Constant columns carry no signal and would divide by zero,
//! so they are dropped and recorded. The state serialises to JSON next to
//! the fitted models, which is what makes the fold reproducible later.

use std::path::Path;

use serde::{Deserialize, Serialize};

use rumbench::{ChoiceDataset, Error, Result};

/// Means and standard deviations learned from a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalisationState {
    /// Attribute names kept, in dataset order.
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Constant columns removed from both folds.
    pub dropped: Vec<String>,
}

impl NormalisationState {
    /// Learn per-column statistics from `train`.
    pub fn fit(train: &ChoiceDataset) -> Result<Self> {
        let n = train.n_rows();
        if n < 2 {
            return Err(Error::config(
                "normalisation needs at least two training rows",
            ));
        }
        let mut names = Vec::new();
        let mut means = Vec::new();
        let mut stds = Vec::new();
        let mut dropped = Vec::new();
        for (c, name) in train.attribute_names().iter().enumerate() {
            let mean = (0..n).map(|i| train.row(i)[c]).sum::<f64>() / n as f64;
            let var = (0..n).map(|i| (train.row(i)[c] - mean).powi(2)).sum::<f64>()
                / (n as f64 - 1.0);
            let std = var.sqrt();
            if std == 0.0 {
                dropped.push(name.clone());
            } else {
                names.push(name.clone());
                means.push(mean);
                stds.push(std);
            }
        }
        if names.is_empty() {
            return Err(Error::config("every attribute column is constant"));
        }
        Ok(Self {
            names,
            means,
            stds,
            dropped,
        })
    }

    /// Standardise a dataset with these statistics.
    ///
    /// The dataset must carry exactly the columns seen at fit time (kept and
    /// dropped alike); dropped columns are removed, kept ones become
    /// `(x - mean) / std`.
    pub fn apply(&self, ds: &ChoiceDataset) -> Result<ChoiceDataset> {
        let expected = self.names.len() + self.dropped.len();
        if ds.attribute_names().len() != expected {
            return Err(Error::config(format!(
                "dataset has {} attribute columns, normalisation was fitted on {expected}",
                ds.attribute_names().len()
            )));
        }
        let mut keep = Vec::with_capacity(self.names.len());
        let mut kept_iter = self.names.iter();
        let mut next = kept_iter.next();
        for (c, name) in ds.attribute_names().iter().enumerate() {
            if Some(name) == next {
                keep.push(c);
                next = kept_iter.next();
            } else if !self.dropped.contains(name) {
                return Err(Error::config(format!(
                    "column {name:?} was not present when the normaliser was fitted"
                )));
            }
        }
        if keep.len() != self.names.len() {
            return Err(Error::config(
                "dataset columns do not match the fitted normalisation",
            ));
        }
        let n = ds.n_rows();
        let mut features = Vec::with_capacity(n * keep.len());
        for i in 0..n {
            let row = ds.row(i);
            for (k, &c) in keep.iter().enumerate() {
                features.push((row[c] - self.means[k]) / self.stds[k]);
            }
        }
        ChoiceDataset::new(
            self.names.clone(),
            ds.alternative_names().to_vec(),
            features,
            ds.chosen_all().to_vec(),
            ds.group_ids().map(<[String]>::to_vec),
            None,
        )
    }

    /// Map a standardised column value back to the original scale.
    pub fn invert(&self, column: usize, z: f64) -> f64 {
        z * self.stds[column] + self.means[column]
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::report::write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            Error::config(format!(
                "cannot read {}: {e}",
                path.as_ref().display()
            ))
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toy(features: Vec<f64>, names: &[&str]) -> ChoiceDataset {
        let n = features.len() / names.len();
        ChoiceDataset::new(
            names.iter().map(|s| s.to_string()).collect(),
            vec!["a".into(), "b".into()],
            features,
            vec![0; n],
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn standardises_and_inverts() {
        let train = toy(vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0], &["x", "y"]);
        let state = NormalisationState::fit(&train).unwrap();
        assert_eq!(state.means, [2.0, 20.0]);
        let out = state.apply(&train).unwrap();
        let mean0: f64 = (0..3).map(|i| out.row(i)[0]).sum::<f64>() / 3.0;
        let var0: f64 = (0..3).map(|i| out.row(i)[0].powi(2)).sum::<f64>() / 2.0;
        assert_abs_diff_eq!(mean0, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(var0, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(state.invert(0, out.row(2)[0]), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_columns_are_dropped_from_both_folds() {
        let train = toy(vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0], &["x", "flat"]);
        let state = NormalisationState::fit(&train).unwrap();
        assert_eq!(state.dropped, ["flat"]);
        assert_eq!(state.names, ["x"]);
        // A test fold where the column is not constant is still dropped: the
        // transformation is decided by the training data alone.
        let test = toy(vec![4.0, 5.0, 6.0, 7.0], &["x", "flat"]);
        let out = state.apply(&test).unwrap();
        assert_eq!(out.attribute_names(), ["x"]);
        assert_eq!(out.n_rows(), 2);
    }

    #[test]
    fn test_statistics_do_not_leak() {
        let train = toy(vec![0.0, 1.0, 2.0, 3.0], &["x", "y"]);
        let state = NormalisationState::fit(&train).unwrap();
        let test = toy(vec![100.0, 100.0], &["x", "y"]);
        let out = state.apply(&test).unwrap();
        // Transformed with train statistics: (100 - 1) / std([0, 2]).
        let expected = (100.0 - 1.0) / f64::sqrt(2.0);
        assert_abs_diff_eq!(out.row(0)[0], expected, epsilon = 1e-12);
    }

    #[test]
    fn mismatched_columns_are_rejected() {
        let train = toy(vec![1.0, 2.0, 3.0, 4.0], &["x", "y"]);
        let state = NormalisationState::fit(&train).unwrap();
        let other = toy(vec![1.0, 2.0, 3.0, 4.0], &["x", "z"]);
        assert!(state.apply(&other).is_err());
        let narrow = toy(vec![1.0, 2.0], &["x"]);
        assert!(state.apply(&narrow).is_err());
    }

    #[test]
    fn survives_a_json_round_trip() {
        let train = toy(vec![1.0, 9.0, 2.0, 9.0, 4.0, 9.0], &["x", "flat"]);
        let state = NormalisationState::fit(&train).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preprocess.json");
        state.save(&path).unwrap();
        let restored = NormalisationState::load(&path).unwrap();
        assert_eq!(restored, state);
    }
}
