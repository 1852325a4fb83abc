//! Performance metrics and market-share machinery.
//!
//! Two scoring views are provided: hard-label accuracy and the geometric mean
//! probability of correct assignment (GMPCA), the probability-aware companion
//! metric. Market shares are the column means of predicted probabilities, and
//! the demand scenarios S1-S3 perturb the attributes of the first alternative
//! to probe how models extrapolate outside the training domain.

use serde::{Deserialize, Serialize};

use crate::dataset::ChoiceDataset;
use crate::error::{Error, Result};
use crate::models::ChoiceModel;

/// Probabilities are clipped below at this value before taking logs.
pub const PROB_FLOOR: f64 = 1e-15;

/// Columns of the synthetic layout describing the first alternative.
const PROMOTED_COLUMNS: [usize; 2] = [0, 1];
/// Additive shift applied by S2 to the promoted columns.
const S2_SHIFT: f64 = 0.3;
/// Multiplier applied by S3 to the promoted columns.
const S3_FACTOR: f64 = 1.3;

/// Counterfactual demand scenario over the synthetic six-column layout.
///
/// S1 leaves the data untouched, S2 promotes alternative 1 by adding 0.3 to
/// both of its attributes and S3 promotes it proportionally by scaling them
/// with 1.3. S2 and S3 push roughly half of uniform data outside the unit
/// cube, so they measure extrapolation rather than interpolation quality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    S1,
    S2,
    S3,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::S1, Scenario::S2, Scenario::S3];

    pub fn label(self) -> &'static str {
        match self {
            Scenario::S1 => "S1",
            Scenario::S2 => "S2",
            Scenario::S3 => "S3",
        }
    }

    /// Transform one feature row in place.
    ///
    /// The row must use the synthetic layout `x1, I1, x2, I2, x3, I3`.
    pub fn transform_row(self, row: &mut [f64]) -> Result<()> {
        if row.len() != 6 {
            return Err(Error::dimension(format!(
                "scenario transforms expect the 6-column synthetic layout, got {} columns",
                row.len()
            )));
        }
        match self {
            Scenario::S1 => {}
            Scenario::S2 => {
                for c in PROMOTED_COLUMNS {
                    row[c] += S2_SHIFT;
                }
            }
            Scenario::S3 => {
                for c in PROMOTED_COLUMNS {
                    row[c] *= S3_FACTOR;
                }
            }
        }
        Ok(())
    }

    /// Apply the transform to every row of a dataset, leaving labels intact.
    pub fn apply(self, dataset: &ChoiceDataset) -> Result<ChoiceDataset> {
        if dataset.n_attributes() != 6 {
            return Err(Error::dimension(format!(
                "scenario transforms expect the 6-column synthetic layout, got {} columns",
                dataset.n_attributes()
            )));
        }
        let mut features = Vec::with_capacity(dataset.n_rows() * 6);
        features.extend(
            (0..dataset.n_rows())
                .flat_map(|i| dataset.row(i).iter().copied()),
        );
        for row in features.chunks_mut(6) {
            self.transform_row(row)?;
        }
        dataset.with_features(features)
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S1" => Ok(Scenario::S1),
            "S2" => Ok(Scenario::S2),
            "S3" => Ok(Scenario::S3),
            other => Err(Error::config(format!("unknown scenario {other:?}"))),
        }
    }
}

/// Accuracy (percent) of hard label predictions against observed choices.
pub fn accuracy_of(predicted: &[usize], observed: &[usize]) -> Result<f64> {
    if predicted.len() != observed.len() {
        return Err(Error::dimension(format!(
            "{} predictions for {} observations",
            predicted.len(),
            observed.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::config("accuracy of an empty dataset is undefined"));
    }
    let hits = predicted
        .iter()
        .zip(observed)
        .filter(|(p, o)| p == o)
        .count();
    Ok(100.0 * hits as f64 / predicted.len() as f64)
}

/// Accuracy (percent) of a fitted model on a dataset.
pub fn accuracy(model: &dyn ChoiceModel, dataset: &ChoiceDataset) -> Result<f64> {
    accuracy_of(&model.predict(dataset)?, dataset.chosen_all())
}

/// Mean negative log probability of the chosen alternatives.
///
/// Probabilities are clipped below at [`PROB_FLOOR`] so a model that assigns
/// zero probability to an observed choice yields a large but finite loss.
pub fn cross_entropy_from_probs(
    probs: &[f64],
    n_alternatives: usize,
    observed: &[usize],
) -> Result<f64> {
    if n_alternatives == 0 || probs.len() != observed.len() * n_alternatives {
        return Err(Error::dimension(format!(
            "probability matrix of {} entries does not match {} rows x {} alternatives",
            probs.len(),
            observed.len(),
            n_alternatives
        )));
    }
    if observed.is_empty() {
        return Err(Error::config("cross-entropy of an empty dataset is undefined"));
    }
    let mut total = 0.0;
    for (n, &chosen) in observed.iter().enumerate() {
        if chosen >= n_alternatives {
            return Err(Error::domain(format!(
                "label {chosen} out of range for {n_alternatives} alternatives"
            )));
        }
        total -= probs[n * n_alternatives + chosen].max(PROB_FLOOR).ln();
    }
    Ok(total / observed.len() as f64)
}

/// Cross-entropy of a fitted model on a dataset.
pub fn cross_entropy(model: &dyn ChoiceModel, dataset: &ChoiceDataset) -> Result<f64> {
    cross_entropy_from_probs(
        &model.predict_proba(dataset)?,
        model.n_alternatives(),
        dataset.chosen_all(),
    )
}

/// GMPCA (percent) corresponding to a cross-entropy value.
///
/// The geometric mean of chosen-alternative probabilities equals
/// `exp(-cross_entropy)`, so the conversion is exact and avoids underflow of
/// the raw product at large sample sizes.
pub fn gmpca_from_cross_entropy(ce: f64) -> f64 {
    100.0 * (-ce).exp()
}

/// GMPCA (percent) of a fitted model on a dataset.
pub fn gmpca(model: &dyn ChoiceModel, dataset: &ChoiceDataset) -> Result<f64> {
    Ok(gmpca_from_cross_entropy(cross_entropy(model, dataset)?))
}

/// Market shares (percent per alternative) implied by a probability matrix.
pub fn market_shares_from_probs(probs: &[f64], n_alternatives: usize) -> Result<Vec<f64>> {
    if n_alternatives == 0 || probs.len() % n_alternatives != 0 {
        return Err(Error::dimension(format!(
            "probability matrix of {} entries is not divisible into {} alternatives",
            probs.len(),
            n_alternatives
        )));
    }
    if probs.is_empty() {
        return Err(Error::config("market shares of an empty dataset are undefined"));
    }
    let n_rows = probs.len() / n_alternatives;
    let mut shares = vec![0.0; n_alternatives];
    for row in probs.chunks_exact(n_alternatives) {
        for (s, p) in shares.iter_mut().zip(row) {
            *s += p;
        }
    }
    for s in shares.iter_mut() {
        *s *= 100.0 / n_rows as f64;
    }
    Ok(shares)
}

/// Market shares (percent) estimated by a fitted model on a dataset.
pub fn market_shares(model: &dyn ChoiceModel, dataset: &ChoiceDataset) -> Result<Vec<f64>> {
    market_shares_from_probs(&model.predict_proba(dataset)?, model.n_alternatives())
}

/// Mean absolute difference between estimated and reference shares.
pub fn share_error(shares: &[f64], reference: &[f64]) -> Result<f64> {
    if shares.len() != reference.len() {
        return Err(Error::dimension(format!(
            "share vectors of lengths {} and {}",
            shares.len(),
            reference.len()
        )));
    }
    if shares.is_empty() {
        return Err(Error::config("share error of empty vectors is undefined"));
    }
    let total: f64 = shares
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(total / shares.len() as f64)
}

/// Accuracy and GMPCA of one model on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub dataset: String,
    pub n_rows: usize,
    pub accuracy: f64,
    pub gmpca: f64,
}

impl MetricReport {
    pub fn compute(
        model_id: impl Into<String>,
        dataset_id: impl Into<String>,
        model: &dyn ChoiceModel,
        dataset: &ChoiceDataset,
    ) -> Result<Self> {
        Ok(MetricReport {
            model: model_id.into(),
            dataset: dataset_id.into(),
            n_rows: dataset.n_rows(),
            accuracy: accuracy(model, dataset)?,
            gmpca: gmpca(model, dataset)?,
        })
    }
}
