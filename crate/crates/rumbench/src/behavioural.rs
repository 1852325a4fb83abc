//! Derivative-based behavioural indicators.
//!
//! Any probabilistic choice model exposes marginal rates of substitution
//! through its choice probabilities: the ratio of the probability derivative
//! with respect to one attribute to the derivative with respect to income (or
//! cost) estimates willingness to pay without access to utilities. For the
//! MNL the same quantities have closed forms, which double as oracles for the
//! numeric path.
//!
//! Derivatives are central divided differences, `(s(x+h) - s(x-h)) / 2h`.
//! A ratio is *invalid* when either derivative is non-finite or the
//! denominator is exactly zero; invalidity is recorded, never hidden.
//! Population reports screen the valid values with a repeated IQR filter and
//! summarise the survivors by quartiles; an indicator is *consistent* only
//! when zero lies outside `[Q1, Q3]`.

use serde::{Deserialize, Serialize};

use crate::dataset::ChoiceDataset;
use crate::error::{Error, Result};
use crate::models::{ChoiceModel, Mnl, MnlDesign};
use crate::synth::GroundTruth;

/// Default finite-difference step for unit-cube synthetic attributes.
pub const DEFAULT_H: f64 = 0.025;

/// Default outlier-screening multiplier.
pub const DEFAULT_IQR_K: f64 = 1.5;

/// Grid resolution of probability sweeps.
pub const SWEEP_POINTS: usize = 201;

/// One numeric derivative (or derivative ratio) with a validity flag.
///
/// `valid` implies `value` is finite. The raw value is kept even when
/// invalid so callers can inspect what went wrong.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeEstimate {
    pub value: f64,
    pub valid: bool,
}

impl DerivativeEstimate {
    fn finite(value: f64) -> Self {
        DerivativeEstimate {
            value,
            valid: value.is_finite(),
        }
    }

    fn invalid(value: f64) -> Self {
        DerivativeEstimate { value, valid: false }
    }
}

/// Where and how to differentiate: which alternative's probability, which
/// attribute columns play the target and income roles, and the step sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorConfig {
    /// Alternative whose probability is differentiated.
    pub alternative: usize,
    /// Numerator attribute column (the priced attribute).
    pub target_attr: usize,
    /// Denominator attribute column (income or cost).
    pub income_attr: usize,
    /// Step for the target attribute.
    pub h: f64,
    /// Step for the income attribute; defaults to `h`.
    #[serde(default)]
    pub h_income: Option<f64>,
    /// IQR screening multiplier.
    #[serde(default = "default_iqr_k")]
    pub iqr_k: f64,
}

fn default_iqr_k() -> f64 {
    DEFAULT_IQR_K
}

impl IndicatorConfig {
    pub fn new(alternative: usize, target_attr: usize, income_attr: usize) -> Self {
        IndicatorConfig {
            alternative,
            target_attr,
            income_attr,
            h: DEFAULT_H,
            h_income: None,
            iqr_k: DEFAULT_IQR_K,
        }
    }

    /// The canonical synthetic setup: first alternative, its `x` attribute
    /// over its income attribute, h = 0.025.
    pub fn synthetic() -> Self {
        IndicatorConfig::new(0, 0, 1)
    }

    pub fn income_step(&self) -> f64 {
        self.h_income.unwrap_or(self.h)
    }

    pub fn validate(&self, n_attributes: usize, n_alternatives: usize) -> Result<()> {
        if self.alternative >= n_alternatives {
            return Err(Error::dimension(format!(
                "alternative {} out of range for {} alternatives",
                self.alternative, n_alternatives
            )));
        }
        if self.target_attr >= n_attributes || self.income_attr >= n_attributes {
            return Err(Error::dimension(format!(
                "attribute indices ({}, {}) out of range for {} attributes",
                self.target_attr, self.income_attr, n_attributes
            )));
        }
        if !(self.h > 0.0) || !(self.income_step() > 0.0) {
            return Err(Error::config("finite-difference steps must be positive"));
        }
        if !(self.iqr_k > 0.0) {
            return Err(Error::config("iqr_k must be positive"));
        }
        Ok(())
    }
}

/// Central divided difference of the model's choice probability for
/// `alternative` with respect to attribute `attr` at `row`.
///
/// Exact for probabilities affine in the attribute; O(h^2) otherwise.
/// Out-of-range indices, non-positive steps and prediction failures yield an
/// invalid estimate rather than an error: invalidity is data here.
pub fn central_diff(
    model: &dyn ChoiceModel,
    row: &[f64],
    alternative: usize,
    attr: usize,
    h: f64,
) -> DerivativeEstimate {
    if attr >= row.len() || alternative >= model.n_alternatives() || !(h > 0.0) {
        return DerivativeEstimate::invalid(f64::NAN);
    }
    let mut shifted = row.to_vec();
    shifted[attr] = row[attr] + h;
    let plus = match model.predict_proba_row(&shifted) {
        Ok(p) => p[alternative],
        Err(_) => return DerivativeEstimate::invalid(f64::NAN),
    };
    shifted[attr] = row[attr] - h;
    let minus = match model.predict_proba_row(&shifted) {
        Ok(p) => p[alternative],
        Err(_) => return DerivativeEstimate::invalid(f64::NAN),
    };
    DerivativeEstimate::finite((plus - minus) / (2.0 * h))
}

/// Willingness to pay of one individual: the ratio of the probability
/// derivative w.r.t. the target attribute to the derivative w.r.t. income.
///
/// Invalid when either derivative is invalid or the denominator is exactly
/// zero (a locally constant model); a zero numerator over a nonzero
/// denominator is a valid zero.
pub fn wtp_individual(
    model: &dyn ChoiceModel,
    row: &[f64],
    cfg: &IndicatorConfig,
) -> DerivativeEstimate {
    let num = central_diff(model, row, cfg.alternative, cfg.target_attr, cfg.h);
    let den = central_diff(
        model,
        row,
        cfg.alternative,
        cfg.income_attr,
        cfg.income_step(),
    );
    let ratio = num.value / den.value;
    if !num.valid || !den.valid || den.value == 0.0 {
        return DerivativeEstimate::invalid(ratio);
    }
    DerivativeEstimate::finite(ratio)
}

/// Marginal effect of the target attribute on the configured alternative's
/// probability, by central difference.
pub fn generic_marginal_effect(
    model: &dyn ChoiceModel,
    row: &[f64],
    cfg: &IndicatorConfig,
) -> DerivativeEstimate {
    central_diff(model, row, cfg.alternative, cfg.target_attr, cfg.h)
}

/// Arc elasticity: the marginal effect divided by the alternative's
/// probability. Invalid when the probability is zero.
pub fn generic_elasticity(
    model: &dyn ChoiceModel,
    row: &[f64],
    cfg: &IndicatorConfig,
) -> DerivativeEstimate {
    let effect = generic_marginal_effect(model, row, cfg);
    let p = match model.predict_proba_row(row) {
        Ok(probs) => probs[cfg.alternative],
        Err(_) => return DerivativeEstimate::invalid(f64::NAN),
    };
    let value = effect.value / p;
    if !effect.valid || p == 0.0 {
        return DerivativeEstimate::invalid(value);
    }
    DerivativeEstimate::finite(value)
}

/// Closed-form MNL indicators at one row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MnlIndicators {
    pub marginal_effect: f64,
    pub elasticity: f64,
    pub wtp: f64,
}

/// Analytic marginal effect, elasticity and WTP for a fitted MNL with
/// per-alternative linear utilities.
///
/// With `i` the alternative owning the target attribute and `j` the
/// configured one: the marginal effect is `P_j (1 - P_j) beta_k` when
/// `j = i` and `-P_j P_i beta_k` otherwise; the elasticity divides out
/// `P_j`; WTP is the coefficient ratio `beta_k / beta_I`.
pub fn analytic_indicators_mnl(
    model: &Mnl,
    row: &[f64],
    cfg: &IndicatorConfig,
) -> Result<MnlIndicators> {
    let MnlDesign::PerAlternative { attrs_per_alt, .. } = model.design() else {
        return Err(Error::config(
            "analytic indicators require the per-alternative utility layout",
        ));
    };
    cfg.validate(model.n_features(), model.n_alternatives())?;
    let probs = model.predict_proba_row(row)?;
    let j = cfg.alternative;
    let target_owner = cfg.target_attr / attrs_per_alt;
    let beta_k = model.coefficient(target_owner, cfg.target_attr % attrs_per_alt)?;
    let own = if j == target_owner { 1.0 } else { 0.0 };
    let elasticity = (own - probs[target_owner]) * beta_k;
    let marginal_effect = probs[j] * elasticity;
    let income_owner = cfg.income_attr / attrs_per_alt;
    let beta_i = model.coefficient(income_owner, cfg.income_attr % attrs_per_alt)?;
    if beta_i == 0.0 {
        return Err(Error::domain(
            "analytic WTP undefined for a zero income coefficient",
        ));
    }
    Ok(MnlIndicators {
        marginal_effect,
        elasticity,
        wtp: beta_k / beta_i,
    })
}

/// Population WTP summary: raw estimates, screening metadata and quartiles.
///
/// The quartiles and the consistency verdict are computed on the IQR-filtered
/// values and are `None` when no valid estimate survives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WtpReport {
    /// Per-row estimates in dataset order.
    pub estimates: Vec<DerivativeEstimate>,
    /// Percentage of rows with an invalid estimate, in [0, 100].
    pub invalid_fraction: f64,
    /// Valid values that survived the IQR screen, in dataset order.
    pub filtered: Vec<f64>,
    pub q1: Option<f64>,
    pub median: Option<f64>,
    pub q3: Option<f64>,
    /// `Some(false)` when zero lies in [Q1, Q3]; `None` when undefined.
    pub consistent: Option<bool>,
}

impl WtpReport {
    fn from_estimates(estimates: Vec<DerivativeEstimate>, iqr_k: f64) -> Self {
        let n = estimates.len();
        let valid: Vec<f64> = estimates
            .iter()
            .filter(|e| e.valid)
            .map(|e| e.value)
            .collect();
        let invalid_fraction = 100.0 * (n - valid.len()) as f64 / n as f64;
        let filtered = iqr_filter(&valid, iqr_k);
        let mut sorted = filtered.clone();
        sorted.sort_by(f64::total_cmp);
        let (q1, median, q3, consistent) = if sorted.is_empty() {
            (None, None, None, None)
        } else {
            let q1 = quantile_sorted(&sorted, 0.25);
            let q3 = quantile_sorted(&sorted, 0.75);
            (
                Some(q1),
                Some(quantile_sorted(&sorted, 0.5)),
                Some(q3),
                Some(!(q1 <= 0.0 && 0.0 <= q3)),
            )
        };
        WtpReport {
            estimates,
            invalid_fraction,
            filtered,
            q1,
            median,
            q3,
            consistent,
        }
    }

    pub fn summary(&self) -> WtpSummary {
        WtpSummary {
            n_rows: self.estimates.len(),
            invalid_fraction: self.invalid_fraction,
            n_filtered: self.filtered.len(),
            q1: self.q1,
            median: self.median,
            q3: self.q3,
            consistent: self.consistent,
        }
    }

    /// Per-individual values as CSV (`row,value,valid`).
    pub fn write_estimates_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["row", "value", "valid"])?;
        for (i, e) in self.estimates.iter().enumerate() {
            writer.write_record([i.to_string(), e.value.to_string(), e.valid.to_string()])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Compact serialisable view of a [`WtpReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WtpSummary {
    pub n_rows: usize,
    pub invalid_fraction: f64,
    pub n_filtered: usize,
    pub q1: Option<f64>,
    pub median: Option<f64>,
    pub q3: Option<f64>,
    pub consistent: Option<bool>,
}

/// WTP for every row of a dataset, screened and summarised.
pub fn wtp_population(
    model: &dyn ChoiceModel,
    dataset: &ChoiceDataset,
    cfg: &IndicatorConfig,
) -> Result<WtpReport> {
    cfg.validate(dataset.n_attributes(), model.n_alternatives())?;
    if dataset.n_attributes() != model.n_features() {
        return Err(Error::dimension(format!(
            "model expects {} features, dataset has {}",
            model.n_features(),
            dataset.n_attributes()
        )));
    }
    if dataset.n_rows() == 0 {
        return Err(Error::config("cannot summarise an empty dataset"));
    }
    let estimates: Vec<DerivativeEstimate> = (0..dataset.n_rows())
        .map(|i| wtp_individual(model, dataset.row(i), cfg))
        .collect();
    Ok(WtpReport::from_estimates(estimates, cfg.iqr_k))
}

/// Value of time: WTP with time and cost in the target and income roles and
/// per-attribute steps of 5% of each column's standard deviation.
pub fn vot(
    model: &dyn ChoiceModel,
    dataset: &ChoiceDataset,
    time_attr: usize,
    cost_attr: usize,
    alternative: usize,
) -> Result<WtpReport> {
    let n = dataset.n_attributes();
    if time_attr >= n || cost_attr >= n {
        return Err(Error::dimension(format!(
            "time/cost columns ({time_attr}, {cost_attr}) out of range for {n} attributes"
        )));
    }
    let h_time = 0.05 * dataset.column_std(time_attr);
    let h_cost = 0.05 * dataset.column_std(cost_attr);
    if !(h_time > 0.0) || !(h_cost > 0.0) {
        return Err(Error::domain(
            "time or cost column has zero variance; no usable step size",
        ));
    }
    let cfg = IndicatorConfig {
        alternative,
        target_attr: time_attr,
        income_attr: cost_attr,
        h: h_time,
        h_income: Some(h_cost),
        iqr_k: DEFAULT_IQR_K,
    };
    wtp_population(model, dataset, &cfg)
}

/// Screen values by the interquartile fence, repeated to a fixed point.
///
/// Each pass keeps values inside `[Q1 - k*IQR, Q3 + k*IQR]` of the current
/// survivors. One pass is not idempotent (removals shrink the fence), so the
/// filter iterates until stable; filtering a filtered set removes nothing.
/// Non-finite inputs are dropped up front. Never empties a non-empty input:
/// the fence always contains the central half.
pub fn iqr_filter(values: &[f64], k: f64) -> Vec<f64> {
    let mut kept: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    while kept.len() >= 2 {
        let mut sorted = kept.clone();
        sorted.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&sorted, 0.25);
        let q3 = quantile_sorted(&sorted, 0.75);
        let fence = k * (q3 - q1);
        let (lo, hi) = (q1 - fence, q3 + fence);
        let next: Vec<f64> = kept
            .iter()
            .copied()
            .filter(|v| (lo..=hi).contains(v))
            .collect();
        if next.len() == kept.len() {
            break;
        }
        kept = next;
    }
    kept
}

/// Quantile with linear interpolation between order statistics
/// (the R-7/NumPy default). Returns `None` on an empty slice.
pub fn quantile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&p) {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(quantile_sorted(&sorted, p))
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// A model's probability curves along one attribute, with the other
/// attributes pinned at a base row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilitySweep {
    pub base: Vec<f64>,
    pub attr: usize,
    pub grid: Vec<f64>,
    /// One probability vector per grid point.
    pub probabilities: Vec<Vec<f64>>,
    /// Ground-truth vectors on the same grid, when attached.
    pub truth: Option<Vec<Vec<f64>>>,
}

impl ProbabilitySweep {
    /// Attach true probability curves evaluated on the same grid.
    /// Probit truths simulate `n_draws` errors per point from `seed`.
    pub fn with_truth(mut self, truth: &GroundTruth, n_draws: usize, seed: u64) -> Result<Self> {
        let mut curves = Vec::with_capacity(self.grid.len());
        let mut row = self.base.clone();
        for &value in &self.grid {
            row[self.attr] = value;
            curves.push(truth.probabilities(&row, n_draws, seed)?.to_vec());
        }
        self.truth = Some(curves);
        Ok(self)
    }

    /// Number of distinct probability vectors along the sweep; a tree
    /// ensemble yields at most its reachable-leaf-combination count.
    pub fn distinct_points(&self) -> usize {
        let mut seen: Vec<&[f64]> = Vec::new();
        for p in &self.probabilities {
            if !seen.iter().any(|s| *s == p.as_slice()) {
                seen.push(p);
            }
        }
        seen.len()
    }

    /// CSV with one row per grid value: `value,p0..,true_p0..`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let k = self.probabilities.first().map_or(0, Vec::len);
        let mut writer = csv::Writer::from_writer(out);
        let mut header: Vec<String> = vec!["value".into()];
        header.extend((0..k).map(|i| format!("p{i}")));
        if self.truth.is_some() {
            header.extend((0..k).map(|i| format!("true_p{i}")));
        }
        writer.write_record(&header)?;
        for (g, value) in self.grid.iter().enumerate() {
            let mut record: Vec<String> = vec![value.to_string()];
            record.extend(self.probabilities[g].iter().map(f64::to_string));
            if let Some(truth) = &self.truth {
                record.extend(truth[g].iter().map(f64::to_string));
            }
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Uniform grid of [`SWEEP_POINTS`] values spanning `[low, high]` inclusive.
pub fn sweep_grid(low: f64, high: f64) -> Vec<f64> {
    let step = (high - low) / (SWEEP_POINTS - 1) as f64;
    (0..SWEEP_POINTS).map(|i| low + step * i as f64).collect()
}

/// Evaluate the model's probability vectors along `grid` for one attribute,
/// holding the rest of `base` fixed.
pub fn probability_sweep(
    model: &dyn ChoiceModel,
    base: &[f64],
    attr: usize,
    grid: &[f64],
) -> Result<ProbabilitySweep> {
    if base.len() != model.n_features() {
        return Err(Error::dimension(format!(
            "base row has {} attributes, model expects {}",
            base.len(),
            model.n_features()
        )));
    }
    if attr >= base.len() {
        return Err(Error::dimension(format!(
            "attribute {attr} out of range for {} attributes",
            base.len()
        )));
    }
    if grid.is_empty() {
        return Err(Error::config("sweep grid must be non-empty"));
    }
    let mut row = base.to_vec();
    let mut probabilities = Vec::with_capacity(grid.len());
    for &value in grid {
        row[attr] = value;
        probabilities.push(model.predict_proba_row(&row)?);
    }
    Ok(ProbabilitySweep {
        base: base.to_vec(),
        attr,
        grid: grid.to_vec(),
        probabilities,
        truth: None,
    })
}
