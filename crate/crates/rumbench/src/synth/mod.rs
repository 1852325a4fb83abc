//! Synthetic mode-choice data with analytic ground truth.
//!
//! Each observation has three alternatives described by two attributes apiece
//! (a generic attribute `x` and an income-like attribute `I`), laid out as the
//! six columns `x1, I1, x2, I2, x3, I3`. Attributes are i.i.d. uniform on
//! [0, 1); the chosen alternative maximises systematic utility plus an i.i.d.
//! error term. Because the utility parameters and the error family are known,
//! every derived quantity (choice probabilities, market shares under demand
//! scenarios, willingness-to-pay) has a ground-truth value the estimators can
//! be scored against.

mod truth;

pub use truth::{cd_wtp_cdf, cd_wtp_median, cd_wtp_pdf, max_accuracy, GroundTruth};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ChoiceDataset;
use crate::error::{Error, Result};
use crate::rng;

/// Euler-Mascheroni constant, the mean of a standard Gumbel distribution.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Default error dispersion used by the canonical benchmark datasets.
pub fn default_dispersion() -> f64 {
    (12.0f64).sqrt().recip()
}

/// Error family of the random utility term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorFamily {
    /// Gumbel errors; the implied true model is multinomial logit.
    Gumbel,
    /// Normal errors; the implied true model is multinomial probit.
    Normal,
}

impl ErrorFamily {
    /// Short name used in dataset identifiers ("logit" / "probit").
    pub fn label(self) -> &'static str {
        match self {
            ErrorFamily::Gumbel => "logit",
            ErrorFamily::Normal => "probit",
        }
    }
}

/// Functional form of the systematic utility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityForm {
    /// `V = beta_x * x + beta_i * I`
    Linear,
    /// `V = x^beta_x * I^beta_i`
    CobbDouglas,
}

impl UtilityForm {
    /// Short name used in dataset identifiers ("linear" / "cd").
    pub fn label(self) -> &'static str {
        match self {
            UtilityForm::Linear => "linear",
            UtilityForm::CobbDouglas => "cd",
        }
    }
}

/// Systematic utility specification shared by all alternatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    pub form: UtilityForm,
    pub beta_x: f64,
    pub beta_i: f64,
}

impl UtilitySpec {
    pub fn new(form: UtilityForm, beta_x: f64, beta_i: f64) -> Self {
        UtilitySpec { form, beta_x, beta_i }
    }

    fn validate(&self) -> Result<()> {
        if !self.beta_x.is_finite() || !self.beta_i.is_finite() {
            return Err(Error::config("utility coefficients must be finite"));
        }
        if matches!(self.form, UtilityForm::CobbDouglas)
            && (self.beta_x < 0.0 || self.beta_i < 0.0)
        {
            return Err(Error::config(
                "Cobb-Douglas exponents must be non-negative",
            ));
        }
        Ok(())
    }

    /// Systematic utility of one alternative given its attributes.
    pub fn value(&self, x: f64, income: f64) -> f64 {
        match self.form {
            UtilityForm::Linear => self.beta_x * x + self.beta_i * income,
            UtilityForm::CobbDouglas => x.powf(self.beta_x) * income.powf(self.beta_i),
        }
    }
}

/// Error term specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSpec {
    pub family: ErrorFamily,
    /// Gumbel scale or Normal standard deviation.
    ///
    /// Must be positive for meaningful data; zero is accepted as a degenerate
    /// noise-free limit so the systematic choice rule can be tested directly.
    pub dispersion: f64,
}

impl ErrorSpec {
    pub fn new(family: ErrorFamily, dispersion: f64) -> Self {
        ErrorSpec { family, dispersion }
    }

    fn validate(&self) -> Result<()> {
        if !self.dispersion.is_finite() || self.dispersion < 0.0 {
            return Err(Error::config("error dispersion must be non-negative"));
        }
        Ok(())
    }

    /// Draw one error term.
    ///
    /// Gumbel errors are centred by placing the location at
    /// `-dispersion * EULER_GAMMA`, so both families have mean zero and a
    /// common location shift never enters the choice rule.
    pub fn draw(&self, rng: &mut impl Rng) -> f64 {
        match self.family {
            ErrorFamily::Gumbel => {
                let u = loop {
                    let u: f64 = rng.random();
                    if u > 0.0 {
                        break u;
                    }
                };
                self.dispersion * (-EULER_GAMMA - (-u.ln()).ln())
            }
            ErrorFamily::Normal => {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                self.dispersion * z
            }
        }
    }
}

/// Full configuration of one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    /// Identifier used in stream labels, file names and result tables.
    pub name: String,
    pub utility: UtilitySpec,
    pub error: ErrorSpec,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    pub seed: u64,
}

fn default_n_train() -> usize {
    10_000
}

fn default_n_test() -> usize {
    1_000
}

/// Alternatives per observation; the attribute layout is `x_i, I_i` per
/// alternative, giving six columns.
pub const N_ALTERNATIVES: usize = 3;

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::config("dataset name must not be empty"));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::config("n_train and n_test must be positive"));
        }
        self.utility.validate()?;
        self.error.validate()
    }

    /// Ground truth implied by this configuration.
    pub fn truth(&self) -> GroundTruth {
        GroundTruth::new(self.utility, self.error)
    }
}

/// A generated dataset pair plus its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub config: SyntheticConfig,
    pub train: ChoiceDataset,
    pub test: ChoiceDataset,
    pub truth: GroundTruth,
}

/// Attribute column names for the synthetic layout.
pub fn attribute_names() -> Vec<String> {
    let mut names = Vec::with_capacity(2 * N_ALTERNATIVES);
    for i in 1..=N_ALTERNATIVES {
        names.push(format!("x{i}"));
        names.push(format!("I{i}"));
    }
    names
}

/// Generate train and test sets for one configuration.
///
/// Attributes and errors come from separate named streams derived from
/// `config.seed`, so the same configuration always reproduces identical
/// datasets and changing, say, the number of test rows never perturbs the
/// training rows.
pub fn generate(config: &SyntheticConfig) -> Result<SyntheticData> {
    config.validate()?;
    let train = generate_split(config, "train", config.n_train)?;
    let test = generate_split(config, "test", config.n_test)?;
    Ok(SyntheticData {
        config: config.clone(),
        train,
        test,
        truth: config.truth(),
    })
}

fn generate_split(config: &SyntheticConfig, split: &str, n_rows: usize) -> Result<ChoiceDataset> {
    let mut attr_rng = rng::stream(config.seed, &format!("gen/{split}/attrs"));
    let mut err_rng = rng::stream(config.seed, &format!("gen/{split}/errors"));

    let width = 2 * N_ALTERNATIVES;
    let mut features = Vec::with_capacity(n_rows * width);
    let mut chosen = Vec::with_capacity(n_rows);
    let mut systematic = Vec::with_capacity(n_rows);
    let mut row = [0.0f64; 6];
    for _ in 0..n_rows {
        for slot in row.iter_mut() {
            *slot = attr_rng.random();
        }
        let mut best_sys = 0usize;
        let mut best_sys_v = f64::NEG_INFINITY;
        let mut best_total = 0usize;
        let mut best_total_v = f64::NEG_INFINITY;
        for i in 0..N_ALTERNATIVES {
            let v = config.utility.value(row[2 * i], row[2 * i + 1]);
            let total = v + config.error.draw(&mut err_rng);
            if v > best_sys_v {
                best_sys_v = v;
                best_sys = i;
            }
            if total > best_total_v {
                best_total_v = total;
                best_total = i;
            }
        }
        features.extend_from_slice(&row);
        chosen.push(best_total);
        systematic.push(best_total == best_sys);
    }

    let alternative_names = (1..=N_ALTERNATIVES).map(|i| i.to_string()).collect();
    ChoiceDataset::new(
        attribute_names(),
        alternative_names,
        features,
        chosen,
        None,
        Some(systematic),
    )
}

/// The twelve canonical benchmark configurations: both error families, both
/// utility forms, income exponent in {0.5, 1, 2}, `beta_x = 1`, dispersion
/// `1/sqrt(12)`. Per-dataset seeds are derived from the master seed and the
/// dataset name.
pub fn canonical_configs(master_seed: u64, n_train: usize, n_test: usize) -> Vec<SyntheticConfig> {
    let mut configs = Vec::with_capacity(12);
    for family in [ErrorFamily::Gumbel, ErrorFamily::Normal] {
        for form in [UtilityForm::Linear, UtilityForm::CobbDouglas] {
            for beta_i in [0.5, 1.0, 2.0] {
                let name = format!("{}-{}-{}", family.label(), form.label(), beta_i);
                let seed = rng::child_seed(master_seed, &format!("dataset/{name}"));
                configs.push(SyntheticConfig {
                    name,
                    utility: UtilitySpec::new(form, 1.0, beta_i),
                    error: ErrorSpec::new(family, default_dispersion()),
                    n_train,
                    n_test,
                    seed,
                });
            }
        }
    }
    configs
}

/// Look up one canonical configuration by name, e.g. `logit-linear-1`.
pub fn canonical_config(
    name: &str,
    master_seed: u64,
    n_train: usize,
    n_test: usize,
) -> Result<SyntheticConfig> {
    canonical_configs(master_seed, n_train, n_test)
        .into_iter()
        .find(|c| c.name == name)
        .ok_or_else(|| {
            Error::config(format!(
                "unknown canonical dataset `{name}`; expected one of {:?}",
                canonical_configs(0, 1, 1)
                    .iter()
                    .map(|c| c.name.as_str())
                    .collect::<Vec<_>>()
            ))
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logit_linear(seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            name: "logit-linear-1".into(),
            utility: UtilitySpec::new(UtilityForm::Linear, 1.0, 1.0),
            error: ErrorSpec::new(ErrorFamily::Gumbel, default_dispersion()),
            n_train: 400,
            n_test: 100,
            seed,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = logit_linear(7);
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        let mut csv_a = Vec::new();
        let mut csv_b = Vec::new();
        a.train.write_csv(&mut csv_a).unwrap();
        b.train.write_csv(&mut csv_b).unwrap();
        assert_eq!(csv_a, csv_b);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn seeds_change_the_data() {
        let a = generate(&logit_linear(7)).unwrap();
        let b = generate(&logit_linear(8)).unwrap();
        assert_ne!(a.train, b.train);
    }

    #[test]
    fn attributes_live_in_the_unit_cube() {
        let data = generate(&logit_linear(3)).unwrap();
        for i in 0..data.train.n_rows() {
            for &v in data.train.row(i) {
                assert!((0.0..1.0).contains(&v));
            }
        }
    }

    #[test]
    fn noise_free_limit_always_picks_the_systematic_maximum() {
        let mut cfg = logit_linear(11);
        cfg.error.dispersion = 0.0;
        let data = generate(&cfg).unwrap();
        assert!(data.train.systematic().unwrap().iter().all(|&f| f));
        for i in 0..data.train.n_rows() {
            let row = data.train.row(i);
            let utilities: Vec<f64> = (0..N_ALTERNATIVES)
                .map(|a| cfg.utility.value(row[2 * a], row[2 * a + 1]))
                .collect();
            let best = utilities
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(data.train.chosen(i), best);
        }
    }

    #[test]
    fn gumbel_draws_have_mean_zero() {
        let spec = ErrorSpec::new(ErrorFamily::Gumbel, default_dispersion());
        let mut rng = crate::rng::stream(1, "test/gumbel");
        let n = 200_000;
        let mean: f64 = (0..n).map(|_| spec.draw(&mut rng)).sum::<f64>() / n as f64;
        // std of the mean is dispersion * pi/sqrt(6)/sqrt(n) ~ 8e-4
        assert!(mean.abs() < 4e-3, "sample mean {mean}");
    }

    #[test]
    fn normal_draws_match_the_dispersion() {
        let spec = ErrorSpec::new(ErrorFamily::Normal, 0.5);
        let mut rng = crate::rng::stream(1, "test/normal");
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| spec.draw(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 5e-3);
        assert!((var.sqrt() - 0.5).abs() < 5e-3);
    }

    #[test]
    fn canonical_set_has_twelve_distinct_members() {
        let configs = canonical_configs(42, 100, 10);
        assert_eq!(configs.len(), 12);
        let names: std::collections::BTreeSet<_> = configs.iter().map(|c| c.name.clone()).collect();
        assert_eq!(names.len(), 12);
        let seeds: std::collections::BTreeSet<_> = configs.iter().map(|c| c.seed).collect();
        assert_eq!(seeds.len(), 12);
        for c in &configs {
            c.validate().unwrap();
            assert_eq!(c.utility.beta_x, 1.0);
        }
        assert!(names.contains("logit-linear-1"));
        assert!(names.contains("probit-cd-0.5"));
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = logit_linear(1);
        cfg.n_train = 0;
        assert!(generate(&cfg).is_err());

        let mut cfg = logit_linear(1);
        cfg.error.dispersion = -0.1;
        assert!(generate(&cfg).is_err());

        let mut cfg = logit_linear(1);
        cfg.utility = UtilitySpec::new(UtilityForm::CobbDouglas, 1.0, -0.5);
        assert!(generate(&cfg).is_err());
    }
}
