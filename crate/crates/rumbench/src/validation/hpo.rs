//! Hyperparameter search over declared spaces.
//!
//! Two optimizers minimise a black-box objective (in practice the mean
//! cross-validated cross-entropy): plain random search, and a tree-structured
//! Parzen estimator. TPE ranks candidate configurations by the density
//! ratio of the best-scoring quantile of past trials against the rest, with
//! per-dimension kernel estimators for numeric domains and smoothed counts
//! for categorical ones. Every trial draws from its own named RNG stream,
//! so both optimizers are fully deterministic for a given (space, budget,
//! seed) and TPE's startup phase reproduces random search exactly.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// A concrete hyperparameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Text(String),
}

impl ParamValue {
    pub fn as_int(&self) -> Result<i64> {
        match self {
            ParamValue::Int(v) => Ok(*v),
            other => Err(Error::config(format!("expected an integer, got {other}"))),
        }
    }

    pub fn as_real(&self) -> Result<f64> {
        match self {
            ParamValue::Real(v) => Ok(*v),
            ParamValue::Int(v) => Ok(*v as f64),
            other => Err(Error::config(format!("expected a number, got {other}"))),
        }
    }

    pub fn as_text(&self) -> Result<&str> {
        match self {
            ParamValue::Text(v) => Ok(v),
            other => Err(Error::config(format!("expected text, got {other}"))),
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Real(v) => write!(f, "{v}"),
            ParamValue::Text(v) => write!(f, "{v}"),
        }
    }
}

/// Sampling domain of one hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    /// Integers in `[low, high]`, both ends included.
    IntRange { low: i64, high: i64 },
    /// Reals uniform on `[low, high)`.
    Uniform { low: f64, high: f64 },
    /// Reals log-uniform on `[low, high)`: `exp(uniform(ln low, ln high))`.
    LogUniform { low: f64, high: f64 },
    Categorical { options: Vec<String> },
    Fixed { value: ParamValue },
}

impl Domain {
    pub fn validate(&self) -> Result<()> {
        match self {
            Domain::IntRange { low, high } => {
                if low > high {
                    return Err(Error::config(format!("empty integer range [{low}, {high}]")));
                }
            }
            Domain::Uniform { low, high } => {
                if !low.is_finite() || !high.is_finite() || low >= high {
                    return Err(Error::config(format!("invalid uniform range [{low}, {high})")));
                }
            }
            Domain::LogUniform { low, high } => {
                if !low.is_finite() || !high.is_finite() || *low <= 0.0 || low >= high {
                    return Err(Error::config(format!(
                        "log-uniform range needs 0 < low < high, got [{low}, {high})"
                    )));
                }
            }
            Domain::Categorical { options } => {
                if options.is_empty() {
                    return Err(Error::config("categorical domain needs at least one option"));
                }
            }
            Domain::Fixed { .. } => {}
        }
        Ok(())
    }

    fn sample(&self, rng: &mut impl Rng) -> ParamValue {
        match self {
            Domain::IntRange { low, high } => ParamValue::Int(rng.random_range(*low..=*high)),
            Domain::Uniform { low, high } => ParamValue::Real(rng.random_range(*low..*high)),
            Domain::LogUniform { low, high } => {
                ParamValue::Real(rng.random_range(low.ln()..high.ln()).exp())
            }
            Domain::Categorical { options } => {
                ParamValue::Text(options[rng.random_range(0..options.len())].clone())
            }
            Domain::Fixed { value } => value.clone(),
        }
    }
}

/// One named dimension of a search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimSpec {
    pub name: String,
    #[serde(flatten)]
    pub domain: Domain,
}

/// Ordered collection of hyperparameter domains.
///
/// Dimension order is the declaration order; sampling visits dimensions in
/// that order, which is what makes trial sequences reproducible.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchSpace {
    dims: Vec<DimSpec>,
}

impl SearchSpace {
    pub fn new() -> Self {
        SearchSpace::default()
    }

    pub fn add(&mut self, name: impl Into<String>, domain: Domain) -> Result<&mut Self> {
        let name = name.into();
        domain.validate()?;
        if self.dims.iter().any(|d| d.name == name) {
            return Err(Error::config(format!("duplicate hyperparameter {name:?}")));
        }
        self.dims.push(DimSpec { name, domain });
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for dim in &self.dims {
            dim.domain.validate()?;
            if !seen.insert(dim.name.as_str()) {
                return Err(Error::config(format!("duplicate hyperparameter {:?}", dim.name)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn dims(&self) -> &[DimSpec] {
        &self.dims
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Assignment {
        Assignment(
            self.dims
                .iter()
                .map(|d| (d.name.clone(), d.domain.sample(rng)))
                .collect(),
        )
    }
}

/// A concrete hyperparameter assignment, one value per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(pub BTreeMap<String, ParamValue>);

impl Assignment {
    pub fn get(&self, name: &str) -> Result<&ParamValue> {
        self.0
            .get(name)
            .ok_or_else(|| Error::config(format!("assignment has no value for {name:?}")))
    }

    pub fn int(&self, name: &str) -> Result<i64> {
        self.get(name)?.as_int()
    }

    pub fn real(&self, name: &str) -> Result<f64> {
        self.get(name)?.as_real()
    }

    pub fn text(&self, name: &str) -> Result<&str> {
        self.get(name)?.as_text()
    }
}

/// Objective value of one trial: the score being minimised plus the
/// per-fold breakdown when the objective is cross-validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialScore {
    pub score: f64,
    pub fold_scores: Vec<f64>,
}

impl TrialScore {
    pub fn of(score: f64) -> Self {
        TrialScore {
            score,
            fold_scores: Vec::new(),
        }
    }
}

/// One evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub assignment: Assignment,
    pub score: f64,
    pub fold_scores: Vec<f64>,
}

/// Full optimisation history plus the winning trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpoResult {
    pub trials: Vec<Trial>,
    pub best_index: usize,
}

impl HpoResult {
    pub fn best(&self) -> &Trial {
        &self.trials[self.best_index]
    }

    /// Running minimum of the trial scores; non-increasing by construction.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.trials
            .iter()
            .map(|t| {
                best = best.min(t.score);
                best
            })
            .collect()
    }
}

fn record_trial(
    trials: &mut Vec<Trial>,
    best_index: &mut usize,
    assignment: Assignment,
    outcome: TrialScore,
) -> Result<()> {
    if !outcome.score.is_finite() {
        return Err(Error::domain(format!(
            "objective returned non-finite score {} for {assignment:?}",
            outcome.score
        )));
    }
    trials.push(Trial {
        assignment,
        score: outcome.score,
        fold_scores: outcome.fold_scores,
    });
    if trials[*best_index].score > trials.last().unwrap().score {
        *best_index = trials.len() - 1;
    }
    Ok(())
}

/// Sample `budget` i.i.d. configurations and keep the best.
pub fn random_search<F>(
    space: &SearchSpace,
    budget: usize,
    seed: u64,
    mut objective: F,
) -> Result<HpoResult>
where
    F: FnMut(&Assignment) -> Result<TrialScore>,
{
    space.validate()?;
    if space.is_empty() {
        return Err(Error::config("search space has no dimensions"));
    }
    if budget == 0 {
        return Err(Error::config("budget must be >= 1"));
    }
    let mut trials = Vec::with_capacity(budget);
    let mut best_index = 0usize;
    for t in 0..budget {
        let mut trial_rng = rng::stream(seed, &format!("hpo/trial{t}"));
        let assignment = space.sample(&mut trial_rng);
        let outcome = objective(&assignment)?;
        record_trial(&mut trials, &mut best_index, assignment, outcome)?;
    }
    Ok(HpoResult { trials, best_index })
}

/// Internal constants of [`tpe_search`].
///
/// The method splits past trials at the `gamma` quantile into a "good" and a
/// "bad" set, draws `n_candidates` proposals from the good-set density and
/// keeps the proposal with the highest good/bad density ratio. The first
/// `n_startup` trials are plain random search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpeConfig {
    pub n_startup: usize,
    pub gamma: f64,
    pub n_candidates: usize,
}

impl Default for TpeConfig {
    fn default() -> Self {
        TpeConfig {
            n_startup: 10,
            gamma: 0.25,
            n_candidates: 64,
        }
    }
}

impl TpeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_startup == 0 || self.n_candidates == 0 {
            return Err(Error::config("n_startup and n_candidates must be >= 1"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("gamma must lie strictly between 0 and 1"));
        }
        Ok(())
    }
}

/// Tree-structured Parzen estimator search.
pub fn tpe_search<F>(
    space: &SearchSpace,
    budget: usize,
    seed: u64,
    config: &TpeConfig,
    mut objective: F,
) -> Result<HpoResult>
where
    F: FnMut(&Assignment) -> Result<TrialScore>,
{
    space.validate()?;
    config.validate()?;
    if space.is_empty() {
        return Err(Error::config("search space has no dimensions"));
    }
    if budget < config.n_startup {
        return Err(Error::config(format!(
            "budget {budget} is below the {} startup trials",
            config.n_startup
        )));
    }
    let mut trials: Vec<Trial> = Vec::with_capacity(budget);
    let mut best_index = 0usize;
    for t in 0..budget {
        let mut trial_rng = rng::stream(seed, &format!("hpo/trial{t}"));
        let assignment = if t < config.n_startup {
            space.sample(&mut trial_rng)
        } else {
            propose(space, &trials, config, &mut trial_rng)
        };
        let outcome = objective(&assignment)?;
        record_trial(&mut trials, &mut best_index, assignment, outcome)?;
    }
    Ok(HpoResult { trials, best_index })
}

/// Draw candidates from the good-set density and keep the best ratio.
fn propose(
    space: &SearchSpace,
    trials: &[Trial],
    config: &TpeConfig,
    rng: &mut impl Rng,
) -> Assignment {
    let t = trials.len();
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| trials[a].score.total_cmp(&trials[b].score).then(a.cmp(&b)));
    let n_good = ((config.gamma * t as f64).ceil() as usize).clamp(1, t - 1);
    let (good_idx, bad_idx) = order.split_at(n_good);

    let models: Vec<(DimModel, DimModel)> = space
        .dims()
        .iter()
        .map(|dim| {
            let good: Vec<&ParamValue> = good_idx
                .iter()
                .map(|&i| &trials[i].assignment.0[&dim.name])
                .collect();
            let bad: Vec<&ParamValue> = bad_idx
                .iter()
                .map(|&i| &trials[i].assignment.0[&dim.name])
                .collect();
            (
                DimModel::build(&dim.domain, &good),
                DimModel::build(&dim.domain, &bad),
            )
        })
        .collect();

    let mut best: Option<(f64, Assignment)> = None;
    for _ in 0..config.n_candidates {
        let mut values = BTreeMap::new();
        let mut log_ratio = 0.0;
        for (dim, (good_model, bad_model)) in space.dims().iter().zip(&models) {
            let value = good_model.sample(rng);
            log_ratio += good_model.log_density(&value) - bad_model.log_density(&value);
            values.insert(dim.name.clone(), value);
        }
        if best.as_ref().is_none_or(|(r, _)| log_ratio > *r) {
            best = Some((log_ratio, Assignment(values)));
        }
    }
    best.unwrap().1
}

/// Per-dimension density estimator over observed trial values.
enum DimModel {
    Fixed(ParamValue),
    Categorical {
        options: Vec<String>,
        /// Add-one smoothed option weights; sum to 1.
        weights: Vec<f64>,
    },
    /// Parzen mixture in (possibly log-transformed) model space: one
    /// Gaussian per observation plus a uniform prior component.
    Continuous {
        points: Vec<f64>,
        low: f64,
        high: f64,
        bandwidth: f64,
        log_space: bool,
        integer: bool,
    },
}

impl DimModel {
    fn build(domain: &Domain, observed: &[&ParamValue]) -> DimModel {
        match domain {
            Domain::Fixed { value } => DimModel::Fixed(value.clone()),
            Domain::Categorical { options } => {
                let mut counts = vec![1.0f64; options.len()];
                for v in observed {
                    if let ParamValue::Text(text) = v {
                        if let Some(pos) = options.iter().position(|o| o == text) {
                            counts[pos] += 1.0;
                        }
                    }
                }
                let total: f64 = counts.iter().sum();
                DimModel::Categorical {
                    options: options.clone(),
                    weights: counts.into_iter().map(|c| c / total).collect(),
                }
            }
            Domain::IntRange { low, high } => {
                let points: Vec<f64> = observed
                    .iter()
                    .filter_map(|v| v.as_real().ok())
                    .collect();
                let range = (*high - *low) as f64;
                let bandwidth = (range / (points.len() as f64 + 2.0).sqrt()).max(0.5);
                DimModel::Continuous {
                    points,
                    low: *low as f64,
                    high: *high as f64,
                    bandwidth,
                    log_space: false,
                    integer: true,
                }
            }
            Domain::Uniform { low, high } => {
                let points: Vec<f64> = observed
                    .iter()
                    .filter_map(|v| v.as_real().ok())
                    .collect();
                let bandwidth = (high - low) / (points.len() as f64 + 2.0).sqrt();
                DimModel::Continuous {
                    points,
                    low: *low,
                    high: *high,
                    bandwidth,
                    log_space: false,
                    integer: false,
                }
            }
            Domain::LogUniform { low, high } => {
                let points: Vec<f64> = observed
                    .iter()
                    .filter_map(|v| v.as_real().ok())
                    .map(f64::ln)
                    .collect();
                let (lo, hi) = (low.ln(), high.ln());
                let bandwidth = (hi - lo) / (points.len() as f64 + 2.0).sqrt();
                DimModel::Continuous {
                    points,
                    low: lo,
                    high: hi,
                    bandwidth,
                    log_space: true,
                    integer: false,
                }
            }
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> ParamValue {
        match self {
            DimModel::Fixed(value) => value.clone(),
            DimModel::Categorical { options, weights } => {
                let roll: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = options.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if roll < acc {
                        pick = i;
                        break;
                    }
                }
                ParamValue::Text(options[pick].clone())
            }
            DimModel::Continuous {
                points,
                low,
                high,
                bandwidth,
                log_space,
                integer,
            } => {
                let component = rng.random_range(0..=points.len());
                let raw = if component == points.len() {
                    rng.random_range(*low..*high)
                } else {
                    let normal = Normal::new(points[component], *bandwidth).unwrap();
                    normal.sample(rng).clamp(*low, *high)
                };
                if *integer {
                    ParamValue::Int(raw.round() as i64)
                } else if *log_space {
                    ParamValue::Real(raw.exp())
                } else {
                    ParamValue::Real(raw)
                }
            }
        }
    }

    fn log_density(&self, value: &ParamValue) -> f64 {
        match self {
            DimModel::Fixed(_) => 0.0,
            DimModel::Categorical { options, weights } => match value {
                ParamValue::Text(text) => options
                    .iter()
                    .position(|o| o == text)
                    .map(|i| weights[i].ln())
                    .unwrap_or(f64::NEG_INFINITY),
                _ => f64::NEG_INFINITY,
            },
            DimModel::Continuous {
                points,
                low,
                high,
                bandwidth,
                log_space,
                ..
            } => {
                let x = match value.as_real() {
                    Ok(v) if *log_space => v.ln(),
                    Ok(v) => v,
                    Err(_) => return f64::NEG_INFINITY,
                };
                let mut density = 1.0 / (high - low);
                let norm = 1.0 / (bandwidth * (2.0 * std::f64::consts::PI).sqrt());
                for p in points {
                    let z = (x - p) / bandwidth;
                    density += norm * (-0.5 * z * z).exp();
                }
                (density / (points.len() as f64 + 1.0)).ln()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_space() -> SearchSpace {
        let mut space = SearchSpace::new();
        space
            .add("x", Domain::Uniform { low: 0.0, high: 1.0 })
            .unwrap();
        space
    }

    fn quadratic(a: &Assignment) -> Result<TrialScore> {
        let x = a.real("x")?;
        Ok(TrialScore::of((x - 0.7) * (x - 0.7)))
    }

    #[test]
    fn budget_one_returns_that_trial() {
        let result = random_search(&quadratic_space(), 1, 5, quadratic).unwrap();
        assert_eq!(result.trials.len(), 1);
        assert_eq!(result.best_index, 0);
    }

    #[test]
    fn fixed_space_yields_identical_trials() {
        let mut space = SearchSpace::new();
        space
            .add(
                "c",
                Domain::Fixed {
                    value: ParamValue::Int(7),
                },
            )
            .unwrap();
        let result = random_search(&space, 5, 1, |a| {
            Ok(TrialScore::of(a.int("c")? as f64))
        })
        .unwrap();
        for t in &result.trials {
            assert_eq!(t.assignment, result.trials[0].assignment);
        }
    }

    #[test]
    fn searches_are_deterministic() {
        let space = quadratic_space();
        let a = random_search(&space, 20, 3, quadratic).unwrap();
        let b = random_search(&space, 20, 3, quadratic).unwrap();
        assert_eq!(a, b);
        let c = tpe_search(&space, 20, 3, &TpeConfig::default(), quadratic).unwrap();
        let d = tpe_search(&space, 20, 3, &TpeConfig::default(), quadratic).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn best_so_far_is_monotone() {
        let space = quadratic_space();
        for result in [
            random_search(&space, 40, 17, quadratic).unwrap(),
            tpe_search(&space, 40, 17, &TpeConfig::default(), quadratic).unwrap(),
        ] {
            let curve = result.best_so_far();
            for w in curve.windows(2) {
                assert!(w[1] <= w[0]);
            }
            assert_eq!(result.best().score, *curve.last().unwrap());
        }
    }

    #[test]
    fn tpe_startup_matches_random_search() {
        let space = quadratic_space();
        let config = TpeConfig {
            n_startup: 10,
            ..TpeConfig::default()
        };
        let random = random_search(&space, 10, 23, quadratic).unwrap();
        let tpe = tpe_search(&space, 10, 23, &config, quadratic).unwrap();
        assert_eq!(random.trials, tpe.trials);
    }

    #[test]
    fn tpe_beats_random_on_a_quadratic() {
        let space = quadratic_space();
        let budget = 60;
        let mut random_best = Vec::new();
        let mut tpe_best = Vec::new();
        for seed in 0..20 {
            random_best.push(
                random_search(&space, budget, seed, quadratic)
                    .unwrap()
                    .best()
                    .score,
            );
            tpe_best.push(
                tpe_search(&space, budget, seed, &TpeConfig::default(), quadratic)
                    .unwrap()
                    .best()
                    .score,
            );
        }
        random_best.sort_by(f64::total_cmp);
        tpe_best.sort_by(f64::total_cmp);
        let median = |v: &[f64]| (v[9] + v[10]) / 2.0;
        assert!(
            median(&tpe_best) <= median(&random_best),
            "tpe {} vs random {}",
            median(&tpe_best),
            median(&random_best)
        );
    }

    #[test]
    fn tpe_concentrates_on_the_best_category() {
        let mut space = SearchSpace::new();
        space
            .add(
                "choice",
                Domain::Categorical {
                    options: vec!["a".into(), "b".into(), "c".into()],
                },
            )
            .unwrap();
        let objective = |a: &Assignment| {
            Ok(TrialScore::of(match a.text("choice")? {
                "b" => 0.0,
                _ => 1.0,
            }))
        };
        let mut hits = 0;
        for seed in 0..50 {
            let result = tpe_search(&space, 30, seed, &TpeConfig::default(), objective).unwrap();
            if result.trials.last().unwrap().assignment.text("choice").unwrap() == "b" {
                hits += 1;
            }
        }
        assert!(hits * 3 > 50, "best category picked {hits}/50 times");
    }

    #[test]
    fn sampled_values_respect_their_domains() {
        let mut space = SearchSpace::new();
        space
            .add("n", Domain::IntRange { low: 3, high: 9 })
            .unwrap()
            .add(
                "lr",
                Domain::LogUniform {
                    low: 1e-4,
                    high: 10.0,
                },
            )
            .unwrap();
        let check = |a: &Assignment| {
            let n = a.int("n").unwrap();
            let lr = a.real("lr").unwrap();
            assert!((3..=9).contains(&n));
            // Log-space clamping can overshoot the bounds by an ulp.
            assert!(lr >= 1e-4 * (1.0 - 1e-12) && lr <= 10.0 * (1.0 + 1e-12));
            Ok(TrialScore::of((n as f64 - 6.0).abs() + lr))
        };
        random_search(&space, 50, 2, check).unwrap();
        tpe_search(&space, 50, 2, &TpeConfig::default(), check).unwrap();
    }

    #[test]
    fn invalid_spaces_are_rejected() {
        let mut space = SearchSpace::new();
        assert!(space
            .add("x", Domain::Uniform { low: 1.0, high: 0.0 })
            .is_err());
        space
            .add("x", Domain::Uniform { low: 0.0, high: 1.0 })
            .unwrap();
        assert!(space
            .add("x", Domain::IntRange { low: 0, high: 1 })
            .is_err());
        assert!(random_search(&SearchSpace::new(), 5, 0, quadratic).is_err());
        assert!(random_search(&space, 0, 0, quadratic).is_err());
        let config = TpeConfig {
            n_startup: 10,
            ..TpeConfig::default()
        };
        assert!(tpe_search(&space, 5, 0, &config, quadratic).is_err());
    }

    #[test]
    fn assignment_getters_check_types() {
        let mut space = SearchSpace::new();
        space
            .add(
                "c",
                Domain::Categorical {
                    options: vec!["gini".into()],
                },
            )
            .unwrap();
        let a = space.sample(&mut rng::stream(0, "t"));
        assert_eq!(a.text("c").unwrap(), "gini");
        assert!(a.int("c").is_err());
        assert!(a.real("missing").is_err());
    }
}
