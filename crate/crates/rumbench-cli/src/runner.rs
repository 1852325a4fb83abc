//! Command implementations.
//!
//! Every command takes a [`ToolConfig`], writes its artefacts into a
//! hash-stamped subdirectory of the configured output directory and returns
//! a JSON summary for the caller to print. All randomness flows through
//! named child seeds of the master seed, so adding a model or dataset to a
//! config never changes the numbers of the ones already there, and
//! re-running an unchanged config rewrites every file with identical bytes.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use rumbench::behavioural::{
    probability_sweep, vot, wtp_population, IndicatorConfig, ProbabilitySweep, WtpSummary,
};
use rumbench::metrics::{self, Scenario};
use rumbench::models::{MnlDesign, ModelDocument, ModelPayload};
use rumbench::rng::child_seed;
use rumbench::synth::{
    self, canonical_config, canonical_configs, cd_wtp_median, generate, max_accuracy,
    GroundTruth, UtilityForm, N_ALTERNATIVES,
};
use rumbench::validation::{
    cv_evaluate, cv_score, grouped_kfold, grouped_split, random_search, tpe_search, HpoResult,
    SearchSpace, TpeConfig,
};
use rumbench::{ChoiceDataset, ChoiceModel, Error, Result};

use crate::config::{ModelEntry, Optimizer, ToolConfig};
use crate::ingest::{ingest_csv, split_by_column};
use crate::normalise::NormalisationState;
use crate::report::{self, cell, Table};

/// Base attribute row of the canonical sweep individual; the slot at
/// [`SWEEP_ATTR`] (the second alternative's income) is the swept one.
pub const SWEEP_BASE: [f64; 6] = [0.25, 0.25, 0.5, 0.5, 0.75, 0.75];
pub const SWEEP_ATTR: usize = 3;
/// Sweep range inside the attribute support.
pub const INTERP_RANGE: (f64, f64) = (0.0, 1.0);
/// Sweep range straddling the support, probing extrapolation.
pub const EXTRAP_RANGE: (f64, f64) = (-0.5, 1.5);

/// One dataset readied for model work.
pub struct Prepared {
    pub name: String,
    pub train: ChoiceDataset,
    pub test: ChoiceDataset,
    /// Analytic ground truth; synthetic data only.
    pub truth: Option<GroundTruth>,
    /// Standardisation applied to externally ingested data.
    pub normalisation: Option<NormalisationState>,
}

impl Prepared {
    /// Utility design the MNL should use on this data: alternative-specific
    /// coefficient blocks when the columns follow the synthetic
    /// per-alternative layout, one weight vector per class otherwise.
    pub fn mnl_design(&self) -> MnlDesign {
        let synthetic_layout = self.train.attribute_names() == synth::attribute_names()
            && self.train.alternative_names().len() == N_ALTERNATIVES;
        if synthetic_layout {
            MnlDesign::PerAlternative {
                n_alternatives: N_ALTERNATIVES,
                attrs_per_alt: 2,
            }
        } else {
            MnlDesign::Multinomial {
                n_alternatives: self.train.alternative_names().len(),
                n_features: self.train.n_attributes(),
            }
        }
    }
}

/// Expand the synthetic selector, `["all"]` meaning every canonical set.
fn resolve_synthetic(names: &[String]) -> Result<Vec<String>> {
    let all: Vec<String> = canonical_configs(0, 1, 1)
        .into_iter()
        .map(|c| c.name)
        .collect();
    if names.len() == 1 && names[0] == "all" {
        return Ok(all);
    }
    for name in names {
        if !all.contains(name) {
            return Err(Error::config(format!(
                "unknown synthetic dataset {name:?}; expected \"all\" or one of {all:?}"
            )));
        }
    }
    Ok(names.to_vec())
}

/// Materialise the configured data source.
pub fn prepare_data(cfg: &ToolConfig) -> Result<Vec<Prepared>> {
    if let Some(names) = &cfg.data.synthetic {
        let mut out = Vec::new();
        for name in resolve_synthetic(names)? {
            let config = canonical_config(&name, cfg.seed, cfg.n_train, cfg.n_test)?;
            let data = generate(&config)?;
            out.push(Prepared {
                name,
                train: data.train,
                test: data.test,
                truth: Some(data.truth),
                normalisation: None,
            });
        }
        return Ok(out);
    }
    if let Some(path) = &cfg.data.csv {
        let schema = cfg.data.schema.as_ref().expect("validated");
        let ingested = ingest_csv(path, schema)?;
        let (train_raw, test_raw) = if ingested.split.is_some() {
            split_by_column(&ingested)?
        } else {
            grouped_split(
                &ingested.dataset,
                cfg.data.test_fraction,
                child_seed(cfg.seed, "split"),
            )?
        };
        let state = NormalisationState::fit(&train_raw)?;
        return Ok(vec![Prepared {
            name: file_stem(path),
            train: state.apply(&train_raw)?,
            test: state.apply(&test_raw)?,
            truth: None,
            normalisation: Some(state),
        }]);
    }
    if let Some(path) = &cfg.data.native {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::config(format!("cannot open {}: {e}", path.display())))?;
        let dataset = ChoiceDataset::read_csv(file)?;
        let (train, test) =
            grouped_split(&dataset, cfg.data.test_fraction, child_seed(cfg.seed, "split"))?;
        return Ok(vec![Prepared {
            name: file_stem(path),
            train,
            test,
            truth: None,
            normalisation: None,
        }]);
    }
    Err(Error::config("the config names no data source"))
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into())
}

/// A model entry fitted on one dataset, with its search history when the
/// entry asked for one.
pub struct FitOutcome {
    pub label: String,
    pub payload: ModelPayload,
    pub hpo: Option<HpoResult>,
}

/// Tune (when requested) and fit one model entry on one prepared dataset.
///
/// The search minimises grouped-CV cross-entropy on the training split; the
/// winning assignment is refitted on the full training split.
pub fn fit_entry(entry: &ModelEntry, data: &Prepared, cfg: &ToolConfig) -> Result<FitOutcome> {
    let design = data.mnl_design();
    let label = entry.label();
    let (spec, hpo) = match &entry.hpo {
        None => (entry.spec.clone(), None),
        Some(search) => {
            let folds = grouped_kfold(
                &data.train,
                cfg.cv_folds,
                child_seed(cfg.seed, &format!("cv/{}/{label}", data.name)),
            )?;
            let hpo_seed = child_seed(cfg.seed, &format!("hpo/{}/{label}", data.name));
            let objective = |assignment: &rumbench::validation::Assignment| {
                let candidate = entry.spec.with_assignment(assignment)?;
                cv_score(&data.train, &folds, |fold, train| {
                    let seed = child_seed(hpo_seed, &format!("fold{fold}"));
                    Ok(Box::new(candidate.fit(train, seed, design)?) as Box<dyn ChoiceModel>)
                })
            };
            let result = match search.optimizer {
                Optimizer::Random => {
                    random_search(&search.space, search.budget, hpo_seed, objective)?
                }
                Optimizer::Tpe => tpe_search(
                    &search.space,
                    search.budget,
                    hpo_seed,
                    &TpeConfig::default(),
                    objective,
                )?,
            };
            let tuned = entry.spec.with_assignment(&result.best().assignment)?;
            (tuned, Some(result))
        }
    };
    let payload = spec.fit(
        &data.train,
        child_seed(cfg.seed, &format!("fit/{}/{label}", data.name)),
        design,
    )?;
    Ok(FitOutcome {
        label: label.to_string(),
        payload,
        hpo,
    })
}

/// Observed choice shares (percent) of a dataset's labels.
pub fn observed_shares(ds: &ChoiceDataset) -> Vec<f64> {
    let k = ds.alternative_names().len();
    let mut counts = vec![0usize; k];
    for &choice in ds.chosen_all() {
        counts[choice] += 1;
    }
    counts
        .into_iter()
        .map(|c| 100.0 * c as f64 / ds.n_rows() as f64)
        .collect()
}

/// True WTP median implied by a synthetic ground truth: the coefficient
/// ratio for linear utilities, the closed-form distribution median for
/// Cobb-Douglas ones; both equal `beta_x / beta_i`.
pub fn true_wtp_median(truth: &GroundTruth) -> Result<f64> {
    let u = truth.utility();
    match u.form {
        UtilityForm::Linear => Ok(u.beta_x / u.beta_i),
        UtilityForm::CobbDouglas => cd_wtp_median(u.beta_x / u.beta_i),
    }
}

fn command_dir(cfg: &ToolConfig, command: &str) -> Result<PathBuf> {
    let hash = report::config_hash(cfg)?;
    Ok(report::run_dir(&cfg.out, command, &hash))
}

fn save_normalisation(dir: &Path, data: &Prepared) -> Result<()> {
    if let Some(state) = &data.normalisation {
        state.save(dir.join(format!("preprocess_{}.json", data.name)))?;
    }
    Ok(())
}

/// Trial history as CSV: trial index, one column per dimension, score.
fn hpo_table(space_hint: &SearchSpace, result: &HpoResult) -> Result<Table> {
    let dims: Vec<&str> = space_hint.dims().iter().map(|d| d.name.as_str()).collect();
    let mut headers = vec!["trial".to_string()];
    headers.extend(dims.iter().map(|d| d.to_string()));
    headers.push("score".into());
    let mut table = Table::new(headers);
    for (t, trial) in result.trials.iter().enumerate() {
        let mut row = vec![t.to_string()];
        for dim in &dims {
            row.push(trial.assignment.get(dim)?.to_string());
        }
        row.push(cell(trial.score));
        table.push(row)?;
    }
    Ok(table)
}

/// WTP/VOT summary row shared by `indicators` and experiment 3.
fn wtp_row(dataset: &str, model: &str, true_median: Option<f64>, s: &WtpSummary) -> Vec<String> {
    vec![
        dataset.to_string(),
        model.to_string(),
        true_median.map_or_else(|| "NA".into(), cell),
        s.q1.map_or_else(|| "NA".into(), cell),
        s.median.map_or_else(|| "NA".into(), cell),
        s.q3.map_or_else(|| "NA".into(), cell),
        cell(s.invalid_fraction),
        s.n_filtered.to_string(),
        s.consistent
            .map_or_else(|| "NA".into(), |c| c.to_string()),
    ]
}

const WTP_HEADERS: [&str; 9] = [
    "dataset",
    "model",
    "true_median",
    "q1",
    "median",
    "q3",
    "invalid_pct",
    "n_filtered",
    "consistent",
];

/// `generate`: write the selected synthetic datasets as CSV pairs.
pub fn run_generate(cfg: &ToolConfig) -> Result<Value> {
    cfg.validate(false)?;
    let Some(names) = &cfg.data.synthetic else {
        return Err(Error::config(
            "generate creates synthetic data; the config selects an external file",
        ));
    };
    let names = resolve_synthetic(names)?;
    let dir = command_dir(cfg, "generate")?;
    let mut configs = Vec::new();
    for name in &names {
        let config = canonical_config(name, cfg.seed, cfg.n_train, cfg.n_test)?;
        let data = generate(&config)?;
        for (split, ds) in [("train", &data.train), ("test", &data.test)] {
            let mut buffer = Vec::new();
            ds.write_csv(&mut buffer)?;
            report::write_atomic(dir.join(format!("{name}_{split}.csv")), &buffer)?;
        }
        configs.push(config);
    }
    report::write_json(dir.join("datasets.json"), &configs)?;
    Ok(json!({
        "command": "generate",
        "dir": dir,
        "datasets": names,
        "rows_per_dataset": {"train": cfg.n_train, "test": cfg.n_test},
    }))
}

/// `fit`: tune (optionally), fit and persist every model on every dataset.
pub fn run_fit(cfg: &ToolConfig) -> Result<Value> {
    cfg.validate(true)?;
    let dir = command_dir(cfg, "fit")?;
    let mut table = Table::new(["dataset", "model", "kind", "n_train", "accuracy", "gmpca"]);
    let mut model_files = Vec::new();
    for data in prepare_data(cfg)? {
        save_normalisation(&dir, &data)?;
        for entry in &cfg.models {
            let outcome = fit_entry(entry, &data, cfg)?;
            let model = outcome.payload.as_model();
            table.push([
                data.name.clone(),
                outcome.label.clone(),
                entry.spec.kind().to_string(),
                data.train.n_rows().to_string(),
                cell(metrics::accuracy(model, &data.train)?),
                cell(metrics::gmpca(model, &data.train)?),
            ])?;
            if let (Some(hpo), Some(search)) = (&outcome.hpo, &entry.hpo) {
                hpo_table(&search.space, hpo)?.save(
                    dir.join(format!("hpo_{}_{}.csv", data.name, outcome.label)),
                )?;
            }
            let path = dir.join(format!("model_{}_{}.json", data.name, outcome.label));
            let doc = ModelDocument::new(outcome.payload);
            report::write_atomic(&path, doc.to_json()?.as_bytes())?;
            model_files.push(path);
        }
    }
    table.save(dir.join("fit.csv"))?;
    Ok(json!({
        "command": "fit",
        "dir": dir,
        "models": model_files,
    }))
}

/// `evaluate`: score models on held-out data.
///
/// With `model_file` set, the persisted model is scored on each dataset's
/// test split; otherwise every configured model is fitted on the training
/// split first.
pub fn run_evaluate(cfg: &ToolConfig) -> Result<Value> {
    let from_file = cfg.model_file.is_some();
    cfg.validate(!from_file)?;
    let dir = command_dir(cfg, "evaluate")?;
    let mut table = Table::new([
        "dataset", "model", "split", "n_rows", "accuracy", "gmpca", "maximum",
    ]);
    let mut push = |ds: &str, model: &str, split: &str, set: &ChoiceDataset, m: &dyn ChoiceModel|
     -> Result<()> {
        table.push([
            ds.to_string(),
            model.to_string(),
            split.to_string(),
            set.n_rows().to_string(),
            cell(metrics::accuracy(m, set)?),
            cell(metrics::gmpca(m, set)?),
            cell(max_accuracy(set).unwrap_or(f64::NAN)),
        ])
    };
    for data in prepare_data(cfg)? {
        if let Some(path) = &cfg.model_file {
            let doc = ModelDocument::load(path)?;
            push(&data.name, doc.payload.kind(), "test", &data.test, doc.as_model())?;
        } else {
            for entry in &cfg.models {
                let outcome = fit_entry(entry, &data, cfg)?;
                let model = outcome.payload.as_model();
                push(&data.name, &outcome.label, "train", &data.train, model)?;
                push(&data.name, &outcome.label, "test", &data.test, model)?;
            }
        }
    }
    table.save(dir.join("metrics.csv"))?;
    Ok(json!({"command": "evaluate", "dir": dir, "metrics": dir.join("metrics.csv")}))
}

/// `hpo`: run the configured searches and report trial histories.
pub fn run_hpo(cfg: &ToolConfig) -> Result<Value> {
    cfg.validate(true)?;
    if cfg.models.iter().all(|m| m.hpo.is_none()) {
        return Err(Error::config("no model entry declares an hpo section"));
    }
    let dir = command_dir(cfg, "hpo")?;
    let mut bests = Vec::new();
    for data in prepare_data(cfg)? {
        for entry in cfg.models.iter().filter(|m| m.hpo.is_some()) {
            let outcome = fit_entry(entry, &data, cfg)?;
            let search = entry.hpo.as_ref().expect("filtered");
            let result = outcome.hpo.expect("search ran");
            hpo_table(&search.space, &result)?
                .save(dir.join(format!("hpo_{}_{}.csv", data.name, outcome.label)))?;
            bests.push(json!({
                "dataset": data.name,
                "model": outcome.label,
                "assignment": result.best().assignment,
                "score": result.best().score,
                "trials": result.trials.len(),
            }));
        }
    }
    report::write_json(dir.join("best.json"), &bests)?;
    Ok(json!({"command": "hpo", "dir": dir, "best": bests}))
}

/// `indicators`: population WTP (synthetic layout) or VOT (external data
/// with a `vot` section) for every dataset and model.
pub fn run_indicators(cfg: &ToolConfig) -> Result<Value> {
    cfg.validate(true)?;
    let dir = command_dir(cfg, "indicators")?;
    let mut table = Table::new(WTP_HEADERS);
    for data in prepare_data(cfg)? {
        for entry in &cfg.models {
            let outcome = fit_entry(entry, &data, cfg)?;
            let model = outcome.payload.as_model();
            let (report, truth_median) = match (&data.truth, &cfg.vot) {
                (Some(truth), _) => (
                    wtp_population(model, &data.train, &IndicatorConfig::synthetic())?,
                    Some(true_wtp_median(truth)?),
                ),
                (None, Some(spec)) => {
                    let time = column_index(&data.train, &spec.time)?;
                    let cost = column_index(&data.train, &spec.cost)?;
                    if spec.alternative >= data.train.alternative_names().len() {
                        return Err(Error::config(format!(
                            "vot alternative {} out of range",
                            spec.alternative
                        )));
                    }
                    (vot(model, &data.train, time, cost, spec.alternative)?, None)
                }
                (None, None) => {
                    return Err(Error::config(
                        "external data needs a vot section naming time and cost columns",
                    ))
                }
            };
            table.push(wtp_row(&data.name, &outcome.label, truth_median, &report.summary()))?;
            if cfg.write_estimates {
                let mut buffer = Vec::new();
                report.write_estimates_csv(&mut buffer)?;
                report::write_atomic(
                    dir.join(format!("estimates_{}_{}.csv", data.name, outcome.label)),
                    &buffer,
                )?;
            }
        }
    }
    table.save(dir.join("wtp.csv"))?;
    Ok(json!({"command": "indicators", "dir": dir, "wtp": dir.join("wtp.csv")}))
}

fn column_index(ds: &ChoiceDataset, name: &str) -> Result<usize> {
    ds.attribute_names()
        .iter()
        .position(|c| c == name)
        .ok_or_else(|| {
            Error::config(format!(
                "column {name:?} not found (it may have been dropped as constant); have {:?}",
                ds.attribute_names()
            ))
        })
}

fn synthetic_sweeps(
    model: &dyn ChoiceModel,
    data: &Prepared,
    cfg: &ToolConfig,
) -> Result<[(&'static str, ProbabilitySweep); 2]> {
    let truth = data.truth.as_ref().expect("synthetic data");
    let seed = child_seed(cfg.seed, &format!("sweep-truth/{}", data.name));
    let make = |range: (f64, f64)| -> Result<ProbabilitySweep> {
        let grid = rumbench::behavioural::sweep_grid(range.0, range.1);
        probability_sweep(model, &SWEEP_BASE, SWEEP_ATTR, &grid)?
            .with_truth(truth, cfg.sweep_draws, seed)
    };
    Ok([
        ("interp", make(INTERP_RANGE)?),
        ("extrap", make(EXTRAP_RANGE)?),
    ])
}

/// `sweep`: probability curves along one attribute.
///
/// Synthetic data sweeps the canonical individual over the interpolation and
/// extrapolation ranges with truth curves attached; external data sweeps the
/// first attribute across its observed range.
pub fn run_sweep(cfg: &ToolConfig) -> Result<Value> {
    cfg.validate(true)?;
    let dir = command_dir(cfg, "sweep")?;
    let mut files = Vec::new();
    for data in prepare_data(cfg)? {
        for entry in &cfg.models {
            let outcome = fit_entry(entry, &data, cfg)?;
            let model = outcome.payload.as_model();
            let sweeps: Vec<(String, ProbabilitySweep)> = if data.truth.is_some() {
                synthetic_sweeps(model, &data, cfg)?
                    .into_iter()
                    .map(|(tag, s)| (tag.to_string(), s))
                    .collect()
            } else {
                let attr = 0;
                let n = data.train.n_rows();
                let base: Vec<f64> = (0..data.train.n_attributes())
                    .map(|c| {
                        (0..n).map(|i| data.train.row(i)[c]).sum::<f64>() / n as f64
                    })
                    .collect();
                let (low, high) = (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |acc, i| {
                    let v = data.train.row(i)[attr];
                    (acc.0.min(v), acc.1.max(v))
                });
                let grid = rumbench::behavioural::sweep_grid(low, high);
                vec![(
                    data.train.attribute_names()[attr].clone(),
                    probability_sweep(model, &base, attr, &grid)?,
                )]
            };
            for (tag, sweep) in sweeps {
                let mut buffer = Vec::new();
                sweep.write_csv(&mut buffer)?;
                let path = dir.join(format!("sweep_{}_{}_{tag}.csv", data.name, outcome.label));
                report::write_atomic(&path, &buffer)?;
                files.push(path);
            }
        }
    }
    Ok(json!({"command": "sweep", "dir": dir, "files": files}))
}

/// Experiment 1: predictive performance. Grouped 5-fold CV on the training
/// split plus held-out test metrics, with the maximum attainable accuracy
/// alongside, one wide table per split.
pub fn run_experiment1(cfg: &ToolConfig) -> Result<Value> {
    cfg.validate(true)?;
    let dir = command_dir(cfg, "exp1")?;
    let mut headers = vec!["dataset".to_string(), "maximum".to_string()];
    for entry in &cfg.models {
        headers.push(format!("{}_accuracy", entry.label()));
        headers.push(format!("{}_gmpca", entry.label()));
    }
    let mut train_table = Table::new(headers.clone());
    let mut test_table = Table::new(headers);
    let datasets = prepare_data(cfg)?;
    for data in &datasets {
        let mut train_row = vec![
            data.name.clone(),
            cell(max_accuracy(&data.train).unwrap_or(f64::NAN)),
        ];
        let mut test_row = vec![
            data.name.clone(),
            cell(max_accuracy(&data.test).unwrap_or(f64::NAN)),
        ];
        for entry in &cfg.models {
            let outcome = fit_entry(entry, data, cfg)?;
            let label = &outcome.label;
            let folds = grouped_kfold(
                &data.train,
                cfg.cv_folds,
                child_seed(cfg.seed, &format!("cv/{}/{label}", data.name)),
            )?;
            let design = data.mnl_design();
            let tuned = match (&entry.hpo, &outcome.hpo) {
                (Some(_), Some(hpo)) => entry.spec.with_assignment(&hpo.best().assignment)?,
                _ => entry.spec.clone(),
            };
            let cv = cv_evaluate(&data.train, &folds, |fold, train| {
                let seed = child_seed(cfg.seed, &format!("cv/{}/{label}/fold{fold}", data.name));
                Ok(Box::new(tuned.fit(train, seed, design)?) as Box<dyn ChoiceModel>)
            })?;
            train_row.push(cell(cv.mean_accuracy()));
            train_row.push(cell(cv.mean_gmpca()));
            let model = outcome.payload.as_model();
            test_row.push(cell(metrics::accuracy(model, &data.test)?));
            test_row.push(cell(metrics::gmpca(model, &data.test)?));
        }
        train_table.push(train_row)?;
        test_table.push(test_row)?;
    }
    train_table.save(dir.join("train_cv.csv"))?;
    test_table.save(dir.join("test.csv"))?;
    report::write_json(dir.join("metadata.json"), cfg)?;
    Ok(json!({
        "command": "experiment1",
        "dir": dir,
        "datasets": datasets.len(),
        "models": cfg.models.len(),
        "folds": cfg.cv_folds,
    }))
}

/// Experiment 2: probability curves of the canonical individual, inside and
/// outside the attribute support, against the true curves.
pub fn run_experiment2(cfg: &ToolConfig) -> Result<Value> {
    cfg.validate(true)?;
    if !cfg.data.is_synthetic() {
        return Err(Error::config(
            "experiment 2 compares against analytic truth and needs synthetic data",
        ));
    }
    let dir = command_dir(cfg, "exp2")?;
    let mut files = Vec::new();
    for data in prepare_data(cfg)? {
        for entry in &cfg.models {
            let outcome = fit_entry(entry, &data, cfg)?;
            for (tag, sweep) in synthetic_sweeps(outcome.payload.as_model(), &data, cfg)? {
                let mut buffer = Vec::new();
                sweep.write_csv(&mut buffer)?;
                let path =
                    dir.join(format!("sweep_{}_{}_{tag}.csv", data.name, outcome.label));
                report::write_atomic(&path, &buffer)?;
                files.push(path);
            }
        }
    }
    report::write_json(dir.join("metadata.json"), cfg)?;
    Ok(json!({"command": "experiment2", "dir": dir, "files": files.len()}))
}

/// Experiment 3: behavioural fidelity. Market shares under the three demand
/// scenarios against Monte Carlo truth, and population WTP distributions
/// against the analytic medians.
pub fn run_experiment3(cfg: &ToolConfig) -> Result<Value> {
    cfg.validate(true)?;
    if !cfg.data.is_synthetic() {
        return Err(Error::config(
            "experiment 3 compares against analytic truth and needs synthetic data",
        ));
    }
    let dir = command_dir(cfg, "exp3")?;
    let mut shares = Table::new([
        "dataset",
        "model",
        "scenario",
        "share_1",
        "share_2",
        "share_3",
        "true_1",
        "true_2",
        "true_3",
        "share_error",
    ]);
    let mut wtp = Table::new(WTP_HEADERS);
    for data in prepare_data(cfg)? {
        let truth = data.truth.as_ref().expect("synthetic data");
        // Uniform attributes make the base scenario exactly symmetric, so
        // its true shares need no simulation.
        let mut true_shares = vec![(Scenario::S1, [100.0 / 3.0; N_ALTERNATIVES])];
        for scenario in [Scenario::S2, Scenario::S3] {
            let seed = child_seed(cfg.seed, &format!("truth/{}/{scenario}", data.name));
            true_shares.push((scenario, truth.market_shares(scenario, cfg.truth_draws, seed)?));
        }
        for entry in &cfg.models {
            let outcome = fit_entry(entry, &data, cfg)?;
            let model = outcome.payload.as_model();
            for (scenario, reference) in &true_shares {
                let transformed = scenario.apply(&data.test)?;
                let estimated = metrics::market_shares(model, &transformed)?;
                let error = metrics::share_error(&estimated, reference)?;
                let mut row = vec![
                    data.name.clone(),
                    outcome.label.clone(),
                    scenario.to_string(),
                ];
                row.extend(estimated.iter().map(|&s| cell(s)));
                row.extend(reference.iter().map(|&s| cell(s)));
                row.push(cell(error));
                shares.push(row)?;
            }
            let report = wtp_population(model, &data.train, &IndicatorConfig::synthetic())?;
            wtp.push(wtp_row(
                &data.name,
                &outcome.label,
                Some(true_wtp_median(truth)?),
                &report.summary(),
            ))?;
        }
    }
    shares.save(dir.join("shares.csv"))?;
    wtp.save(dir.join("wtp.csv"))?;
    report::write_json(dir.join("metadata.json"), cfg)?;
    Ok(json!({"command": "experiment3", "dir": dir}))
}

/// The real-data pipeline: ingest, split without leakage, normalise on the
/// training side, tune and fit each model, then report predictive metrics,
/// share reproduction and value-of-time distributions.
pub fn run_real(cfg: &ToolConfig) -> Result<Value> {
    cfg.validate(true)?;
    if cfg.data.csv.is_none() {
        return Err(Error::config(
            "the real-data pipeline needs csv data with a schema",
        ));
    }
    let dir = command_dir(cfg, "real")?;
    let datasets = prepare_data(cfg)?;
    let mut metrics_table = Table::new([
        "dataset", "model", "split", "n_rows", "accuracy", "gmpca",
    ]);
    let mut shares = Table::new(["dataset", "model", "alternative", "observed", "predicted"]);
    let mut vot_table = Table::new([
        "dataset",
        "model",
        "q1",
        "median",
        "q3",
        "median_normalised",
        "invalid_pct",
        "n_filtered",
        "consistent",
    ]);
    for data in &datasets {
        save_normalisation(&dir, data)?;
        for entry in &cfg.models {
            let outcome = fit_entry(entry, data, cfg)?;
            let model = outcome.payload.as_model();
            for (split, set) in [("train", &data.train), ("test", &data.test)] {
                metrics_table.push([
                    data.name.clone(),
                    outcome.label.clone(),
                    split.to_string(),
                    set.n_rows().to_string(),
                    cell(metrics::accuracy(model, set)?),
                    cell(metrics::gmpca(model, set)?),
                ])?;
            }
            let observed = observed_shares(&data.test);
            let predicted = metrics::market_shares(model, &data.test)?;
            for (a, name) in data.test.alternative_names().iter().enumerate() {
                shares.push([
                    data.name.clone(),
                    outcome.label.clone(),
                    name.clone(),
                    cell(observed[a]),
                    cell(predicted[a]),
                ])?;
            }
            if let Some(spec) = &cfg.vot {
                let time = column_index(&data.train, &spec.time)?;
                let cost = column_index(&data.train, &spec.cost)?;
                let report = vot(model, &data.train, time, cost, spec.alternative)?;
                // The model sees standardised columns; one normalised time
                // unit is std(time) original units, so ratios scale back by
                // std(cost) / std(time).
                let state = data.normalisation.as_ref().expect("csv data");
                let rescale = state.stds[cost] / state.stds[time];
                let summary = report.summary();
                vot_table.push([
                    data.name.clone(),
                    outcome.label.clone(),
                    summary.q1.map_or_else(|| "NA".into(), |v| cell(v * rescale)),
                    summary.median.map_or_else(|| "NA".into(), |v| cell(v * rescale)),
                    summary.q3.map_or_else(|| "NA".into(), |v| cell(v * rescale)),
                    summary.median.map_or_else(|| "NA".into(), cell),
                    cell(summary.invalid_fraction),
                    summary.n_filtered.to_string(),
                    summary
                        .consistent
                        .map_or_else(|| "NA".into(), |c| c.to_string()),
                ])?;
                if cfg.write_estimates {
                    let mut buffer = Vec::new();
                    report.write_estimates_csv(&mut buffer)?;
                    report::write_atomic(
                        dir.join(format!("vot_estimates_{}_{}.csv", data.name, outcome.label)),
                        &buffer,
                    )?;
                }
            }
            if let (Some(hpo), Some(search)) = (&outcome.hpo, &entry.hpo) {
                hpo_table(&search.space, hpo)?
                    .save(dir.join(format!("hpo_{}_{}.csv", data.name, outcome.label)))?;
            }
            let doc = ModelDocument::new(outcome.payload);
            report::write_atomic(
                dir.join(format!("model_{}_{}.json", data.name, outcome.label)),
                doc.to_json()?.as_bytes(),
            )?;
        }
    }
    metrics_table.save(dir.join("metrics.csv"))?;
    shares.save(dir.join("shares.csv"))?;
    if !vot_table.is_empty() {
        vot_table.save(dir.join("vot.csv"))?;
    }
    report::write_json(dir.join("metadata.json"), cfg)?;
    Ok(json!({"command": "real", "dir": dir}))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{default_spec, DataSpec, HpoSpec, ModelSpec};
    use rumbench::validation::Domain;

    /// Small config so command tests stay quick.
    fn tiny_config(out: &Path) -> ToolConfig {
        let mut cfg = ToolConfig::default();
        cfg.data.synthetic = Some(vec!["logit-linear-1".into()]);
        cfg.n_train = 400;
        cfg.n_test = 120;
        cfg.truth_draws = 20_000;
        cfg.sweep_draws = 2_000;
        cfg.seed = 7;
        cfg.out = out.to_path_buf();
        cfg.models = vec![ModelEntry::of(default_spec("mnl").unwrap())];
        cfg
    }

    fn find_dir(base: &Path, prefix: &str) -> PathBuf {
        std::fs::read_dir(base)
            .unwrap()
            .map(|e| e.unwrap().path())
            .find(|p| {
                p.file_name()
                    .unwrap()
                    .to_string_lossy()
                    .starts_with(prefix)
            })
            .unwrap_or_else(|| panic!("no {prefix}-* directory under {}", base.display()))
    }

    #[test]
    fn generate_writes_identical_files_on_rerun() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = tiny_config(tmp.path());
        let summary = run_generate(&cfg).unwrap();
        let dir = PathBuf::from(summary["dir"].as_str().unwrap());
        let train_path = dir.join("logit-linear-1_train.csv");
        let first = std::fs::read(&train_path).unwrap();
        assert!(!first.is_empty());
        run_generate(&cfg).unwrap();
        let second = std::fs::read(&train_path).unwrap();
        assert_eq!(first, second, "regeneration must be byte-identical");
        assert!(dir.join("datasets.json").exists());
    }

    #[test]
    fn evaluate_reports_train_and_test_metrics() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = tiny_config(tmp.path());
        run_evaluate(&cfg).unwrap();
        let dir = find_dir(tmp.path(), "evaluate-");
        let text = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "dataset,model,split,n_rows,accuracy,gmpca,maximum"
        );
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].starts_with("logit-linear-1,mnl,train,400,"));
        let accuracy: f64 = rows[1].split(',').nth(4).unwrap().parse().unwrap();
        assert!(accuracy > 45.0, "test accuracy {accuracy} implausibly low");
    }

    #[test]
    fn fit_persists_loadable_models() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(tmp.path());
        cfg.models.push(ModelEntry::of(ModelSpec::Forest {
            n_trees: Some(5),
            max_features: None,
            max_depth: Some(4),
            min_leaf: None,
            min_split: None,
            criterion: None,
        }));
        run_fit(&cfg).unwrap();
        let dir = find_dir(tmp.path(), "fit-");
        let doc = ModelDocument::load(dir.join("model_logit-linear-1_forest.json")).unwrap();
        assert_eq!(doc.payload.kind(), "forest");
        let probs = doc.as_model().predict_proba_row(&[0.5; 6]).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(dir.join("fit.csv").exists());
    }

    #[test]
    fn hpo_command_reports_trials_and_best() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(tmp.path());
        let mut space = SearchSpace::new();
        space
            .add("l2", Domain::LogUniform { low: 1e-4, high: 1.0 })
            .unwrap();
        cfg.models[0].hpo = Some(HpoSpec {
            space,
            optimizer: Optimizer::Random,
            budget: 3,
        });
        let summary = run_hpo(&cfg).unwrap();
        assert_eq!(summary["best"].as_array().unwrap().len(), 1);
        let dir = find_dir(tmp.path(), "hpo-");
        let trials = std::fs::read_to_string(dir.join("hpo_logit-linear-1_mnl.csv")).unwrap();
        assert_eq!(trials.lines().count(), 4, "header plus three trials");
        assert!(trials.starts_with("trial,l2,score"));

        cfg.models[0].hpo = None;
        assert!(run_hpo(&cfg).is_err(), "no searches configured");
    }

    #[test]
    fn experiment3_tables_have_expected_shape() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = tiny_config(tmp.path());
        run_experiment3(&cfg).unwrap();
        let dir = find_dir(tmp.path(), "exp3-");
        let shares = std::fs::read_to_string(dir.join("shares.csv")).unwrap();
        let lines: Vec<&str> = shares.lines().collect();
        assert_eq!(lines.len(), 1 + 3, "header plus one row per scenario");
        let s1: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(&s1[..3], &["logit-linear-1", "mnl", "S1"]);
        for true_share in &s1[6..9] {
            let v: f64 = true_share.parse().unwrap();
            // Exact 100/3 rendered at six decimals.
            assert!((v - 100.0 / 3.0).abs() < 1e-6, "S1 truth is exact");
        }
        let wtp = std::fs::read_to_string(dir.join("wtp.csv")).unwrap();
        let row: Vec<&str> = wtp.lines().nth(1).unwrap().split(',').collect();
        let true_median: f64 = row[2].parse().unwrap();
        let median: f64 = row[4].parse().unwrap();
        assert!((true_median - 1.0).abs() < 1e-9);
        assert!((median - 1.0).abs() < 0.25, "MNL WTP median {median}");
    }

    #[test]
    fn sweeps_and_experiment2_write_truth_columns() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = tiny_config(tmp.path());
        run_experiment2(&cfg).unwrap();
        let dir = find_dir(tmp.path(), "exp2-");
        let interp =
            std::fs::read_to_string(dir.join("sweep_logit-linear-1_mnl_interp.csv")).unwrap();
        let header = interp.lines().next().unwrap();
        assert_eq!(header, "value,p0,p1,p2,true_p0,true_p1,true_p2");
        assert_eq!(interp.lines().count(), 1 + 201);
        assert!(dir.join("sweep_logit-linear-1_mnl_extrap.csv").exists());
    }

    #[test]
    fn real_pipeline_runs_end_to_end() {
        use crate::ingest::IngestSchema;

        // Synthesise a small labelled file with household groups.
        let tmp = tempfile::tempdir().unwrap();
        let csv_path = tmp.path().join("commute.csv");
        let mut rows = String::from("household,time,cost,purpose,mode\n");
        let mut rng = rumbench::rng::stream(3, "fixture");
        use rand::Rng;
        for h in 0..60 {
            for _ in 0..2 {
                let time: f64 = rng.random_range(10.0..60.0);
                let cost: f64 = rng.random_range(1.0..9.0);
                let purpose = if rng.random_range(0..2) == 0 { "work" } else { "other" };
                // Labels correlated with both columns so fits are sensible.
                let score = -0.05 * time - 0.3 * cost + rng.random_range(-1.0..1.0);
                let mode = if score > -2.9 { "car" } else if score > -3.6 { "bus" } else { "walk" };
                rows.push_str(&format!("h{h},{time},{cost},{purpose},{mode}\n"));
            }
        }
        std::fs::write(&csv_path, rows).unwrap();

        let mut cfg = ToolConfig::default();
        cfg.data = DataSpec {
            synthetic: None,
            csv: Some(csv_path),
            schema: Some(IngestSchema {
                attributes: vec!["time".into(), "cost".into()],
                categoricals: vec!["purpose".into()],
                label: "mode".into(),
                group: Some("household".into()),
                split: None,
            }),
            native: None,
            test_fraction: 0.3,
        };
        cfg.seed = 5;
        cfg.out = tmp.path().join("out");
        cfg.models = vec![ModelEntry::of(default_spec("mnl").unwrap())];
        cfg.vot = Some(crate::config::VotSpec {
            time: "time".into(),
            cost: "cost".into(),
            alternative: 1,
        });
        run_real(&cfg).unwrap();
        let dir = find_dir(&cfg.out, "real-");
        for file in ["metrics.csv", "shares.csv", "vot.csv", "model_commute_mnl.json"] {
            assert!(dir.join(file).exists(), "missing {file}");
        }
        let norm = NormalisationState::load(dir.join("preprocess_commute.json")).unwrap();
        assert_eq!(norm.names.len() + norm.dropped.len(), 4);
    }

    #[test]
    fn command_dirs_depend_on_the_config() {
        let tmp = tempfile::tempdir().unwrap();
        let a = tiny_config(tmp.path());
        let mut b = tiny_config(tmp.path());
        b.seed = 8;
        assert_ne!(
            command_dir(&a, "fit").unwrap(),
            command_dir(&b, "fit").unwrap()
        );
        assert_eq!(
            command_dir(&a, "fit").unwrap(),
            command_dir(&a, "fit").unwrap()
        );
    }

    #[test]
    fn true_wtp_median_covers_both_forms() {
        let configs = canonical_configs(0, 10, 10);
        for config in configs {
            let truth = config.truth();
            let expected = 1.0 / truth.utility().beta_i;
            assert!((true_wtp_median(&truth).unwrap() - expected).abs() < 1e-12);
        }
    }
}
