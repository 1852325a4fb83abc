//! JSON run configuration: which data, which models, which seeds.
//!
//! One configuration type drives every subcommand; commands simply ignore
//! the sections they do not need. Unknown model kinds and malformed search
//! spaces are rejected up front so a long run cannot die halfway through on
//! a typo.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use rumbench::models::{
    Activation, Criterion, ForestConfig, GbdtConfig, Mlp, MlpConfig, Mnl, MnlConfig, MnlDesign,
    ModelPayload, Penalty,
};
use rumbench::models::{Forest, Gbdt};
use rumbench::validation::{Assignment, ParamValue, SearchSpace};
use rumbench::{ChoiceDataset, Error, Result};

use crate::ingest::IngestSchema;

/// Estimator settings as they appear in a config file.
///
/// Every field is optional; absent fields take the estimator's defaults, so
/// `{"kind": "forest"}` is a complete entry. The same keys double as
/// hyperparameter names in a search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Mnl {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        l1: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        l2: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grad_tol: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_iter: Option<usize>,
    },
    Mlp {
        /// Hidden layer widths; `[7]` when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hidden: Option<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        activation: Option<Activation>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dropout: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epochs: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        batch_size: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        learning_rate: Option<f64>,
    },
    Forest {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_trees: Option<usize>,
        /// Features per split; `ceil(sqrt(n_features))` when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_features: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_depth: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min_leaf: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min_split: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        criterion: Option<Criterion>,
    },
    Gbdt {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_rounds: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_depth: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        learning_rate: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        l2: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min_split_loss: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min_child_weight: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subsample: Option<f64>,
    },
}

/// Empty-field spec for one estimator kind.
pub fn default_spec(kind: &str) -> Result<ModelSpec> {
    match kind {
        "mnl" => Ok(ModelSpec::Mnl {
            l1: None,
            l2: None,
            grad_tol: None,
            max_iter: None,
        }),
        "mlp" => Ok(ModelSpec::Mlp {
            hidden: None,
            activation: None,
            dropout: None,
            epochs: None,
            batch_size: None,
            learning_rate: None,
        }),
        "forest" => Ok(ModelSpec::Forest {
            n_trees: None,
            max_features: None,
            max_depth: None,
            min_leaf: None,
            min_split: None,
            criterion: None,
        }),
        "gbdt" => Ok(ModelSpec::Gbdt {
            n_rounds: None,
            max_depth: None,
            learning_rate: None,
            l2: None,
            min_split_loss: None,
            min_child_weight: None,
            subsample: None,
        }),
        other => Err(Error::config(format!(
            "unknown model kind {other:?}; expected mnl, mlp, forest or gbdt"
        ))),
    }
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::Mnl { .. } => "mnl",
            ModelSpec::Mlp { .. } => "mlp",
            ModelSpec::Forest { .. } => "forest",
            ModelSpec::Gbdt { .. } => "gbdt",
        }
    }

    /// Fit this spec on a training set.
    ///
    /// `design` tells the MNL how columns map to utilities; the caller picks
    /// it because only the pipeline knows whether the data follows the
    /// per-alternative attribute layout or is a flat feature table.
    pub fn fit(
        &self,
        train: &ChoiceDataset,
        seed: u64,
        design: MnlDesign,
    ) -> Result<ModelPayload> {
        match self {
            ModelSpec::Mnl {
                l1,
                l2,
                grad_tol,
                max_iter,
            } => {
                let mut cfg = MnlConfig::new(design);
                match (l1, l2) {
                    (Some(_), Some(_)) => {
                        return Err(Error::config(
                            "mnl config sets both l1 and l2; pick one penalty",
                        ))
                    }
                    (Some(lambda), None) => cfg.penalty = Penalty::L1 { lambda: *lambda },
                    (None, Some(lambda)) => cfg.penalty = Penalty::L2 { lambda: *lambda },
                    (None, None) => {}
                }
                if let Some(tol) = grad_tol {
                    cfg.grad_tol = *tol;
                }
                if let Some(iters) = max_iter {
                    cfg.max_iter = *iters;
                }
                Ok(ModelPayload::Mnl(Mnl::fit(train, &cfg)?))
            }
            ModelSpec::Mlp {
                hidden,
                activation,
                dropout,
                epochs,
                batch_size,
                learning_rate,
            } => {
                let mut cfg = MlpConfig::new(hidden.clone().unwrap_or_else(|| vec![7]));
                if let Some(a) = activation {
                    cfg.activation = *a;
                }
                if let Some(d) = dropout {
                    cfg.dropout = *d;
                }
                if let Some(e) = epochs {
                    cfg.epochs = *e;
                }
                if let Some(b) = batch_size {
                    cfg.batch_size = *b;
                }
                if let Some(lr) = learning_rate {
                    cfg.learning_rate = *lr;
                }
                cfg.seed = seed;
                Ok(ModelPayload::Mlp(Mlp::fit(train, &cfg)?))
            }
            ModelSpec::Forest {
                n_trees,
                max_features,
                max_depth,
                min_leaf,
                min_split,
                criterion,
            } => {
                let default_features =
                    (train.n_attributes() as f64).sqrt().ceil() as usize;
                let mut cfg = ForestConfig::new(
                    max_features.unwrap_or(default_features.max(1)),
                    seed,
                );
                if let Some(n) = n_trees {
                    cfg.n_trees = *n;
                }
                if let Some(d) = max_depth {
                    cfg.max_depth = *d;
                }
                if let Some(m) = min_leaf {
                    cfg.min_leaf = *m;
                }
                if let Some(m) = min_split {
                    cfg.min_split = *m;
                }
                if let Some(c) = criterion {
                    cfg.criterion = *c;
                }
                Ok(ModelPayload::Forest(Forest::fit(train, &cfg)?))
            }
            ModelSpec::Gbdt {
                n_rounds,
                max_depth,
                learning_rate,
                l2,
                min_split_loss,
                min_child_weight,
                subsample,
            } => {
                let mut cfg = GbdtConfig::new(seed);
                if let Some(n) = n_rounds {
                    cfg.n_rounds = *n;
                }
                if let Some(d) = max_depth {
                    cfg.max_depth = *d;
                }
                if let Some(lr) = learning_rate {
                    cfg.learning_rate = *lr;
                }
                if let Some(lambda) = l2 {
                    cfg.l2 = *lambda;
                }
                if let Some(g) = min_split_loss {
                    cfg.min_split_loss = *g;
                }
                if let Some(w) = min_child_weight {
                    cfg.min_child_weight = *w;
                }
                if let Some(s) = subsample {
                    cfg.subsample = *s;
                }
                Ok(ModelPayload::Gbdt(Gbdt::fit(train, &cfg)?))
            }
        }
    }

    /// Copy of this spec with a hyperparameter assignment written in.
    ///
    /// Keys are the spec's own field names (`hidden` expands to `n1`..`n4`
    /// since assignments hold scalars). Unknown keys are an error: a typo in
    /// a search space must not silently search nothing.
    pub fn with_assignment(&self, assignment: &Assignment) -> Result<ModelSpec> {
        let mut spec = self.clone();
        for (key, value) in &assignment.0 {
            spec.set(key, value)?;
        }
        if let ModelSpec::Mlp { hidden, .. } = &mut spec {
            // Widths arrive as n1..n4; zero truncates the stack.
            if let Some(layers) = hidden {
                if layers.contains(&0) {
                    let cut = layers.iter().position(|&w| w == 0).unwrap();
                    layers.truncate(cut);
                    if layers.is_empty() {
                        return Err(Error::config("n1 must be at least 1"));
                    }
                }
            }
        }
        Ok(spec)
    }

    fn set(&mut self, key: &str, value: &ParamValue) -> Result<()> {
        let kind = self.kind();
        let unknown = move || {
            Error::config(format!(
                "hyperparameter {key:?} does not apply to a {kind} model"
            ))
        };
        let usize_of = |v: &ParamValue| -> Result<usize> {
            let raw = v.as_int()?;
            usize::try_from(raw)
                .map_err(|_| Error::config(format!("{key} must be non-negative, got {raw}")))
        };
        match self {
            ModelSpec::Mnl { l1, l2, .. } => match key {
                "l1" => *l1 = Some(value.as_real()?),
                "l2" => *l2 = Some(value.as_real()?),
                _ => return Err(unknown()),
            },
            ModelSpec::Mlp {
                hidden,
                activation,
                dropout,
                epochs,
                batch_size,
                learning_rate,
            } => match key {
                "n1" | "n2" | "n3" | "n4" => {
                    let slot = key[1..].parse::<usize>().unwrap() - 1;
                    let layers = hidden.get_or_insert_with(Vec::new);
                    if layers.len() <= slot {
                        layers.resize(slot + 1, 1);
                    }
                    layers[slot] = usize_of(value)?;
                }
                "activation" => {
                    *activation = Some(match value.as_text()? {
                        "tanh" => Activation::Tanh,
                        "relu" => Activation::Relu,
                        other => {
                            return Err(Error::config(format!(
                                "unknown activation {other:?}"
                            )))
                        }
                    })
                }
                "dropout" => *dropout = Some(value.as_real()?),
                "epochs" => *epochs = Some(usize_of(value)?),
                "batch_size" => *batch_size = Some(usize_of(value)?),
                "learning_rate" => *learning_rate = Some(value.as_real()?),
                _ => return Err(unknown()),
            },
            ModelSpec::Forest {
                n_trees,
                max_features,
                max_depth,
                min_leaf,
                min_split,
                criterion,
            } => match key {
                "n_trees" => *n_trees = Some(usize_of(value)?),
                "max_features" => *max_features = Some(usize_of(value)?),
                "max_depth" => *max_depth = Some(usize_of(value)?),
                "min_leaf" => *min_leaf = Some(usize_of(value)?),
                "min_split" => *min_split = Some(usize_of(value)?),
                "criterion" => {
                    *criterion = Some(match value.as_text()? {
                        "gini" => Criterion::Gini,
                        "entropy" => Criterion::Entropy,
                        other => {
                            return Err(Error::config(format!(
                                "unknown criterion {other:?}"
                            )))
                        }
                    })
                }
                _ => return Err(unknown()),
            },
            ModelSpec::Gbdt {
                n_rounds,
                max_depth,
                learning_rate,
                l2,
                min_split_loss,
                min_child_weight,
                subsample,
            } => match key {
                "n_rounds" => *n_rounds = Some(usize_of(value)?),
                "max_depth" => *max_depth = Some(usize_of(value)?),
                "learning_rate" => *learning_rate = Some(value.as_real()?),
                "l2" => *l2 = Some(value.as_real()?),
                "min_split_loss" => *min_split_loss = Some(value.as_real()?),
                "min_child_weight" => *min_child_weight = Some(value.as_real()?),
                "subsample" => *subsample = Some(value.as_real()?),
                _ => return Err(unknown()),
            },
        }
        Ok(())
    }
}

/// Which optimizer drives a hyperparameter search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Random,
    #[default]
    Tpe,
}

/// Search instructions attached to one model entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpoSpec {
    pub space: SearchSpace,
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_budget() -> usize {
    16
}

impl HpoSpec {
    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        if self.budget == 0 {
            return Err(Error::config("hpo budget must be positive"));
        }
        Ok(())
    }
}

/// One model in the run: a spec, a display label and an optional search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    #[serde(flatten)]
    pub spec: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hpo: Option<HpoSpec>,
}

impl ModelEntry {
    pub fn of(spec: ModelSpec) -> Self {
        ModelEntry {
            spec,
            label: None,
            hpo: None,
        }
    }

    /// Name used in file names and report rows.
    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or_else(|| self.spec.kind())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(label) = &self.label {
            if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(Error::config(format!(
                    "model label {label:?} must be non-empty and use only letters, digits, - and _"
                )));
            }
        }
        if let Some(hpo) = &self.hpo {
            hpo.validate()?;
            // Fail now, not on trial 1 of a long run.
            let probe = hpo.space.sample(&mut rumbench::rng::stream(0, "probe"));
            self.spec.with_assignment(&probe)?;
        }
        Ok(())
    }
}

/// Where the run's data comes from: canonical synthetic sets, an external
/// CSV with a schema, or a file in this tool's own dataset format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    /// Canonical synthetic dataset names; `["all"]` selects all twelve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<Vec<String>>,
    /// External CSV, described by `schema`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<IngestSchema>,
    /// Dataset in the format written by the `generate` command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub native: Option<PathBuf>,
    /// Held-out fraction when the file does not declare its own split.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

fn default_test_fraction() -> f64 {
    0.3
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec {
            synthetic: Some(vec!["all".into()]),
            csv: None,
            schema: None,
            native: None,
            test_fraction: default_test_fraction(),
        }
    }
}

impl DataSpec {
    pub fn validate(&self) -> Result<()> {
        let sources =
            [self.synthetic.is_some(), self.csv.is_some(), self.native.is_some()]
                .iter()
                .filter(|&&s| s)
                .count();
        if sources != 1 {
            return Err(Error::config(
                "data must name exactly one source: synthetic, csv or native",
            ));
        }
        if self.csv.is_some() != self.schema.is_some() {
            return Err(Error::config(
                "csv data and schema must be given together",
            ));
        }
        if let Some(names) = &self.synthetic {
            if names.is_empty() {
                return Err(Error::config("synthetic selector must name a dataset"));
            }
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::config("test_fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn is_synthetic(&self) -> bool {
        self.synthetic.is_some()
    }
}

/// Time/cost column roles for value-of-time reports on external data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotSpec {
    /// Travel-time column name.
    pub time: String,
    /// Cost column name.
    pub cost: String,
    /// Alternative whose probability is differentiated.
    #[serde(default)]
    pub alternative: usize,
}

/// Complete description of one run. Commands ignore sections they do not
/// use, so the same file can drive `generate`, `fit` and `experiment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolConfig {
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub models: Vec<ModelEntry>,
    /// Master seed; every randomised stage derives a named child seed.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    /// Monte Carlo draws for ground-truth shares and probit probabilities.
    #[serde(default = "default_truth_draws")]
    pub truth_draws: usize,
    /// Cheaper draw count for per-point truth curves along sweeps.
    #[serde(default = "default_sweep_draws")]
    pub sweep_draws: usize,
    #[serde(default = "default_cv_folds")]
    pub cv_folds: usize,
    /// Output directory; each command writes into a hash-stamped
    /// subdirectory.
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Fitted model document for `evaluate`, `indicators` and `sweep`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_file: Option<PathBuf>,
    /// Also write per-individual indicator estimates, not just summaries.
    #[serde(default)]
    pub write_estimates: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vot: Option<VotSpec>,
}

fn default_n_train() -> usize {
    10_000
}

fn default_n_test() -> usize {
    1_000
}

fn default_truth_draws() -> usize {
    1_000_000
}

fn default_sweep_draws() -> usize {
    20_000
}

fn default_cv_folds() -> usize {
    5
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ToolConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config is valid")
    }
}

impl ToolConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ToolConfig = serde_json::from_str(text)?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Check the sections a command is about to use.
    pub fn validate(&self, needs_models: bool) -> Result<()> {
        self.data.validate()?;
        if needs_models && self.models.is_empty() {
            return Err(Error::config("the run declares no models"));
        }
        let mut labels = std::collections::BTreeSet::new();
        for entry in &self.models {
            entry.validate()?;
            if !labels.insert(entry.label().to_string()) {
                return Err(Error::config(format!(
                    "duplicate model label {:?}",
                    entry.label()
                )));
            }
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::config("n_train and n_test must be positive"));
        }
        if self.truth_draws == 0 || self.sweep_draws == 0 {
            return Err(Error::config("draw counts must be positive"));
        }
        if self.cv_folds < 2 {
            return Err(Error::config("cv_folds must be at least 2"));
        }
        Ok(())
    }
}
