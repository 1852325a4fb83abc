//! Probabilistic choice models sharing one estimation-agnostic interface.
//!
//! Every estimator implements [`ChoiceModel`]: it maps a feature row to a
//! probability vector over the alternatives, and hard predictions are the
//! argmax of those probabilities. Metrics, market shares and behavioural
//! indicators consume only this interface, so the econometric baseline and
//! the machine-learning models are scored on identical footing.
//!
//! Fitted models serialise to a versioned JSON [`ModelDocument`] that can be
//! reloaded and validated without re-estimating.

pub mod boost;
pub mod forest;
pub mod mlp;
pub mod mnl;

pub use boost::{Gbdt, GbdtConfig};
pub use forest::{Criterion, Forest, ForestConfig};
pub use mlp::{Activation, Mlp, MlpConfig};
pub use mnl::{Mnl, MnlConfig, MnlDesign, Penalty};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::ChoiceDataset;
use crate::error::{Error, Result};

/// Index of the largest value; ties break toward the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax, in place.
pub fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in values.iter_mut() {
        *v /= sum;
    }
}

/// A fitted probabilistic classifier over a fixed set of alternatives.
pub trait ChoiceModel {
    /// Number of feature columns the model expects.
    fn n_features(&self) -> usize;

    /// Number of alternatives the model scores.
    fn n_alternatives(&self) -> usize;

    /// Probability vector for one feature row; non-negative, sums to 1.
    fn predict_proba_row(&self, row: &[f64]) -> Result<Vec<f64>>;

    /// Row-major probability matrix (`n_rows` x `n_alternatives`).
    fn predict_proba(&self, dataset: &ChoiceDataset) -> Result<Vec<f64>> {
        if dataset.n_attributes() != self.n_features() {
            return Err(Error::dimension(format!(
                "model expects {} features, dataset has {}",
                self.n_features(),
                dataset.n_attributes()
            )));
        }
        let mut out = Vec::with_capacity(dataset.n_rows() * self.n_alternatives());
        for i in 0..dataset.n_rows() {
            out.extend(self.predict_proba_row(dataset.row(i))?);
        }
        Ok(out)
    }

    /// Hard label for one row: argmax of the probabilities, ties toward the
    /// lowest alternative index.
    fn predict_row(&self, row: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba_row(row)?))
    }

    /// Hard labels for every row of a dataset.
    fn predict(&self, dataset: &ChoiceDataset) -> Result<Vec<usize>> {
        if dataset.n_attributes() != self.n_features() {
            return Err(Error::dimension(format!(
                "model expects {} features, dataset has {}",
                self.n_features(),
                dataset.n_attributes()
            )));
        }
        (0..dataset.n_rows())
            .map(|i| self.predict_row(dataset.row(i)))
            .collect()
    }

    /// Downcast hook for the analytic indicator path.
    fn as_mnl(&self) -> Option<&Mnl> {
        None
    }
}

/// Current model document format version.
pub const MODEL_DOCUMENT_VERSION: u32 = 1;

/// Concrete fitted model inside a [`ModelDocument`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelPayload {
    Mnl(Mnl),
    Mlp(Mlp),
    Forest(Forest),
    Gbdt(Gbdt),
}

impl ModelPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelPayload::Mnl(_) => "mnl",
            ModelPayload::Mlp(_) => "mlp",
            ModelPayload::Forest(_) => "forest",
            ModelPayload::Gbdt(_) => "gbdt",
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ModelPayload::Mnl(m) => m.validate(),
            ModelPayload::Mlp(m) => m.validate(),
            ModelPayload::Forest(m) => m.validate(),
            ModelPayload::Gbdt(m) => m.validate(),
        }
    }

    pub fn as_model(&self) -> &dyn ChoiceModel {
        match self {
            ModelPayload::Mnl(m) => m,
            ModelPayload::Mlp(m) => m,
            ModelPayload::Forest(m) => m,
            ModelPayload::Gbdt(m) => m,
        }
    }
}

impl ChoiceModel for ModelPayload {
    fn n_features(&self) -> usize {
        self.as_model().n_features()
    }

    fn n_alternatives(&self) -> usize {
        self.as_model().n_alternatives()
    }

    fn predict_proba_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.as_model().predict_proba_row(row)
    }

    fn as_mnl(&self) -> Option<&Mnl> {
        self.as_model().as_mnl()
    }
}

/// Versioned, self-describing serialisation wrapper for fitted models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: u32,
    #[serde(flatten)]
    pub payload: ModelPayload,
}

impl ModelDocument {
    pub fn new(payload: ModelPayload) -> Self {
        ModelDocument {
            version: MODEL_DOCUMENT_VERSION,
            payload,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parse and structurally validate a document.
    ///
    /// Rejects unknown versions and payloads whose internal structure is
    /// inconsistent (mismatched dimensions, out-of-range tree links,
    /// non-finite parameters), so a loaded model can be evaluated safely.
    pub fn from_json(text: &str) -> Result<Self> {
        // Check the version before parsing the payload: a future format may
        // carry a payload this build cannot even deserialise.
        #[derive(Deserialize)]
        struct VersionProbe {
            version: u32,
        }
        let probe: VersionProbe = serde_json::from_str(text)?;
        if probe.version != MODEL_DOCUMENT_VERSION {
            return Err(Error::UnsupportedVersion(probe.version));
        }
        let doc: ModelDocument = serde_json::from_str(text)?;
        doc.payload.validate()?;
        Ok(doc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(fs::write(path, self.to_json()?)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn as_model(&self) -> &dyn ChoiceModel {
        self.payload.as_model()
    }
}

impl From<Mnl> for ModelDocument {
    fn from(m: Mnl) -> Self {
        ModelDocument::new(ModelPayload::Mnl(m))
    }
}

impl From<Mlp> for ModelDocument {
    fn from(m: Mlp) -> Self {
        ModelDocument::new(ModelPayload::Mlp(m))
    }
}

impl From<Forest> for ModelDocument {
    fn from(m: Forest) -> Self {
        ModelDocument::new(ModelPayload::Forest(m))
    }
}

impl From<Gbdt> for ModelDocument {
    fn from(m: Gbdt) -> Self {
        ModelDocument::new(ModelPayload::Gbdt(m))
    }
}

/// Check that a slice of parameters is finite, for document validation.
pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidModel(format!("non-finite value in {what}")));
    }
    Ok(())
}
