//! Benchmarking toolkit for discrete choice models.
//!
//! `rumbench` generates synthetic mode-choice data with a known random-utility
//! ground truth, fits both econometric (multinomial logit) and machine-learning
//! estimators (multilayer perceptrons, random forests, gradient boosting) from
//! scratch, and compares them on probability-aware metrics, market-share
//! scenarios and derivative-based behavioural indicators such as
//! willingness-to-pay and value of time.
//!
//! The crate is organised around [`ChoiceDataset`], the exchange format
//! every module consumes:
//!
//! * [`synth`] draws datasets with analytic ground truth,
//! * [`models`] fits probabilistic classifiers implementing [`ChoiceModel`],
//! * [`validation`] provides grouped splits, cross-validation and
//!   hyper-parameter search,
//! * [`metrics`] scores predictions and market-share scenarios,
//! * [`behavioural`] extracts economic indicators from fitted models.
//!
//! All randomness flows through named [`rng`] streams derived from a single
//! master seed, so every artefact is reproducible bit for bit.

pub mod behavioural;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod synth;
pub mod validation;

pub use dataset::ChoiceDataset;
pub use error::{Error, Result};
pub use models::{ChoiceModel, ModelDocument};
