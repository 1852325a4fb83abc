//! Orchestration for the choice-model benchmark: configuration files,
//! external-data ingestion, train-referenced normalisation, experiment
//! runners and report emission.
//!
//! The binary in `main.rs` is a thin argument-parsing shell; everything it
//! does goes through this library so runs are scriptable and testable.

pub mod config;
pub mod ingest;
pub mod normalise;
pub mod report;
pub mod runner;
