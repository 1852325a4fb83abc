//! Schema-driven ingestion over arbitrary bytes: errors are fine, panics
//! are not, and accepted files must produce a structurally sound dataset.

#![no_main]

use libfuzzer_sys::fuzz_target;
use rumbench_cli::ingest::{ingest_reader, IngestSchema};

fuzz_target!(|data: &[u8]| {
    let schema = IngestSchema {
        attributes: vec!["time".into(), "cost".into()],
        categoricals: vec!["purpose".into()],
        label: "mode".into(),
        group: Some("person".into()),
        split: Some("part".into()),
    };
    let Ok(ingested) = ingest_reader(data, &schema) else {
        return;
    };
    let ds = &ingested.dataset;
    assert!(ds.n_rows() > 0);
    assert!(ds.alternative_names().len() >= 2);
    assert_eq!(ingested.split.as_ref().map(Vec::len), Some(ds.n_rows()));
    for i in 0..ds.n_rows() {
        assert!(ds.chosen(i) < ds.alternative_names().len());
        assert!(ds.row(i).iter().all(|v| v.is_finite()));
    }
});
