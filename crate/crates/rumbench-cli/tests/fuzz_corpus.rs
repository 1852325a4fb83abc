//! Replay the fuzz corpus seeds through the same entry points the fuzz
//! targets call, so the plain test suite exercises every checked-in seed
//! without needing the fuzzing toolchain.

use std::fs;
use std::path::PathBuf;

use rumbench::synth::SyntheticConfig;
use rumbench::{ChoiceDataset, ModelDocument};
use rumbench_cli::config::ToolConfig;
use rumbench_cli::ingest::{ingest_reader, IngestSchema};

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut seeds: Vec<(String, Vec<u8>)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("corpus dir {} missing: {e}", dir.display()))
        .map(|entry| {
            let path = entry.unwrap().path();
            (
                path.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&path).unwrap(),
            )
        })
        .collect();
    assert!(!seeds.is_empty(), "no seeds for {target}");
    seeds.sort();
    seeds
}

#[test]
fn dataset_csv_seeds_parse_or_error_cleanly() {
    let mut accepted = 0;
    for (name, bytes) in corpus("dataset_csv") {
        if let Ok(ds) = ChoiceDataset::read_csv(bytes.as_slice()) {
            accepted += 1;
            let mut buffer = Vec::new();
            ds.write_csv(&mut buffer).unwrap();
            let again = ChoiceDataset::read_csv(buffer.as_slice()).unwrap();
            assert_eq!(again.chosen_all(), ds.chosen_all(), "{name}");
        }
    }
    assert!(accepted >= 2, "the known-good seeds must parse");
}

#[test]
fn ingest_csv_seeds_parse_or_error_cleanly() {
    let schema = IngestSchema {
        attributes: vec!["time".into(), "cost".into()],
        categoricals: vec!["purpose".into()],
        label: "mode".into(),
        group: Some("person".into()),
        split: Some("part".into()),
    };
    let mut accepted = 0;
    for (_, bytes) in corpus("ingest_csv") {
        if let Ok(ingested) = ingest_reader(bytes.as_slice(), &schema) {
            accepted += 1;
            assert!(ingested.dataset.n_rows() > 0);
        }
    }
    assert_eq!(accepted, 1, "exactly the valid seed parses");
}

#[test]
fn model_json_seeds_load_or_error_cleanly() {
    let mut accepted = 0;
    for (name, bytes) in corpus("model_json") {
        let Ok(text) = std::str::from_utf8(&bytes) else {
            continue;
        };
        if let Ok(doc) = ModelDocument::from_json(text) {
            accepted += 1;
            let model = doc.as_model();
            let probs = model
                .predict_proba_row(&vec![0.25; model.n_features()])
                .unwrap();
            let total: f64 = probs.iter().sum();
            assert!((total - 1.0).abs() < 1e-9, "{name}");
        }
    }
    assert_eq!(accepted, 2, "the mnl and forest documents must load");
}

#[test]
fn tool_config_seeds_parse() {
    for (name, bytes) in corpus("tool_config_json") {
        let text = std::str::from_utf8(&bytes).unwrap();
        let config = ToolConfig::from_json(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        // Validation may fail (e.g. a referenced file is absent) but must
        // not panic.
        let _ = config.validate(true);
    }
}

#[test]
fn synth_config_seeds_generate() {
    for (name, bytes) in corpus("synth_config_json") {
        let text = std::str::from_utf8(&bytes).unwrap();
        let mut config: SyntheticConfig =
            serde_json::from_str(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        config.validate().unwrap();
        config.n_train = 4;
        config.n_test = 2;
        let data = rumbench::synth::generate(&config).unwrap();
        assert_eq!(data.train.n_rows(), 4, "{name}");
    }
}
