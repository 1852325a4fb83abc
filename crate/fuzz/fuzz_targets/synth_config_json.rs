//! Synthetic dataset configurations parse from JSON; validation must
//! reject malformed ones without panicking, and a tiny generation from any
//! accepted configuration must succeed.

#![no_main]

use libfuzzer_sys::fuzz_target;
use rumbench::synth::{generate, SyntheticConfig};

fuzz_target!(|text: &str| {
    let Ok(mut config) = serde_json::from_str::<SyntheticConfig>(text) else {
        return;
    };
    if config.validate().is_err() {
        return;
    }
    // Generation cost is bounded by the row counts, not the fuzzed values.
    config.n_train = 4;
    config.n_test = 2;
    let data = generate(&config).expect("valid config generates");
    assert_eq!(data.train.n_rows(), 4);
    assert_eq!(data.test.n_rows(), 2);
});
