//! Run configurations are user input; parsing and validating arbitrary
//! JSON must never panic.

#![no_main]

use libfuzzer_sys::fuzz_target;
use rumbench_cli::config::ToolConfig;

fuzz_target!(|text: &str| {
    let Ok(config) = ToolConfig::from_json(text) else {
        return;
    };
    let _ = config.validate(true);
    let _ = config.validate(false);
});
