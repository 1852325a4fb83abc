//! Model documents come from disk, so the loader must survive arbitrary
//! JSON, and any document it validates must be safe to evaluate.

#![no_main]

use libfuzzer_sys::fuzz_target;
use rumbench::ModelDocument;

fuzz_target!(|text: &str| {
    let Ok(doc) = ModelDocument::from_json(text) else {
        return;
    };
    let model = doc.as_model();
    let row = vec![0.25; model.n_features()];
    // Validated payloads must evaluate without panicking; prediction errors
    // are still allowed (they are Results, not crashes).
    if let Ok(probs) = model.predict_proba_row(&row) {
        assert_eq!(probs.len(), model.n_alternatives());
        assert!(probs.iter().all(|p| (0.0..=1.0 + 1e-12).contains(p)));
    }
});
