//! The native dataset reader must reject arbitrary bytes gracefully, and
//! anything it accepts must survive a write/read round trip.

#![no_main]

use libfuzzer_sys::fuzz_target;
use rumbench::ChoiceDataset;

fuzz_target!(|data: &[u8]| {
    let Ok(dataset) = ChoiceDataset::read_csv(data) else {
        return;
    };
    let mut buffer = Vec::new();
    dataset.write_csv(&mut buffer).expect("accepted data writes");
    let again = ChoiceDataset::read_csv(buffer.as_slice()).expect("own output parses");
    assert_eq!(again.n_rows(), dataset.n_rows());
    assert_eq!(again.chosen_all(), dataset.chosen_all());
});
