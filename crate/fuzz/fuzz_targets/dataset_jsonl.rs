#![no_main]

use libfuzzer_sys::fuzz_target;
use newsframe_core::corpus::{dataset_to_jsonl, parse_dataset};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ds) = parse_dataset(text) {
        let again = parse_dataset(&dataset_to_jsonl(&ds)).expect("serialized dataset reparses");
        assert_eq!(again, ds);
    }
});
