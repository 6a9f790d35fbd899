#![no_main]

use libfuzzer_sys::fuzz_target;
use newsframe_core::annotate::parse_annotations;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_annotations(text) {
        for r in records {
            r.labels().validate().expect("parsed annotations are valid");
        }
    }
});
