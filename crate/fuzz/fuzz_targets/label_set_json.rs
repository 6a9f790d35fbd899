#![no_main]

use libfuzzer_sys::fuzz_target;
use newsframe_core::codebook::{validate_label_set, LabelSet};

fuzz_target!(|data: &[u8]| {
    if let Ok(ls) = serde_json::from_slice::<LabelSet>(data) {
        let verdict = validate_label_set(&ls);
        let reordered = LabelSet { frames: ls.frames.iter().rev().copied().collect(), main: ls.main };
        assert_eq!(verdict.is_ok(), validate_label_set(&reordered).is_ok());
    }
});
