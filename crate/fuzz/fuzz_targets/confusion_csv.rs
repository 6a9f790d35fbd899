#![no_main]

use libfuzzer_sys::fuzz_target;
use newsframe_core::evaluate::{report, ConfusionMatrix};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cm) = ConfusionMatrix::from_csv(text) {
        assert_eq!(ConfusionMatrix::from_csv(&cm.to_csv()).unwrap(), cm);
        if let Ok(r) = report(&cm) {
            assert!((0.0..=1.0).contains(&r.accuracy));
        }
    }
});
