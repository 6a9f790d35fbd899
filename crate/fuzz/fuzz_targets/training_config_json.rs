#![no_main]

use libfuzzer_sys::fuzz_target;
use newsframe_core::TrainingConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = serde_json::from_slice::<TrainingConfig>(data) {
        let _ = cfg.validate();
        let _ = cfg.fingerprint();
    }
});
