#![no_main]

use libfuzzer_sys::fuzz_target;
use newsframe_core::corpus::parse_paragraphs;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_paragraphs(text);
    }
});
