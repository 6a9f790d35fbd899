#![no_main]

use libfuzzer_sys::fuzz_target;
use newsframe_core::corpus::{extract_paragraphs, SourceDocument};

fuzz_target!(|data: &[u8]| {
    let Ok(body) = std::str::from_utf8(data) else { return };
    let doc = SourceDocument {
        doc_id: "fuzz".into(),
        url: String::new(),
        language: "en".into(),
        body: body.to_string(),
    };
    if let Ok(paras) = extract_paragraphs(&doc, 10) {
        for (i, p) in paras.iter().enumerate() {
            assert_eq!(p.ordinal, i);
            assert!(p.text.chars().count() >= 10);
        }
    }
});
