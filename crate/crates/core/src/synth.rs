//! Synthetic labelled corpora for smoke tests, benchmarks and fixtures.
//!
//! Each frame has its own pool of cue words; a paragraph mixes neutral filler
//! with cues of its main frame (and, sometimes, of one secondary frame), so
//! the main frame is recoverable from the text alone.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codebook::{FrameCode, LabelSet};
use crate::corpus::{Dataset, LabeledParagraph, Paragraph, Split};

const CUES: [&[&str]; 6] = [
    &["attack", "opponent", "rivalry", "blame", "accuses", "feud", "clash", "retort"],
    &["citizen", "family", "victim", "story", "grief", "neighbour", "portrait", "tears"],
    &["dispute", "strike", "protest", "deadlock", "standoff", "quarrel", "walkout", "rift"],
    &["sinful", "virtue", "decency", "faith", "righteous", "shameful", "ethics", "duty"],
    &["budget", "deficit", "pension", "inflation", "wages", "subsidy", "tariff", "revenue"],
    &["weather", "recipe", "concert", "football", "garden", "holiday", "museum", "traffic"],
];

const FILLER: &[&str] = &[
    "the", "report", "said", "on", "monday", "that", "officials", "were", "still", "reviewing",
    "details", "of", "a", "new", "plan", "in", "city", "and", "several", "regions", "after",
    "week", "people", "asked", "about", "what", "comes", "next", "for", "country",
];

/// Cue words that signal a frame in synthetic text.
pub fn cue_words(code: FrameCode) -> &'static [&'static str] {
    CUES[code.index()]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    /// Paragraphs per main frame, in codebook order.
    pub per_frame: [usize; 6],
    pub paragraphs_per_doc: usize,
    /// Probability that a non-NO06 paragraph also carries a secondary frame.
    pub secondary_rate: f64,
    pub split: Split,
    pub coder_id: String,
    pub doc_prefix: String,
}

impl SynthSpec {
    pub fn balanced(per_frame: usize) -> Self {
        SynthSpec {
            per_frame: [per_frame; 6],
            paragraphs_per_doc: 4,
            secondary_rate: 0.2,
            split: Split::Train,
            coder_id: "synth".into(),
            doc_prefix: "syn".into(),
        }
    }
}

fn sentence(rng: &mut ChaCha8Rng, cues: &[&str], n_cues: usize) -> String {
    let mut words: Vec<&str> = (0..10).map(|_| *FILLER.choose(rng).expect("filler")).collect();
    for _ in 0..n_cues {
        let at = rng.gen_range(0..=words.len());
        words.insert(at, cues.choose(rng).expect("cues"));
    }
    let mut s = words.join(" ");
    if let Some(first) = s.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    s.push('.');
    s
}

/// Generates a shuffled dataset. Paragraphs are grouped into documents of
/// `paragraphs_per_doc` consecutive records after shuffling.
pub fn generate(spec: &SynthSpec, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mains: Vec<FrameCode> = FrameCode::ALL
        .into_iter()
        .flat_map(|c| std::iter::repeat(c).take(spec.per_frame[c.index()]))
        .collect();
    mains.shuffle(&mut rng);
    let per_doc = spec.paragraphs_per_doc.max(1);
    let records = mains
        .into_iter()
        .enumerate()
        .map(|(i, main)| {
            let mut frames = BTreeSet::from([main]);
            let mut text = sentence(&mut rng, cue_words(main), 2);
            if main != FrameCode::NO06 && rng.gen_bool(spec.secondary_rate) {
                let others: Vec<FrameCode> = FrameCode::ALL
                    .into_iter()
                    .filter(|c| *c != main && *c != FrameCode::NO06)
                    .collect();
                let second = *others.choose(&mut rng).expect("others");
                frames.insert(second);
                text.push(' ');
                text.push_str(&sentence(&mut rng, cue_words(second), 1));
            }
            text.push(' ');
            text.push_str(&sentence(&mut rng, cue_words(main), 1));
            let doc_id = format!("{}-{:05}", spec.doc_prefix, i / per_doc);
            let ordinal = i % per_doc;
            LabeledParagraph {
                paragraph: Paragraph {
                    para_id: format!("{doc_id}-p{ordinal:04}"),
                    doc_id,
                    ordinal,
                    text,
                },
                labels: LabelSet { frames, main },
                coder_id: spec.coder_id.clone(),
                split: spec.split,
            }
        })
        .collect();
    Dataset::new(records).expect("synthetic records are valid")
}
