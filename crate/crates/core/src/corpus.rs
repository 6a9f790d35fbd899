//! Source documents, paragraph units and labelled datasets.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ego_tree::NodeRef;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scraper::{Html, Node};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codebook::{FrameCode, LabelSet, LabelViolations, NUM_FRAMES};

/// Blocks shorter than this many characters are treated as navigation
/// debris and dropped during extraction.
pub const DEFAULT_MIN_PARAGRAPH_CHARS: usize = 40;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("document {doc_id} has an empty body")]
    EmptyBody { doc_id: String },
    #[error("translation of document {doc_id} failed: {reason}")]
    Translation { doc_id: String, reason: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("record {para_id}: {source}")]
    Validation {
        para_id: String,
        #[source]
        source: LabelViolations,
    },
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("record {para_id} is tagged {found} in a {expected} dataset")]
    SplitMismatch {
        para_id: String,
        expected: DatasetSplit,
        found: Split,
    },
    #[error("cannot sample {requested} items from {available}")]
    Sampling { requested: usize, available: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceDocument {
    pub doc_id: String,
    #[serde(default)]
    pub url: String,
    pub language: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paragraph {
    pub para_id: String,
    pub doc_id: String,
    pub ordinal: usize,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Gold,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Gold => "gold",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSplit {
    Train,
    Gold,
    Mixed,
}

impl fmt::Display for DatasetSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetSplit::Train => "train",
            DatasetSplit::Gold => "gold",
            DatasetSplit::Mixed => "mixed",
        })
    }
}

impl From<Split> for DatasetSplit {
    fn from(s: Split) -> Self {
        match s {
            Split::Train => DatasetSplit::Train,
            Split::Gold => DatasetSplit::Gold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledParagraph {
    pub paragraph: Paragraph,
    pub labels: LabelSet,
    pub coder_id: String,
    pub split: Split,
}

impl LabeledParagraph {
    pub fn main(&self) -> FrameCode {
        self.labels.main
    }
}

/// An ordered, validated collection of labelled paragraphs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    records: Vec<LabeledParagraph>,
    split: DatasetSplit,
}

impl Dataset {
    /// Builds a dataset, checking label validity and para_id uniqueness. The
    /// split is `Mixed` unless every record carries the same tag.
    pub fn new(records: Vec<LabeledParagraph>) -> Result<Self, CorpusError> {
        let split = match records.first() {
            Some(first) if records.iter().all(|r| r.split == first.split) => first.split.into(),
            Some(_) => DatasetSplit::Mixed,
            None => DatasetSplit::Mixed,
        };
        Self::with_split(records, split)
    }

    pub fn with_split(
        records: Vec<LabeledParagraph>,
        split: DatasetSplit,
    ) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            r.labels
                .validate()
                .map_err(|source| CorpusError::Validation {
                    para_id: r.paragraph.para_id.clone(),
                    source,
                })?;
            if !seen.insert(r.paragraph.para_id.as_str()) {
                return Err(CorpusError::DuplicateId(r.paragraph.para_id.clone()));
            }
            if split != DatasetSplit::Mixed && DatasetSplit::from(r.split) != split {
                return Err(CorpusError::SplitMismatch {
                    para_id: r.paragraph.para_id.clone(),
                    expected: split,
                    found: r.split,
                });
            }
        }
        Ok(Dataset { records, split })
    }

    pub fn records(&self) -> &[LabeledParagraph] {
        &self.records
    }

    pub fn into_records(self) -> Vec<LabeledParagraph> {
        self.records
    }

    pub fn split(&self) -> DatasetSplit {
        self.split
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn doc_ids(&self) -> BTreeSet<String> {
        self.records
            .iter()
            .map(|r| r.paragraph.doc_id.clone())
            .collect()
    }

    /// Records carrying the given split tag, as a single-split dataset.
    pub fn filter_split(&self, split: Split) -> Dataset {
        Dataset {
            records: self
                .records
                .iter()
                .filter(|r| r.split == split)
                .cloned()
                .collect(),
            split: split.into(),
        }
    }

    /// Subset by record position, keeping the order given.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let records: Vec<_> = indices.iter().map(|&i| self.records[i].clone()).collect();
        let split = match records.first() {
            Some(first) if records.iter().all(|r| r.split == first.split) => first.split.into(),
            _ => self.split,
        };
        Dataset { records, split }
    }
}

/// Splits a document body into paragraph units.
///
/// Markup bodies yield one candidate per block-level element; plain text
/// bodies yield one candidate per blank-line-separated run. Whitespace is
/// collapsed and candidates shorter than `min_chars` characters are dropped
/// before ordinals are assigned.
pub fn extract_paragraphs(
    doc: &SourceDocument,
    min_chars: usize,
) -> Result<Vec<Paragraph>, CorpusError> {
    if doc.body.trim().is_empty() {
        return Err(CorpusError::EmptyBody {
            doc_id: doc.doc_id.clone(),
        });
    }
    let blocks = if looks_like_markup(&doc.body) {
        markup_blocks(&doc.body)
    } else {
        plain_blocks(&doc.body)
    };
    Ok(blocks
        .into_iter()
        .map(|b| normalize_whitespace(&b))
        .filter(|t| !t.is_empty() && t.chars().count() >= min_chars)
        .enumerate()
        .map(|(ordinal, text)| Paragraph {
            para_id: format!("{}-p{:04}", doc.doc_id, ordinal),
            doc_id: doc.doc_id.clone(),
            ordinal,
            text,
        })
        .collect())
}

pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

const BLOCK_TAGS: &[&str] = &[
    "address", "article", "aside", "blockquote", "body", "caption", "dd", "details", "div",
    "dl", "dt", "figcaption", "figure", "footer", "form", "h1", "h2", "h3", "h4", "h5", "h6",
    "header", "hr", "html", "li", "main", "nav", "ol", "p", "pre", "section", "summary",
    "table", "tbody", "td", "tfoot", "th", "thead", "tr", "ul",
];

const SKIPPED_TAGS: &[&str] = &["head", "script", "style", "noscript", "template", "svg"];

fn looks_like_markup(body: &str) -> bool {
    let lower = body.to_ascii_lowercase();
    lower.match_indices('<').any(|(i, _)| {
        let rest = &lower[i + 1..];
        let rest = rest.strip_prefix('/').unwrap_or(rest);
        BLOCK_TAGS.iter().chain(["br", "!doctype"].iter()).any(|tag| {
            rest.starts_with(tag)
                && matches!(
                    rest.as_bytes().get(tag.len()),
                    Some(b'>' | b' ' | b'/' | b'\n' | b'\t' | b'\r')
                )
        })
    })
}

fn markup_blocks(body: &str) -> Vec<String> {
    let html = Html::parse_document(body);
    let mut blocks = Vec::new();
    let mut current = String::new();
    walk(html.tree.root(), &mut current, &mut blocks);
    blocks.push(current);
    blocks
}

fn walk(node: NodeRef<'_, Node>, current: &mut String, blocks: &mut Vec<String>) {
    match node.value() {
        Node::Text(t) => current.push_str(t),
        Node::Element(e) => {
            let name = e.name();
            if SKIPPED_TAGS.contains(&name) {
                return;
            }
            if name == "br" {
                current.push(' ');
                return;
            }
            let block = BLOCK_TAGS.contains(&name);
            if block {
                blocks.push(std::mem::take(current));
            }
            for child in node.children() {
                walk(child, current, blocks);
            }
            if block {
                blocks.push(std::mem::take(current));
            }
        }
        Node::Document | Node::Fragment => {
            for child in node.children() {
                walk(child, current, blocks);
            }
        }
        _ => {}
    }
}

fn plain_blocks(body: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current = String::new();
    for line in body.lines() {
        if line.trim().is_empty() {
            blocks.push(std::mem::take(&mut current));
        } else {
            current.push_str(line);
            current.push('\n');
        }
    }
    blocks.push(current);
    blocks
}

/// Machine translation backend.
pub trait TranslationClient {
    fn translate(&self, text: &str, source_language: &str) -> Result<String, String>;
}

/// Returns its input unchanged.
#[derive(Debug, Default, Clone, Copy)]
pub struct IdentityTranslator;

impl TranslationClient for IdentityTranslator {
    fn translate(&self, text: &str, _source_language: &str) -> Result<String, String> {
        Ok(text.to_string())
    }
}

fn is_english(language: &str) -> bool {
    let lang = language.trim().to_ascii_lowercase();
    lang == "en" || lang.starts_with("en-") || lang.starts_with("en_")
}

/// Produces the English version of a document. English documents pass
/// through without a client call.
pub fn translate_document(
    doc: &SourceDocument,
    client: &dyn TranslationClient,
) -> Result<SourceDocument, CorpusError> {
    if is_english(&doc.language) {
        return Ok(doc.clone());
    }
    let body = client
        .translate(&doc.body, &doc.language)
        .map_err(|reason| CorpusError::Translation {
            doc_id: doc.doc_id.clone(),
            reason,
        })?;
    Ok(SourceDocument {
        body,
        language: "en".to_string(),
        ..doc.clone()
    })
}

/// Main-frame tally of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrameStats {
    pub counts: BTreeMap<FrameCode, usize>,
    pub total: usize,
}

impl FrameStats {
    pub fn count(&self, code: FrameCode) -> usize {
        self.counts.get(&code).copied().unwrap_or(0)
    }
}

pub fn dataset_stats(ds: &Dataset) -> FrameStats {
    let mut counts = [0usize; NUM_FRAMES];
    for r in ds.records() {
        counts[r.labels.main.index()] += 1;
    }
    FrameStats {
        counts: FrameCode::ALL.into_iter().zip(counts).collect(),
        total: ds.len(),
    }
}

/// Uniform sample without replacement, deterministic for a seed. The
/// sampled items keep their corpus order.
pub fn sample_documents<T: Clone>(corpus: &[T], n: usize, seed: u64) -> Result<Vec<T>, CorpusError> {
    if n > corpus.len() {
        return Err(CorpusError::Sampling {
            requested: n,
            available: corpus.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, corpus.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| corpus[i].clone()).collect())
}

/// Items shared between a training and a gold dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Leakage {
    pub shared_para_ids: BTreeSet<String>,
    pub shared_doc_ids: BTreeSet<String>,
}

impl Leakage {
    pub fn is_clean(&self) -> bool {
        self.shared_para_ids.is_empty() && self.shared_doc_ids.is_empty()
    }
}

/// Checks that gold records share neither paragraphs nor source documents
/// with training records.
pub fn check_leakage(train: &Dataset, gold: &Dataset) -> Leakage {
    let train_paras: HashSet<&str> = train
        .records()
        .iter()
        .map(|r| r.paragraph.para_id.as_str())
        .collect();
    let train_docs = train.doc_ids();
    Leakage {
        shared_para_ids: gold
            .records()
            .iter()
            .filter(|r| train_paras.contains(r.paragraph.para_id.as_str()))
            .map(|r| r.paragraph.para_id.clone())
            .collect(),
        shared_doc_ids: gold
            .doc_ids()
            .intersection(&train_docs)
            .cloned()
            .collect(),
    }
}

/// Splits a mixed dataset by tag and checks the two halves for leakage.
pub fn check_split_leakage(ds: &Dataset) -> Leakage {
    check_leakage(&ds.filter_split(Split::Train), &ds.filter_split(Split::Gold))
}

// On-disk line shape. Field order here is the order written.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetLine {
    para_id: String,
    doc_id: String,
    ordinal: usize,
    text: String,
    frames: Vec<FrameCode>,
    main: FrameCode,
    coder: String,
    split: Split,
}

impl From<&LabeledParagraph> for DatasetLine {
    fn from(r: &LabeledParagraph) -> Self {
        DatasetLine {
            para_id: r.paragraph.para_id.clone(),
            doc_id: r.paragraph.doc_id.clone(),
            ordinal: r.paragraph.ordinal,
            text: r.paragraph.text.clone(),
            frames: r.labels.frames.iter().copied().collect(),
            main: r.labels.main,
            coder: r.coder_id.clone(),
            split: r.split,
        }
    }
}

impl From<DatasetLine> for LabeledParagraph {
    fn from(l: DatasetLine) -> Self {
        LabeledParagraph {
            paragraph: Paragraph {
                para_id: l.para_id,
                doc_id: l.doc_id,
                ordinal: l.ordinal,
                text: l.text,
            },
            labels: LabelSet {
                frames: l.frames.into_iter().collect(),
                main: l.main,
            },
            coder_id: l.coder,
            split: l.split,
        }
    }
}

/// Parses JSON-lines, reporting 1-based line numbers. Blank lines are skipped.
pub(crate) fn parse_jsonl<T: serde::de::DeserializeOwned>(
    input: &str,
) -> Result<Vec<(usize, T)>, CorpusError> {
    input
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|v| (i + 1, v))
                .map_err(|e| CorpusError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
        })
        .collect()
}

pub fn parse_dataset(input: &str) -> Result<Dataset, CorpusError> {
    let records = parse_jsonl::<DatasetLine>(input)?
        .into_iter()
        .map(|(_, l)| LabeledParagraph::from(l))
        .collect();
    Dataset::new(records)
}

pub fn dataset_to_jsonl(ds: &Dataset) -> String {
    let mut out = String::new();
    for r in ds.records() {
        out.push_str(&serde_json::to_string(&DatasetLine::from(r)).expect("dataset line"));
        out.push('\n');
    }
    out
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    fs::write(path, dataset_to_jsonl(ds))?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, CorpusError> {
    parse_dataset(&fs::read_to_string(path)?)
}

pub fn parse_paragraphs(input: &str) -> Result<Vec<Paragraph>, CorpusError> {
    let paragraphs: Vec<Paragraph> = parse_jsonl(input)?.into_iter().map(|(_, p)| p).collect();
    let mut seen = HashSet::new();
    for p in &paragraphs {
        if !seen.insert(p.para_id.as_str()) {
            return Err(CorpusError::DuplicateId(p.para_id.clone()));
        }
    }
    Ok(paragraphs)
}

pub fn load_paragraphs(path: impl AsRef<Path>) -> Result<Vec<Paragraph>, CorpusError> {
    parse_paragraphs(&fs::read_to_string(path)?)
}

pub fn save_paragraphs(paragraphs: &[Paragraph], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    write_jsonl(paragraphs, path)
}

pub fn parse_documents(input: &str) -> Result<Vec<SourceDocument>, CorpusError> {
    let docs: Vec<SourceDocument> = parse_jsonl(input)?.into_iter().map(|(_, d)| d).collect();
    let mut seen = HashSet::new();
    for d in &docs {
        if !seen.insert(d.doc_id.as_str()) {
            return Err(CorpusError::DuplicateId(d.doc_id.clone()));
        }
    }
    Ok(docs)
}

pub fn load_documents(path: impl AsRef<Path>) -> Result<Vec<SourceDocument>, CorpusError> {
    parse_documents(&fs::read_to_string(path)?)
}

pub fn save_documents(docs: &[SourceDocument], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    write_jsonl(docs, path)
}

fn write_jsonl<T: Serialize>(items: &[T], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
