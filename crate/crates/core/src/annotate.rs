//! Labelling sessions, the annotation store and inter-coder agreement.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::codebook::{FrameCode, LabelSet, LabelViolations, NUM_FRAMES};
use crate::corpus::{parse_jsonl, CorpusError, Paragraph};

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error(transparent)]
    Validation(#[from] LabelViolations),
    #[error("expected annotation for {expected:?}, got {got}")]
    Sequencing {
        expected: Option<String>,
        got: String,
    },
    #[error("coder {coder} already annotated {para_id}")]
    Conflict { para_id: String, coder: String },
    #[error("unknown paragraph {0}")]
    UnknownParagraph(String),
    #[error(transparent)]
    Store(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgreementError {
    #[error("label lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no items to compare")]
    Empty,
    #[error("need at least {needed} items, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("expected agreement is 1; kappa is undefined")]
    Degenerate,
    #[error("confidence level must lie in (0, 1), got {0}")]
    BadLevel(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub para_id: String,
    pub coder: String,
    pub frames: Vec<FrameCode>,
    pub main: FrameCode,
    #[serde(with = "ts_format")]
    pub ts: DateTime<Utc>,
}

mod ts_format {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ts.to_rfc3339_opts(SecondsFormat::Millis, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

impl AnnotationRecord {
    pub fn labels(&self) -> LabelSet {
        LabelSet {
            frames: self.frames.iter().copied().collect(),
            main: self.main,
        }
    }
}

/// Append-only store of annotation records, optionally mirrored to a
/// JSON-lines file. Records are never modified or removed.
#[derive(Debug, Default)]
pub struct AnnotationStore {
    records: Vec<AnnotationRecord>,
    index: HashSet<(String, String)>,
    path: Option<PathBuf>,
}

impl AnnotationStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a file-backed store, loading existing records.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, AnnotateError> {
        let path = path.as_ref().to_path_buf();
        let records = if path.exists() {
            parse_annotations(&fs::read_to_string(&path)?)?
        } else {
            File::create(&path)?;
            Vec::new()
        };
        let mut store = Self::from_records(records)?;
        store.path = Some(path);
        Ok(store)
    }

    pub fn from_records(records: Vec<AnnotationRecord>) -> Result<Self, AnnotateError> {
        let mut store = Self::default();
        for r in records {
            store.insert(r)?;
        }
        Ok(store)
    }

    fn insert(&mut self, record: AnnotationRecord) -> Result<(), AnnotateError> {
        record.labels().validate()?;
        let key = (record.para_id.clone(), record.coder.clone());
        if self.index.contains(&key) {
            return Err(AnnotateError::Conflict {
                para_id: record.para_id,
                coder: record.coder,
            });
        }
        self.index.insert(key);
        self.records.push(record);
        Ok(())
    }

    /// Appends a record, writing it through to the backing file first.
    pub fn append(&mut self, record: AnnotationRecord) -> Result<(), AnnotateError> {
        record.labels().validate()?;
        if self.contains(&record.para_id, &record.coder) {
            return Err(AnnotateError::Conflict {
                para_id: record.para_id,
                coder: record.coder,
            });
        }
        if let Some(path) = &self.path {
            let mut line = serde_json::to_string(&record).expect("annotation record");
            line.push('\n');
            let mut f = OpenOptions::new().append(true).open(path)?;
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        self.insert(record)
    }

    pub fn contains(&self, para_id: &str, coder: &str) -> bool {
        self.index
            .contains(&(para_id.to_string(), coder.to_string()))
    }

    pub fn records(&self) -> &[AnnotationRecord] {
        &self.records
    }

    pub fn by_coder<'a>(&'a self, coder: &'a str) -> impl Iterator<Item = &'a AnnotationRecord> {
        self.records.iter().filter(move |r| r.coder == coder)
    }

    /// Number of records per coder.
    pub fn progress(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            *out.entry(r.coder.clone()).or_insert(0) += 1;
        }
        out
    }
}

pub fn parse_annotations(input: &str) -> Result<Vec<AnnotationRecord>, CorpusError> {
    Ok(parse_jsonl::<AnnotationRecord>(input)?
        .into_iter()
        .map(|(_, r)| r)
        .collect())
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>, CorpusError> {
    parse_annotations(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnnotationSession {
    pub session_id: String,
    pub coder_id: String,
    pub queue: Vec<String>,
    pub cursor: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NextItem {
    Paragraph(Paragraph),
    Done,
}

/// Paragraph pool, open sessions and the store they write to.
#[derive(Debug)]
pub struct Annotator {
    paragraphs: Vec<Paragraph>,
    by_id: HashMap<String, usize>,
    sessions: HashMap<String, AnnotationSession>,
    store: AnnotationStore,
    next_session: u64,
}

impl Annotator {
    pub fn new(paragraphs: Vec<Paragraph>, store: AnnotationStore) -> Self {
        let by_id = paragraphs
            .iter()
            .enumerate()
            .map(|(i, p)| (p.para_id.clone(), i))
            .collect();
        Annotator {
            paragraphs,
            by_id,
            sessions: HashMap::new(),
            store,
            next_session: 1,
        }
    }

    pub fn store(&self) -> &AnnotationStore {
        &self.store
    }

    pub fn paragraph_count(&self) -> usize {
        self.paragraphs.len()
    }

    pub fn paragraph(&self, para_id: &str) -> Option<&Paragraph> {
        self.by_id.get(para_id).map(|&i| &self.paragraphs[i])
    }

    /// Opens a session over every paragraph the coder has not labelled yet,
    /// in corpus order.
    pub fn open_session(&mut self, coder_id: &str) -> AnnotationSession {
        let queue = self
            .paragraphs
            .iter()
            .filter(|p| !self.store.contains(&p.para_id, coder_id))
            .map(|p| p.para_id.clone())
            .collect();
        self.open_session_with_queue(coder_id, queue)
            .expect("queue drawn from the pool")
    }

    pub fn open_session_with_queue(
        &mut self,
        coder_id: &str,
        queue: Vec<String>,
    ) -> Result<AnnotationSession, AnnotateError> {
        if let Some(missing) = queue.iter().find(|id| !self.by_id.contains_key(*id)) {
            return Err(AnnotateError::UnknownParagraph(missing.clone()));
        }
        let session = AnnotationSession {
            session_id: format!("s{:04}-{}", self.next_session, uuid::Uuid::new_v4().simple()),
            coder_id: coder_id.to_string(),
            queue,
            cursor: 0,
        };
        self.next_session += 1;
        self.sessions
            .insert(session.session_id.clone(), session.clone());
        Ok(session)
    }

    pub fn session(&self, session_id: &str) -> Result<&AnnotationSession, AnnotateError> {
        self.sessions
            .get(session_id)
            .ok_or_else(|| AnnotateError::UnknownSession(session_id.to_string()))
    }

    /// The paragraph under the cursor. Does not advance.
    pub fn next_paragraph(&self, session_id: &str) -> Result<NextItem, AnnotateError> {
        let s = self.session(session_id)?;
        Ok(match s.queue.get(s.cursor) {
            Some(id) => NextItem::Paragraph(self.paragraph(id).expect("queued").clone()),
            None => NextItem::Done,
        })
    }

    pub fn submit_annotation(
        &mut self,
        session_id: &str,
        para_id: &str,
        labels: LabelSet,
    ) -> Result<AnnotationRecord, AnnotateError> {
        self.submit_annotation_at(session_id, para_id, labels, Utc::now())
    }

    /// Checks, in order: session exists, labels are valid, the pair is not
    /// already stored, and `para_id` is the item under the cursor.
    pub fn submit_annotation_at(
        &mut self,
        session_id: &str,
        para_id: &str,
        labels: LabelSet,
        ts: DateTime<Utc>,
    ) -> Result<AnnotationRecord, AnnotateError> {
        let session = self
            .sessions
            .get(session_id)
            .ok_or_else(|| AnnotateError::UnknownSession(session_id.to_string()))?;
        labels.validate()?;
        if self.store.contains(para_id, &session.coder_id) {
            return Err(AnnotateError::Conflict {
                para_id: para_id.to_string(),
                coder: session.coder_id.clone(),
            });
        }
        let expected = session.queue.get(session.cursor);
        if expected.map(String::as_str) != Some(para_id) {
            return Err(AnnotateError::Sequencing {
                expected: expected.cloned(),
                got: para_id.to_string(),
            });
        }
        let record = AnnotationRecord {
            para_id: para_id.to_string(),
            coder: session.coder_id.clone(),
            frames: labels.frames.iter().copied().collect(),
            main: labels.main,
            ts,
        };
        self.store.append(record.clone())?;
        self.sessions
            .get_mut(session_id)
            .expect("checked above")
            .cursor += 1;
        Ok(record)
    }

    pub fn agreement_report(
        &self,
        coder_a: &str,
        coder_b: &str,
    ) -> Result<AgreementReport, AgreementError> {
        agreement_report(&self.store, coder_a, coder_b)
    }
}

/// Qualitative interpretation of a kappa value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementBand {
    Poor,
    Slight,
    Fair,
    Moderate,
    Substantial,
    AlmostPerfect,
}

impl AgreementBand {
    /// Landis and Koch (1977) bands.
    pub fn from_kappa(kappa: f64) -> Self {
        if kappa < 0.0 {
            AgreementBand::Poor
        } else if kappa <= 0.20 {
            AgreementBand::Slight
        } else if kappa <= 0.40 {
            AgreementBand::Fair
        } else if kappa <= 0.60 {
            AgreementBand::Moderate
        } else if kappa <= 0.80 {
            AgreementBand::Substantial
        } else {
            AgreementBand::AlmostPerfect
        }
    }
}

impl fmt::Display for AgreementBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgreementBand::Poor => "poor",
            AgreementBand::Slight => "slight",
            AgreementBand::Fair => "fair",
            AgreementBand::Moderate => "moderate",
            AgreementBand::Substantial => "substantial",
            AgreementBand::AlmostPerfect => "almost perfect",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub kappa: f64,
    pub p_observed: f64,
    pub p_expected: f64,
    pub n_items: usize,
    pub band: AgreementBand,
}

/// 6x6 coder-a-by-coder-b count table.
pub fn contingency(labels_a: &[FrameCode], labels_b: &[FrameCode]) -> [[u64; NUM_FRAMES]; NUM_FRAMES] {
    let mut table = [[0u64; NUM_FRAMES]; NUM_FRAMES];
    for (a, b) in labels_a.iter().zip(labels_b) {
        table[a.index()][b.index()] += 1;
    }
    table
}

fn check_pair(labels_a: &[FrameCode], labels_b: &[FrameCode]) -> Result<(), AgreementError> {
    if labels_a.len() != labels_b.len() {
        return Err(AgreementError::LengthMismatch(labels_a.len(), labels_b.len()));
    }
    if labels_a.is_empty() {
        return Err(AgreementError::Empty);
    }
    Ok(())
}

struct Proportions {
    cells: [[f64; NUM_FRAMES]; NUM_FRAMES],
    rows: [f64; NUM_FRAMES],
    cols: [f64; NUM_FRAMES],
}

fn proportions(labels_a: &[FrameCode], labels_b: &[FrameCode]) -> Proportions {
    let n = labels_a.len() as f64;
    let table = contingency(labels_a, labels_b);
    let mut p = Proportions {
        cells: [[0.0; NUM_FRAMES]; NUM_FRAMES],
        rows: [0.0; NUM_FRAMES],
        cols: [0.0; NUM_FRAMES],
    };
    for i in 0..NUM_FRAMES {
        for j in 0..NUM_FRAMES {
            let v = table[i][j] as f64 / n;
            p.cells[i][j] = v;
            p.rows[i] += v;
            p.cols[j] += v;
        }
    }
    p
}

/// Cohen's kappa over paired main-frame labels.
pub fn cohen_kappa(
    labels_a: &[FrameCode],
    labels_b: &[FrameCode],
) -> Result<AgreementReport, AgreementError> {
    check_pair(labels_a, labels_b)?;
    let n = labels_a.len();
    let agree = labels_a.iter().zip(labels_b).filter(|(a, b)| a == b).count();
    let p_observed = agree as f64 / n as f64;

    let mut marg_a = [0usize; NUM_FRAMES];
    let mut marg_b = [0usize; NUM_FRAMES];
    for (a, b) in labels_a.iter().zip(labels_b) {
        marg_a[a.index()] += 1;
        marg_b[b.index()] += 1;
    }
    // Integer numerator keeps p_expected exact enough to detect the
    // degenerate case (both coders used one identical code).
    let expected_num: u128 = marg_a
        .iter()
        .zip(&marg_b)
        .map(|(&x, &y)| x as u128 * y as u128)
        .sum();
    let denom = n as u128 * n as u128;
    if expected_num == denom {
        return Err(AgreementError::Degenerate);
    }
    let p_expected = expected_num as f64 / denom as f64;
    let kappa = if agree == n {
        1.0
    } else {
        (p_observed - p_expected) / (1.0 - p_expected)
    };
    Ok(AgreementReport {
        kappa,
        p_observed,
        p_expected,
        n_items: n,
        band: AgreementBand::from_kappa(kappa),
    })
}

/// Large-sample standard error of kappa (Fleiss, Cohen and Everitt, 1969).
pub fn kappa_standard_error(
    report: &AgreementReport,
    labels_a: &[FrameCode],
    labels_b: &[FrameCode],
) -> f64 {
    let p = proportions(labels_a, labels_b);
    let k = report.kappa;
    let pe = report.p_expected;
    let mut diag = 0.0;
    let mut off = 0.0;
    for i in 0..NUM_FRAMES {
        for j in 0..NUM_FRAMES {
            if i == j {
                let t = 1.0 - (p.rows[i] + p.cols[i]) * (1.0 - k);
                diag += p.cells[i][i] * t * t;
            } else {
                let t = p.cols[i] + p.rows[j];
                off += p.cells[i][j] * t * t;
            }
        }
    }
    let c = k - pe * (1.0 - k);
    let var = (diag + (1.0 - k).powi(2) * off - c * c)
        / (report.n_items as f64 * (1.0 - pe).powi(2));
    var.max(0.0).sqrt()
}

/// Asymptotic normal interval around kappa, clipped to [-1, 1].
pub fn kappa_confidence_interval(
    report: &AgreementReport,
    labels_a: &[FrameCode],
    labels_b: &[FrameCode],
    level: f64,
) -> Result<(f64, f64), AgreementError> {
    check_pair(labels_a, labels_b)?;
    if labels_a.len() < 2 {
        return Err(AgreementError::TooFew {
            needed: 2,
            got: labels_a.len(),
        });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(AgreementError::BadLevel(level));
    }
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let half = z * kappa_standard_error(report, labels_a, labels_b);
    let lower = (report.kappa - half).clamp(-1.0, 1.0);
    let upper = (report.kappa + half).clamp(-1.0, 1.0);
    Ok((lower.min(report.kappa), upper.max(report.kappa)))
}

/// Main frames of the items both coders labelled, aligned by para_id.
pub fn aligned_main_frames(
    store: &AnnotationStore,
    coder_a: &str,
    coder_b: &str,
) -> Vec<(String, FrameCode, FrameCode)> {
    let b: HashMap<&str, FrameCode> = store
        .by_coder(coder_b)
        .map(|r| (r.para_id.as_str(), r.main))
        .collect();
    let mut shared: Vec<_> = store
        .by_coder(coder_a)
        .filter_map(|r| {
            b.get(r.para_id.as_str())
                .map(|&mb| (r.para_id.clone(), r.main, mb))
        })
        .collect();
    shared.sort_by(|x, y| x.0.cmp(&y.0));
    shared
}

pub fn agreement_report(
    store: &AnnotationStore,
    coder_a: &str,
    coder_b: &str,
) -> Result<AgreementReport, AgreementError> {
    let shared = aligned_main_frames(store, coder_a, coder_b);
    let a: Vec<_> = shared.iter().map(|s| s.1).collect();
    let b: Vec<_> = shared.iter().map(|s| s.2).collect();
    cohen_kappa(&a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use FrameCode::*;

    fn paragraphs(n: usize) -> Vec<Paragraph> {
        (0..n)
            .map(|i| Paragraph {
                para_id: format!("p{i}"),
                doc_id: "d".into(),
                ordinal: i,
                text: format!("text {i}"),
            })
            .collect()
    }

    #[test]
    fn fresh_session_starts_at_first_item_and_peeking_is_pure() {
        let mut ann = Annotator::new(paragraphs(3), AnnotationStore::in_memory());
        let s = ann.open_session("ra");
        assert_eq!(s.cursor, 0);
        let first = ann.next_paragraph(&s.session_id).unwrap();
        assert_eq!(first, ann.next_paragraph(&s.session_id).unwrap());
        assert!(matches!(first, NextItem::Paragraph(p) if p.para_id == "p0"));
    }

    #[test]
    fn exhausted_session_is_done() {
        let mut ann = Annotator::new(paragraphs(1), AnnotationStore::in_memory());
        let s = ann.open_session("ra");
        ann.submit_annotation(&s.session_id, "p0", LabelSet::single(AR01))
            .unwrap();
        assert_eq!(ann.session(&s.session_id).unwrap().cursor, 1);
        assert_eq!(ann.next_paragraph(&s.session_id).unwrap(), NextItem::Done);
    }

    #[test]
    fn unknown_session_is_an_error() {
        let ann = Annotator::new(paragraphs(1), AnnotationStore::in_memory());
        assert!(matches!(
            ann.next_paragraph("nope"),
            Err(AnnotateError::UnknownSession(_))
        ));
    }

    #[test]
    fn submission_rules() {
        let mut ann = Annotator::new(paragraphs(3), AnnotationStore::in_memory());
        let s = ann.open_session("ra");
        let id = s.session_id.as_str();

        let bad = LabelSet {
            frames: [NO06, AR01].into_iter().collect(),
            main: NO06,
        };
        assert!(matches!(
            ann.submit_annotation(id, "p0", bad),
            Err(AnnotateError::Validation(_))
        ));
        assert_eq!(ann.session(id).unwrap().cursor, 0);

        assert!(matches!(
            ann.submit_annotation(id, "p1", LabelSet::single(HI02)),
            Err(AnnotateError::Sequencing { .. })
        ));

        let rec = ann
            .submit_annotation(id, "p0", LabelSet::new([HI02, AR01], HI02).unwrap())
            .unwrap();
        assert_eq!(rec.frames, vec![AR01, HI02]);
        assert_eq!(ann.session(id).unwrap().cursor, 1);
        assert_eq!(ann.store().records().len(), 1);

        assert!(matches!(
            ann.submit_annotation(id, "p0", LabelSet::single(HI02)),
            Err(AnnotateError::Conflict { .. })
        ));
        assert_eq!(ann.store().records().len(), 1);
    }

    #[test]
    fn new_session_skips_already_labelled_items() {
        let mut ann = Annotator::new(paragraphs(3), AnnotationStore::in_memory());
        let s = ann.open_session("ra");
        ann.submit_annotation(&s.session_id, "p0", LabelSet::single(AR01))
            .unwrap();
        let again = ann.open_session("ra");
        assert_eq!(again.queue, vec!["p1", "p2"]);
        assert_eq!(ann.open_session("author").queue.len(), 3);
    }

    #[test]
    fn file_store_is_append_only_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ann.jsonl");
        {
            let mut ann = Annotator::new(paragraphs(2), AnnotationStore::open(&path).unwrap());
            let s = ann.open_session("ra");
            ann.submit_annotation(&s.session_id, "p0", LabelSet::single(CF03))
                .unwrap();
        }
        let before = fs::read(&path).unwrap();
        let mut store = AnnotationStore::open(&path).unwrap();
        assert_eq!(store.records().len(), 1);
        let dup = store.records()[0].clone();
        assert!(matches!(store.append(dup), Err(AnnotateError::Conflict { .. })));
        assert_eq!(fs::read(&path).unwrap(), before);
        let text = String::from_utf8(before).unwrap();
        assert!(text.starts_with(r#"{"para_id":"p0","coder":"ra","frames":["CF03"],"main":"CF03","ts":""#));
    }

    #[test]
    fn perfect_agreement() {
        let labels: Vec<_> = (0..35).map(|i| FrameCode::ALL[i % 6]).collect();
        let r = cohen_kappa(&labels, &labels).unwrap();
        assert_eq!(r.kappa, 1.0);
        assert_eq!(r.band, AgreementBand::AlmostPerfect);
        assert_eq!(r.n_items, 35);
        let ci = kappa_confidence_interval(&r, &labels, &labels, 0.95).unwrap();
        assert_eq!(ci, (1.0, 1.0));
    }

    #[test]
    fn hand_computed_fixtures() {
        let r = cohen_kappa(&[AR01, AR01, HI02, HI02], &[AR01, HI02, HI02, HI02]).unwrap();
        assert_eq!((r.p_observed, r.p_expected, r.kappa), (0.75, 0.5, 0.5));
        assert_eq!(r.band, AgreementBand::Moderate);

        let r = cohen_kappa(&[AR01, HI02, AR01, HI02], &[AR01, AR01, HI02, HI02]).unwrap();
        assert_eq!((r.p_observed, r.p_expected, r.kappa), (0.5, 0.5, 0.0));
        assert_eq!(r.band, AgreementBand::Slight);
    }

    #[test]
    fn hand_computed_standard_error() {
        // Variance terms for the 0.5 fixture worked on paper:
        // diag 0.16796875, off 0.140625, c 0.25 -> var 0.140625.
        let a = [AR01, AR01, HI02, HI02];
        let b = [AR01, HI02, HI02, HI02];
        let r = cohen_kappa(&a, &b).unwrap();
        assert!((kappa_standard_error(&r, &a, &b) - 0.375).abs() < 1e-12);
        let (lo, hi) = kappa_confidence_interval(&r, &a, &b, 0.95).unwrap();
        assert!(lo < 0.5 && hi > 0.5);
        assert!((lo - (0.5 - 1.959963984540054 * 0.375)).abs() < 1e-9);
        assert_eq!(hi, 1.0);
    }

    #[test]
    fn input_errors() {
        assert_eq!(cohen_kappa(&[], &[]), Err(AgreementError::Empty));
        assert_eq!(
            cohen_kappa(&[AR01], &[AR01, HI02]),
            Err(AgreementError::LengthMismatch(1, 2))
        );
        assert_eq!(
            cohen_kappa(&[MF04, MF04], &[MF04, MF04]),
            Err(AgreementError::Degenerate)
        );
        let r = cohen_kappa(&[AR01, HI02], &[AR01, HI02]).unwrap();
        assert!(matches!(
            kappa_confidence_interval(&r, &[AR01], &[AR01], 0.95),
            Err(AgreementError::TooFew { .. })
        ));
        assert!(matches!(
            kappa_confidence_interval(&r, &[AR01, HI02], &[AR01, HI02], 1.5),
            Err(AgreementError::BadLevel(_))
        ));
    }

    #[test]
    fn bands() {
        use AgreementBand::*;
        let cases = [
            (-0.1, Poor),
            (0.0, Slight),
            (0.2, Slight),
            (0.21, Fair),
            (0.4, Fair),
            (0.5, Moderate),
            (0.74, Substantial),
            (0.8, Substantial),
            (0.81, AlmostPerfect),
            (1.0, AlmostPerfect),
        ];
        for (k, band) in cases {
            assert_eq!(AgreementBand::from_kappa(k), band, "kappa {k}");
        }
        assert_eq!(serde_json::to_string(&AlmostPerfect).unwrap(), "\"almost_perfect\"");
    }

    #[test]
    fn store_agreement_uses_shared_items_only() {
        let ts = Utc::now();
        let rec = |p: &str, c: &str, m: FrameCode| AnnotationRecord {
            para_id: p.into(),
            coder: c.into(),
            frames: vec![m],
            main: m,
            ts,
        };
        let store = AnnotationStore::from_records(vec![
            rec("p1", "a", AR01),
            rec("p2", "a", HI02),
            rec("p3", "a", CF03),
            rec("p2", "b", HI02),
            rec("p1", "b", AR01),
            rec("p9", "b", EF05),
        ])
        .unwrap();
        let r = agreement_report(&store, "a", "b").unwrap();
        assert_eq!(r.n_items, 2);
        assert_eq!(r.kappa, 1.0);
        assert_eq!(agreement_report(&store, "a", "zz"), Err(AgreementError::Empty));
        assert_eq!(store.progress().get("a"), Some(&3));
    }
}
