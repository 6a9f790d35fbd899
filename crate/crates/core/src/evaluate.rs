//! Confusion matrices, classification reports and k-fold cross-validation.
//!
//! Matrices are always rows = actual, columns = predicted, in codebook
//! index order. Any ratio with a zero denominator is defined as 0, so a
//! class that is never predicted scores 0 precision and a class with no
//! support scores 0 recall and f1.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codebook::{FrameCode, NUM_FRAMES};
use crate::corpus::{Dataset, DatasetSplit};
use crate::train::{FramePredictor, ScoreVector, TrainError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("y_true has {0} items but y_pred has {1}")]
    LengthMismatch(usize, usize),
    #[error("nothing to evaluate")]
    Empty,
    #[error("k must be at least 2, got {0}")]
    BadK(usize),
    #[error("cannot make {k} folds from {n} records")]
    TooFewRecords { k: usize, n: usize },
    #[error("confusion matrix csv: {0}")]
    MatrixFormat(String),
    #[error("gold dataset must be tagged gold, found {0}")]
    NotGold(DatasetSplit),
    #[error("gold set shares documents with training data: {}", .0.iter().cloned().collect::<Vec<_>>().join(", "))]
    Leakage(BTreeSet<String>),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const MATRIX_CORNER: &str = "actual\\predicted";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_FRAMES]; NUM_FRAMES],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; NUM_FRAMES]; NUM_FRAMES]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn get(&self, actual: FrameCode, predicted: FrameCode) -> u64 {
        self.counts[actual.index()][predicted.index()]
    }

    pub fn add(&mut self, actual: FrameCode, predicted: FrameCode) {
        self.counts[actual.index()][predicted.index()] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(orow) {
                *c += o;
            }
        }
    }

    pub fn row_sum(&self, actual: FrameCode) -> u64 {
        self.counts[actual.index()].iter().sum()
    }

    pub fn col_sum(&self, predicted: FrameCode) -> u64 {
        self.counts.iter().map(|row| row[predicted.index()]).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_FRAMES).map(|i| self.counts[i][i]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(MATRIX_CORNER);
        for c in FrameCode::ALL {
            out.push(',');
            out.push_str(c.as_str());
        }
        out.push('\n');
        for c in FrameCode::ALL {
            out.push_str(c.as_str());
            for v in self.counts[c.index()] {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses the CSV layout written by [`ConfusionMatrix::to_csv`]. The
    /// header and row labels must list the six codes in index order.
    pub fn from_csv(input: &str) -> Result<Self, EvalError> {
        let bad = |m: String| EvalError::MatrixFormat(m);
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(input.as_bytes());
        let mut rows = reader.records();
        let header = rows
            .next()
            .ok_or_else(|| bad("empty input".into()))?
            .map_err(|e| bad(e.to_string()))?;
        let expected: Vec<&str> = std::iter::once(MATRIX_CORNER)
            .chain(FrameCode::ALL.iter().map(|c| c.as_str()))
            .collect();
        if header.iter().collect::<Vec<_>>() != expected {
            return Err(bad(format!("header must be {:?}", expected.join(","))));
        }
        let mut counts = [[0u64; NUM_FRAMES]; NUM_FRAMES];
        for (i, code) in FrameCode::ALL.iter().enumerate() {
            let row = rows
                .next()
                .ok_or_else(|| bad(format!("missing row {code}")))?
                .map_err(|e| bad(e.to_string()))?;
            if row.len() != NUM_FRAMES + 1 {
                return Err(bad(format!("row {code} has {} fields", row.len())));
            }
            if &row[0] != code.as_str() {
                return Err(bad(format!("row {} must be {code}, found {:?}", i + 1, &row[0])));
            }
            for j in 0..NUM_FRAMES {
                counts[i][j] = row[j + 1]
                    .parse()
                    .map_err(|_| bad(format!("row {code}: bad count {:?}", &row[j + 1])))?;
            }
        }
        if let Some(extra) = rows.next() {
            let extra = extra.map_err(|e| bad(e.to_string()))?;
            if extra.iter().any(|f| !f.is_empty()) {
                return Err(bad("unexpected trailing rows".into()));
            }
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        Self::from_csv(&fs::read_to_string(path)?)
    }
}

pub fn confusion(y_true: &[FrameCode], y_pred: &[FrameCode]) -> Result<ConfusionMatrix, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (&a, &p) in y_true.iter().zip(y_pred) {
        cm.add(a, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

pub fn class_metrics(cm: &ConfusionMatrix) -> BTreeMap<FrameCode, ClassMetrics> {
    FrameCode::ALL
        .into_iter()
        .map(|c| {
            let tp = cm.get(c, c);
            let precision = ratio(tp, cm.col_sum(c));
            let recall = ratio(tp, cm.row_sum(c));
            (
                c,
                ClassMetrics {
                    precision,
                    recall,
                    f1: f1(precision, recall),
                    support: cm.row_sum(c),
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: BTreeMap<FrameCode, ClassMetrics>,
    #[serde(rename = "macro")]
    pub macro_avg: Averages,
    #[serde(rename = "weighted")]
    pub weighted_avg: Averages,
    pub accuracy: f64,
}

/// Macro and support-weighted averages plus accuracy.
pub fn aggregate(
    per_class: &BTreeMap<FrameCode, ClassMetrics>,
    cm: &ConfusionMatrix,
) -> Result<(Averages, Averages, f64), EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let n = per_class.len() as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.values().map(f).sum::<f64>() / n;
    let support: u64 = per_class.values().map(|m| m.support).sum();
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        per_class
            .values()
            .map(|m| f(m) * m.support as f64)
            .sum::<f64>()
            / support as f64
    };
    let macro_avg = Averages {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
    };
    let weighted_avg = Averages {
        precision: weighted(|m| m.precision),
        recall: weighted(|m| m.recall),
        f1: weighted(|m| m.f1),
    };
    Ok((macro_avg, weighted_avg, cm.trace() as f64 / total as f64))
}

/// Full report for a matrix.
pub fn report(cm: &ConfusionMatrix) -> Result<EvalReport, EvalError> {
    let per_class = class_metrics(cm);
    let (macro_avg, weighted_avg, accuracy) = aggregate(&per_class, cm)?;
    Ok(EvalReport {
        per_class,
        macro_avg,
        weighted_avg,
        accuracy,
    })
}

fn round_to(v: f64, places: i32) -> f64 {
    let s = 10f64.powi(places);
    (v * s).round() / s
}

impl EvalReport {
    pub fn class(&self, code: FrameCode) -> &ClassMetrics {
        &self.per_class[&code]
    }

    /// Copy with every real value rounded, for side-by-side comparison with
    /// published tables.
    pub fn rounded(&self, places: i32) -> EvalReport {
        let r = |v| round_to(v, places);
        let avg = |a: &Averages| Averages {
            precision: r(a.precision),
            recall: r(a.recall),
            f1: r(a.f1),
        };
        EvalReport {
            per_class: self
                .per_class
                .iter()
                .map(|(c, m)| {
                    (
                        *c,
                        ClassMetrics {
                            precision: r(m.precision),
                            recall: r(m.recall),
                            f1: r(m.f1),
                            support: m.support,
                        },
                    )
                })
                .collect(),
            macro_avg: avg(&self.macro_avg),
            weighted_avg: avg(&self.weighted_avg),
            accuracy: r(self.accuracy),
        }
    }

    /// Plain-text classification report table.
    pub fn render(&self, places: usize) -> String {
        let w = places + 3;
        let mut out = format!(
            "{:>14} {:>w$} {:>w$} {:>w$} {:>8}\n\n",
            "", "precision", "recall", "f1-score", "support"
        );
        for (c, m) in &self.per_class {
            let _ = writeln!(
                out,
                "{:>14} {:>w$.places$} {:>w$.places$} {:>w$.places$} {:>8}",
                c.as_str(),
                m.precision,
                m.recall,
                m.f1,
                m.support
            );
        }
        let support: u64 = self.per_class.values().map(|m| m.support).sum();
        let _ = writeln!(
            out,
            "\n{:>14} {:>w$} {:>w$} {:>w$.places$} {:>8}",
            "accuracy", "", "", self.accuracy, support
        );
        for (name, a) in [("macro avg", &self.macro_avg), ("weighted avg", &self.weighted_avg)] {
            let _ = writeln!(
                out,
                "{:>14} {:>w$.places$} {:>w$.places$} {:>w$.places$} {:>8}",
                name, a.precision, a.recall, a.f1, support
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub stratified: bool,
    pub assignments: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// Record positions (in dataset order) of the training and held-out
    /// parts for one fold.
    pub fn split_indices(&self, ds: &Dataset, fold: usize) -> (Vec<usize>, Vec<usize>) {
        ds.records()
            .iter()
            .enumerate()
            .map(|(i, r)| (i, self.assignments[&r.paragraph.para_id]))
            .fold((Vec::new(), Vec::new()), |(mut train, mut test), (i, f)| {
                if f == fold {
                    test.push(i);
                } else {
                    train.push(i);
                }
                (train, test)
            })
    }
}

/// Assigns every record to one of `k` folds.
///
/// Unstratified: records are shuffled and dealt round-robin. Stratified:
/// records are grouped by main frame (codebook order), each group shuffled,
/// and the concatenation dealt round-robin, so every class is spread as
/// evenly as possible and small classes land one per fold.
pub fn make_folds(ds: &Dataset, k: usize, seed: u64, stratified: bool) -> Result<FoldPlan, EvalError> {
    if k < 2 {
        return Err(EvalError::BadK(k));
    }
    if k > ds.len() {
        return Err(EvalError::TooFewRecords { k, n: ds.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = if stratified {
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); NUM_FRAMES];
        for (i, r) in ds.records().iter().enumerate() {
            groups[r.main().index()].push(i);
        }
        groups
            .into_iter()
            .flat_map(|mut g| {
                g.shuffle(&mut rng);
                g
            })
            .collect()
    } else {
        let mut idx: Vec<usize> = (0..ds.len()).collect();
        idx.shuffle(&mut rng);
        idx
    };
    let assignments = order
        .into_iter()
        .enumerate()
        .map(|(pos, i)| (ds.records()[i].paragraph.para_id.clone(), pos % k))
        .collect();
    Ok(FoldPlan {
        k,
        seed,
        stratified,
        assignments,
    })
}

/// Produces a predictor from one fold's training part. The held-out part
/// is passed for periodic evaluation only.
pub trait FoldTrainer {
    fn train_fold(
        &self,
        fold: usize,
        train: &Dataset,
        held_out: &Dataset,
    ) -> Result<Box<dyn FramePredictor>, TrainError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutOfFoldPrediction {
    pub para_id: String,
    pub fold: usize,
    pub actual: FrameCode,
    pub predicted: FrameCode,
    pub scores: ScoreVector,
}

#[derive(Debug, Clone, Serialize)]
pub struct CvOutcome {
    pub plan: FoldPlan,
    pub matrix: ConfusionMatrix,
    pub report: EvalReport,
    pub predictions: Vec<OutOfFoldPrediction>,
}

/// Trains on k-1 folds, predicts the remaining one, and pools every
/// out-of-fold prediction into a single matrix.
pub fn cross_validate(
    ds: &Dataset,
    plan: &FoldPlan,
    trainer: &dyn FoldTrainer,
) -> Result<CvOutcome, EvalError> {
    let mut matrix = ConfusionMatrix::default();
    let mut predictions = Vec::with_capacity(ds.len());
    for fold in 0..plan.k {
        let (train_idx, test_idx) = plan.split_indices(ds, fold);
        let train = ds.subset(&train_idx);
        let held_out = ds.subset(&test_idx);
        let predictor = trainer.train_fold(fold, &train, &held_out)?;
        let texts: Vec<&str> = held_out
            .records()
            .iter()
            .map(|r| r.paragraph.text.as_str())
            .collect();
        let preds = predictor.predict_batch(&texts)?;
        for (r, p) in held_out.records().iter().zip(preds) {
            matrix.add(r.main(), p.main);
            predictions.push(OutOfFoldPrediction {
                para_id: r.paragraph.para_id.clone(),
                fold,
                actual: r.main(),
                predicted: p.main,
                scores: p.scores,
            });
        }
    }
    let report = report(&matrix)?;
    Ok(CvOutcome {
        plan: plan.clone(),
        matrix,
        report,
        predictions,
    })
}

/// Main-frame predictions for every record of a dataset.
pub fn predict_dataset(
    predictor: &dyn FramePredictor,
    ds: &Dataset,
) -> Result<Vec<FrameCode>, EvalError> {
    let texts: Vec<&str> = ds
        .records()
        .iter()
        .map(|r| r.paragraph.text.as_str())
        .collect();
    Ok(predictor
        .predict_batch(&texts)?
        .into_iter()
        .map(|p| p.main)
        .collect())
}

/// Scores a predictor against a gold-tagged set drawn from documents the
/// model never saw in training.
pub fn evaluate_gold(
    predictor: &dyn FramePredictor,
    training_doc_ids: &BTreeSet<String>,
    gold: &Dataset,
) -> Result<(ConfusionMatrix, EvalReport), EvalError> {
    if gold.split() != DatasetSplit::Gold {
        return Err(EvalError::NotGold(gold.split()));
    }
    let shared: BTreeSet<String> = gold
        .doc_ids()
        .intersection(training_doc_ids)
        .cloned()
        .collect();
    if !shared.is_empty() {
        return Err(EvalError::Leakage(shared));
    }
    let y_true: Vec<FrameCode> = gold.records().iter().map(|r| r.main()).collect();
    let y_pred = predict_dataset(predictor, gold)?;
    let cm = confusion(&y_true, &y_pred)?;
    Ok((cm, report(&cm)?))
}
