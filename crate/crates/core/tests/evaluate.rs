use std::collections::{BTreeSet, HashMap};

use newsframe_core::codebook::{FrameCode, LabelSet};
use newsframe_core::corpus::{Dataset, LabeledParagraph, Paragraph, Split};
use newsframe_core::evaluate::{
    cross_validate, evaluate_gold, make_folds, EvalError, FoldTrainer,
};
use newsframe_core::train::{FramePredictor, Prediction, ScoreVector, TrainError};

/// Looks up the true label of each text.
struct Echo(HashMap<String, FrameCode>);

impl FramePredictor for Echo {
    fn predict_batch(&self, texts: &[&str]) -> Result<Vec<Prediction>, TrainError> {
        Ok(texts
            .iter()
            .map(|t| {
                let mut s = [0.0; 6];
                s[self.0[*t].index()] = 1.0;
                Prediction::from_scores(ScoreVector(s))
            })
            .collect())
    }
}

struct EchoFolds(HashMap<String, FrameCode>);

impl FoldTrainer for EchoFolds {
    fn train_fold(&self, _: usize, _: &Dataset, _: &Dataset) -> Result<Box<dyn FramePredictor>, TrainError> {
        Ok(Box::new(Echo(self.0.clone())))
    }
}

fn dataset(mains: &[FrameCode], split: Split, doc_prefix: &str) -> Dataset {
    let records = mains
        .iter()
        .enumerate()
        .map(|(i, &main)| LabeledParagraph {
            paragraph: Paragraph {
                para_id: format!("{doc_prefix}{i}-p0000"),
                doc_id: format!("{doc_prefix}{i}"),
                ordinal: 0,
                text: format!("text {doc_prefix} {i}"),
            },
            labels: LabelSet::single(main),
            coder_id: "c".into(),
            split,
        })
        .collect();
    Dataset::new(records).unwrap()
}

fn truth(ds: &Dataset) -> HashMap<String, FrameCode> {
    ds.records()
        .iter()
        .map(|r| (r.paragraph.text.clone(), r.main()))
        .collect()
}

#[test]
fn echo_stub_cv_gives_identity_matrix() {
    let ds = dataset(&FrameCode::ALL, Split::Train, "d");
    let plan = make_folds(&ds, 2, 1, false).unwrap();
    let out = cross_validate(&ds, &plan, &EchoFolds(truth(&ds))).unwrap();
    for a in FrameCode::ALL {
        for p in FrameCode::ALL {
            assert_eq!(out.matrix.get(a, p), (a == p) as u64);
        }
    }
    assert_eq!(out.matrix.total(), 6);
    let ids: BTreeSet<_> = out.predictions.iter().map(|p| p.para_id.clone()).collect();
    assert_eq!(ids.len(), 6);
    assert_eq!(out.report.accuracy, 1.0);
}

#[test]
fn pooled_predictions_cover_every_item_once() {
    let mains: Vec<FrameCode> = (0..53).map(|i| FrameCode::ALL[(i * 7) % 6]).collect();
    let ds = dataset(&mains, Split::Train, "d");
    let plan = make_folds(&ds, 5, 3, true).unwrap();
    let out = cross_validate(&ds, &plan, &EchoFolds(truth(&ds))).unwrap();
    assert_eq!(out.matrix.total(), 53);
    let ids: BTreeSet<_> = out.predictions.iter().map(|p| &p.para_id).collect();
    assert_eq!(ids.len(), 53);
    for p in &out.predictions {
        assert_eq!(plan.assignments[&p.para_id], p.fold);
    }
}

#[test]
fn gold_evaluation_with_echo_is_perfect_and_has_full_shape() {
    let mains: Vec<FrameCode> = (0..119).map(|i| FrameCode::ALL[i % 6]).collect();
    let gold = dataset(&mains, Split::Gold, "g");
    let training: BTreeSet<String> = ["t1".to_string()].into();
    let (cm, rep) = evaluate_gold(&Echo(truth(&gold)), &training, &gold).unwrap();
    assert_eq!(cm.total(), 119);
    assert_eq!(rep.per_class.len(), 6);
    assert_eq!(rep.accuracy, 1.0);
    assert_eq!((rep.macro_avg.f1, rep.weighted_avg.f1), (1.0, 1.0));
    let json = serde_json::to_value(&rep).unwrap();
    for key in ["per_class", "macro", "weighted", "accuracy"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

#[test]
fn gold_sharing_a_training_document_is_rejected() {
    let gold = dataset(&[FrameCode::AR01, FrameCode::HI02], Split::Gold, "g");
    let training: BTreeSet<String> = ["g1".to_string(), "x".to_string()].into();
    match evaluate_gold(&Echo(truth(&gold)), &training, &gold) {
        Err(EvalError::Leakage(ids)) => assert_eq!(ids, BTreeSet::from(["g1".to_string()])),
        other => panic!("expected leakage, got {other:?}"),
    }
    let train_tagged = dataset(&[FrameCode::AR01], Split::Train, "t");
    assert!(matches!(
        evaluate_gold(&Echo(truth(&train_tagged)), &BTreeSet::new(), &train_tagged),
        Err(EvalError::NotGold(_))
    ));
}

#[test]
fn fold_count_bounds() {
    let ds = dataset(&FrameCode::ALL[..4], Split::Train, "d");
    assert!(matches!(make_folds(&ds, 5, 0, false), Err(EvalError::TooFewRecords { .. })));
    assert!(matches!(make_folds(&ds, 1, 0, false), Err(EvalError::BadK(1))));
    let ten = dataset(&[FrameCode::AR01; 10], Split::Train, "d");
    assert_eq!(make_folds(&ten, 5, 0, false).unwrap().fold_sizes(), vec![2; 5]);
}
