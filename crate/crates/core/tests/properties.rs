use std::collections::BTreeSet;

use newsframe_core::annotate::{
    agreement_report, cohen_kappa, kappa_confidence_interval, AnnotationRecord, AnnotationStore,
};
use newsframe_core::codebook::{FrameCode, LabelSet};
use newsframe_core::corpus::{
    dataset_to_jsonl, extract_paragraphs, parse_dataset, Dataset, LabeledParagraph, Paragraph,
    SourceDocument, Split,
};
use newsframe_core::evaluate::{class_metrics, confusion, make_folds, report, ConfusionMatrix};
use proptest::prelude::*;

fn code() -> impl Strategy<Value = FrameCode> {
    (0usize..6).prop_map(|i| FrameCode::ALL[i])
}

fn label_set() -> impl Strategy<Value = LabelSet> {
    prop_oneof![
        Just(LabelSet::single(FrameCode::NO06)),
        (proptest::collection::btree_set(0usize..5, 1..=5), any::<prop::sample::Index>()).prop_map(
            |(set, pick)| {
                let frames: BTreeSet<FrameCode> = set.into_iter().map(|i| FrameCode::ALL[i]).collect();
                let main = *pick.get(&frames.iter().copied().collect::<Vec<_>>());
                LabelSet { frames, main }
            }
        ),
    ]
}

fn dataset(labels: Vec<LabelSet>, split: Split) -> Dataset {
    let records = labels
        .into_iter()
        .enumerate()
        .map(|(i, labels)| LabeledParagraph {
            paragraph: Paragraph {
                para_id: format!("d{}-p{:04}", i / 4, i % 4),
                doc_id: format!("d{}", i / 4),
                ordinal: i % 4,
                text: format!("Paragraph {i} with \"quotes\", commas and unicode é."),
            },
            labels,
            coder_id: "coder-1".into(),
            split,
        })
        .collect();
    Dataset::new(records).unwrap()
}

fn matrix() -> impl Strategy<Value = ConfusionMatrix> {
    proptest::array::uniform6(proptest::array::uniform6(0u64..40)).prop_map(ConfusionMatrix::from_counts)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn confusion_equals_nested_loop_tally(pairs in proptest::collection::vec((code(), code()), 1..500)) {
        let (t, p): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
        let cm = confusion(&t, &p).unwrap();
        for a in FrameCode::ALL {
            for b in FrameCode::ALL {
                let n = pairs.iter().filter(|(x, y)| *x == a && *y == b).count() as u64;
                prop_assert_eq!(cm.get(a, b), n);
            }
        }
        prop_assert_eq!(cm.total(), pairs.len() as u64);
    }

    #[test]
    fn matrix_accounting(cm in matrix()) {
        prop_assume!(cm.total() > 0);
        let r = report(&cm).unwrap();
        let supports: u64 = r.per_class.values().map(|m| m.support).sum();
        prop_assert_eq!(supports, cm.total());
        prop_assert!(cm.trace() <= cm.total());
        prop_assert_eq!(r.accuracy, cm.trace() as f64 / cm.total() as f64);
        for (c, m) in class_metrics(&cm) {
            prop_assert!((0.0..=1.0).contains(&m.precision) && (0.0..=1.0).contains(&m.recall));
            let want = if m.precision + m.recall > 0.0 {
                2.0 * m.precision * m.recall / (m.precision + m.recall)
            } else {
                0.0
            };
            prop_assert_eq!(m.f1, want);
            if cm.col_sum(c) == 0 {
                prop_assert_eq!(m.precision, 0.0);
            }
            if cm.row_sum(c) == 0 {
                prop_assert_eq!((m.recall, m.f1), (0.0, 0.0));
            }
        }
        let macro_p = FrameCode::ALL.iter().map(|c| r.per_class[c].precision).sum::<f64>() / 6.0;
        prop_assert!((r.macro_avg.precision - macro_p).abs() < 1e-12);
        prop_assert_eq!(report(&cm).unwrap(), r);
    }

    #[test]
    fn matrix_csv_round_trip(cm in matrix()) {
        prop_assert_eq!(ConfusionMatrix::from_csv(&cm.to_csv()).unwrap(), cm);
    }

    #[test]
    fn folds_partition(labels in proptest::collection::vec(label_set(), 2..120), k in 2usize..8, seed: u64, stratified: bool) {
        prop_assume!(k <= labels.len());
        let ds = dataset(labels, Split::Train);
        let plan = make_folds(&ds, k, seed, stratified).unwrap();
        prop_assert_eq!(plan.assignments.len(), ds.len());
        let mut seen = 0;
        for f in 0..k {
            let (train, test) = plan.split_indices(&ds, f);
            prop_assert_eq!(train.len() + test.len(), ds.len());
            seen += test.len();
        }
        prop_assert_eq!(seen, ds.len());
        if stratified {
            for c in FrameCode::ALL {
                let members: Vec<usize> = ds.records().iter().filter(|r| r.main() == c)
                    .map(|r| plan.assignments[&r.paragraph.para_id]).collect();
                let per_fold: Vec<usize> = (0..k).map(|f| members.iter().filter(|&&m| m == f).count()).collect();
                let spread = per_fold.iter().max().unwrap() - per_fold.iter().min().unwrap();
                prop_assert!(spread <= 1, "class {} spread {:?}", c, per_fold);
            }
        }
    }

    #[test]
    fn dataset_jsonl_round_trips_byte_identically(labels in proptest::collection::vec(label_set(), 0..30), gold: bool) {
        let ds = dataset(labels, if gold { Split::Gold } else { Split::Train });
        let text = dataset_to_jsonl(&ds);
        let back = parse_dataset(&text).unwrap();
        prop_assert_eq!(dataset_to_jsonl(&back), text);
        prop_assert_eq!(back.records(), ds.records());
    }

    #[test]
    fn kappa_interval_contains_estimate(pairs in proptest::collection::vec((code(), code()), 2..80)) {
        let (a, b): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        if let Ok(r) = cohen_kappa(&a, &b) {
            prop_assert!(r.kappa <= 1.0);
            let (lo, hi) = kappa_confidence_interval(&r, &a, &b, 0.95).unwrap();
            prop_assert!(-1.0 <= lo && lo <= r.kappa && r.kappa <= hi && hi <= 1.0);
            if r.p_observed == r.p_expected {
                prop_assert_eq!(r.kappa, 0.0);
            }
            prop_assert_eq!(r.kappa == 1.0, a == b);
        }
    }

    #[test]
    fn plain_text_extraction_keeps_order(blocks in proptest::collection::vec("[a-z]{1,12}( [a-z]{1,12}){0,8}", 1..12), min in 1usize..30) {
        let doc = SourceDocument {
            doc_id: "doc".into(),
            url: String::new(),
            language: "en".into(),
            body: blocks.join("\n\n"),
        };
        let paras = extract_paragraphs(&doc, min).unwrap();
        let expected: Vec<&String> = blocks.iter().filter(|b| b.chars().count() >= min).collect();
        prop_assert_eq!(paras.len(), expected.len());
        for (i, (p, b)) in paras.iter().zip(expected).enumerate() {
            prop_assert_eq!(p.ordinal, i);
            prop_assert_eq!(&p.text, b);
            prop_assert_eq!(&p.para_id, &format!("doc-p{i:04}"));
        }
    }
}

#[test]
fn store_agreement_equals_direct_kappa_on_aligned_lists() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(200);
    let mut records = Vec::new();
    let mut a = Vec::new();
    let mut b = Vec::new();
    // Deliberately interleaved and partly unshared.
    for i in (0..200).rev() {
        let ma = FrameCode::ALL[rng.gen_range(0..6)];
        let mb = if rng.gen_bool(0.7) { ma } else { FrameCode::ALL[rng.gen_range(0..6)] };
        for (coder, main) in [("b", mb), ("a", ma)] {
            records.push(AnnotationRecord {
                para_id: format!("p{i:03}"),
                coder: coder.into(),
                frames: vec![main],
                main,
                ts: chrono::Utc::now(),
            });
        }
        records.push(AnnotationRecord {
            para_id: format!("only-a-{i}"),
            coder: "a".into(),
            frames: vec![FrameCode::AR01],
            main: FrameCode::AR01,
            ts: chrono::Utc::now(),
        });
        a.push((format!("p{i:03}"), ma));
        b.push((format!("p{i:03}"), mb));
    }
    a.sort();
    b.sort();
    let la: Vec<_> = a.into_iter().map(|x| x.1).collect();
    let lb: Vec<_> = b.into_iter().map(|x| x.1).collect();
    let store = AnnotationStore::from_records(records).unwrap();
    let via_store = agreement_report(&store, "a", "b").unwrap();
    assert_eq!(via_store, cohen_kappa(&la, &lb).unwrap());
    assert_eq!(via_store.n_items, 200);
}

#[test]
fn figure_three_macro_precision() {
    let counts = [
        [534, 3, 2, 0, 0, 2],
        [7, 772, 1, 0, 0, 0],
        [2, 1, 76, 0, 1, 3],
        [2, 3, 6, 0, 0, 3],
        [0, 2, 0, 0, 361, 2],
        [3, 3, 1, 0, 0, 946],
    ];
    let r = report(&ConfusionMatrix::from_counts(counts)).unwrap();
    let hand = (534.0 / 548.0 + 76.0 / 86.0 + 361.0 / 362.0 + 772.0 / 784.0 + 0.0 + 946.0 / 956.0) / 6.0;
    assert!((r.macro_avg.precision - hand).abs() < 1e-12);
    assert!((r.macro_avg.precision - 0.8049).abs() < 0.0005);
}

#[test]
fn stratified_small_class_is_spread() {
    let mut labels = vec![LabelSet::single(FrameCode::MF04); 14];
    labels.extend((0..300).map(|i| LabelSet::single(FrameCode::ALL[i % 3])));
    let ds = dataset(labels, Split::Train);
    for seed in 0..20 {
        let plan = make_folds(&ds, 5, seed, true).unwrap();
        let mut per_fold = [0; 5];
        for r in ds.records().iter().filter(|r| r.main() == FrameCode::MF04) {
            per_fold[plan.assignments[&r.paragraph.para_id]] += 1;
        }
        assert!(per_fold.iter().all(|&n| n <= 3), "{per_fold:?}");
        assert_eq!(per_fold.iter().sum::<usize>(), 14);
    }
}

/// Percentile bootstrap interval over resampled item pairs.
fn bootstrap_interval(a: &[FrameCode], b: &[FrameCode], rounds: usize, seed: u64) -> (f64, f64) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = a.len();
    let mut kappas: Vec<f64> = (0..rounds)
        .filter_map(|_| {
            let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let ra: Vec<_> = idx.iter().map(|&i| a[i]).collect();
            let rb: Vec<_> = idx.iter().map(|&i| b[i]).collect();
            cohen_kappa(&ra, &rb).ok().map(|r| r.kappa)
        })
        .collect();
    kappas.sort_by(f64::total_cmp);
    let at = |q: f64| kappas[((kappas.len() - 1) as f64 * q).round() as usize];
    (at(0.025), at(0.975))
}

#[test]
fn asymptotic_interval_agrees_with_bootstrap() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(74);
    let a: Vec<FrameCode> = (0..400).map(|_| FrameCode::ALL[rng.gen_range(0..6)]).collect();
    let b: Vec<FrameCode> = a
        .iter()
        .map(|&x| if rng.gen_bool(0.7) { x } else { FrameCode::ALL[rng.gen_range(0..6)] })
        .collect();
    let r = cohen_kappa(&a, &b).unwrap();
    let (lo, hi) = kappa_confidence_interval(&r, &a, &b, 0.95).unwrap();
    let (blo, bhi) = bootstrap_interval(&a, &b, 2000, 1);
    assert!((lo - blo).abs() < 0.05 && (hi - bhi).abs() < 0.05, "asymptotic ({lo}, {hi}) vs bootstrap ({blo}, {bhi})");

    let a = [FrameCode::AR01, FrameCode::AR01, FrameCode::HI02, FrameCode::HI02];
    let b = [FrameCode::AR01, FrameCode::HI02, FrameCode::HI02, FrameCode::HI02];
    let r = cohen_kappa(&a, &b).unwrap();
    let (lo, hi) = kappa_confidence_interval(&r, &a, &b, 0.95).unwrap();
    let (blo, bhi) = bootstrap_interval(&a, &b, 2000, 2);
    assert!(lo < 0.5 && 0.5 < hi && blo < 0.5 && 0.5 < bhi);
}
