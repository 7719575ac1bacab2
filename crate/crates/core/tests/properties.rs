//! Property tests for the metric and aggregation invariants.

use std::collections::BTreeMap;

use proptest::prelude::*;

use argmine_core::annotation::{
    aggregate_wa, cohen_kappa, AggregatedLabel, AgreementReport, AnnotationSet, Judgment, Question,
};
use argmine_core::corpus::{
    select_for_task, Dataset, Record, SelectionThresholds, Source, Split, StanceLabel, TaskKind,
};
use argmine_core::evaluation::{aggregate_runs, corpus_bleu, macro_f1, pearson};
use argmine_core::translation::{MockTranslator, TranslationClient};

fn answers(max_cat: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(
        (0..max_cat).prop_map(|c| format!("cat{c}")),
        1..40,
    )
}

proptest! {
    #[test]
    fn kappa_is_symmetric(pair in answers(3).prop_flat_map(|a| {
        let len = a.len();
        (Just(a), prop::collection::vec((0..3usize).prop_map(|c| format!("cat{c}")), len))
    })) {
        let (a, b) = pair;
        let k_ab = cohen_kappa(&a, &b).unwrap();
        let k_ba = cohen_kappa(&b, &a).unwrap();
        match (k_ab, k_ba) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
            (None, None) => {}
            other => prop_assert!(false, "asymmetric definedness: {other:?}"),
        }
    }

    #[test]
    fn kappa_self_agreement_is_one(a in answers(3)) {
        if let Some(k) = cohen_kappa(&a, &a).unwrap() {
            prop_assert!((k - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kappa_invariant_under_joint_renaming(pair in answers(3).prop_flat_map(|a| {
        let len = a.len();
        (Just(a), prop::collection::vec((0..3usize).prop_map(|c| format!("cat{c}")), len))
    })) {
        let (a, b) = pair;
        let rename = |v: &[String]| -> Vec<String> {
            v.iter().map(|s| format!("renamed-{s}")).collect()
        };
        let k1 = cohen_kappa(&a, &b).unwrap();
        let k2 = cohen_kappa(&rename(&a), &rename(&b)).unwrap();
        match (k1, k2) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
            (None, None) => {}
            other => prop_assert!(false, "renaming changed definedness: {other:?}"),
        }
    }

    #[test]
    fn macro_f1_permutation_invariant(
        pairs in prop::collection::vec((0..2usize, 0..2usize), 1..30),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let gold: Vec<String> = pairs.iter().map(|(g, _)| format!("c{g}")).collect();
        let pred: Vec<String> = pairs.iter().map(|(_, p)| format!("c{p}")).collect();
        let base = macro_f1(&gold, &pred).unwrap();
        let mut idx: Vec<usize> = (0..pairs.len()).collect();
        idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let gold_p: Vec<&String> = idx.iter().map(|&i| &gold[i]).collect();
        let pred_p: Vec<&String> = idx.iter().map(|&i| &pred[i]).collect();
        let permuted = macro_f1(&gold_p, &pred_p).unwrap();
        prop_assert!((base - permuted).abs() < 1e-12);
    }

    #[test]
    fn pearson_symmetric_and_affine_invariant(
        xs in prop::collection::vec(-100.0..100.0f64, 3..20),
        scale in 0.1..10.0f64,
        shift in -50.0..50.0f64,
    ) {
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, v)| v * 0.5 + (i as f64) * 0.3).collect();
        if pearson(&xs, &ys).is_err() {
            return Ok(());
        }
        let r = pearson(&xs, &ys).unwrap();
        let r_sym = pearson(&ys, &xs).unwrap();
        prop_assert!((r - r_sym).abs() < 1e-9);
        let xs_aff: Vec<f64> = xs.iter().map(|v| v * scale + shift).collect();
        let r_aff = pearson(&xs_aff, &ys).unwrap();
        prop_assert!((r - r_aff).abs() < 1e-9);
    }

    #[test]
    fn bleu_at_most_one_and_identity(
        corpus in prop::collection::vec(
            prop::collection::vec("[a-f]{1,4}", 4..10).prop_map(|toks| toks.join(" ")),
            1..8,
        )
    ) {
        let b = corpus_bleu(&corpus, &corpus).unwrap();
        prop_assert!((b - 1.0).abs() < 1e-12);
        let shifted: Vec<String> = corpus.iter().rev().cloned().collect();
        let b2 = corpus_bleu(&shifted, &corpus).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&b2));
    }

    #[test]
    fn aggregate_runs_mean_permutation_invariant(
        values in prop::collection::vec(0.0..1.0f64, 1..10),
    ) {
        let (mean, _) = aggregate_runs(&values).unwrap();
        let mut rev = values.clone();
        rev.reverse();
        let (mean_rev, _) = aggregate_runs(&rev).unwrap();
        prop_assert!((mean - mean_rev).abs() < 1e-12);
    }

    #[test]
    fn mock_round_trip_identity(
        text in prop::collection::vec("[a-z]{1,8}", 1..10).prop_map(|toks| toks.join(" ")),
        tgt in prop::sample::select(vec!["de", "nl", "es", "fr", "it", "ja"]),
    ) {
        let mock = MockTranslator::new();
        let fwd = mock.translate(&[text.clone()], "en", tgt).unwrap();
        let back = mock.translate(&fwd, tgt, "en").unwrap();
        prop_assert_eq!(back[0].clone(), text);
    }

    #[test]
    fn mock_is_injective_per_direction(
        a in prop::collection::vec("[a-z]{1,6}", 1..6).prop_map(|t| t.join(" ")),
        b in prop::collection::vec("[a-z]{1,6}", 1..6).prop_map(|t| t.join(" ")),
    ) {
        let mock = MockTranslator::new();
        let ta = mock.translate(&[a.clone()], "en", "de").unwrap();
        let tb = mock.translate(&[b.clone()], "en", "de").unwrap();
        if a != b {
            prop_assert_ne!(ta, tb);
        }
    }
}

fn weighted_fixture(weights: &[f64]) -> (AnnotationSet, AgreementReport) {
    let answers = ["pro", "con", "pro", "pro", "con", "pro", "con"];
    let judgments: Vec<Judgment> = weights
        .iter()
        .enumerate()
        .flat_map(|(a, _)| {
            (0..3).map(move |i| Judgment {
                item_id: format!("item{i}"),
                annotator_id: format!("ann{a}"),
                question: Question::Stance,
                answer: answers[(a + i) % answers.len()].to_string(),
                is_test_question: false,
                gold_answer: None,
            })
        })
        .collect();
    let set = AnnotationSet::new(Question::Stance, judgments).unwrap();
    let report = AgreementReport {
        retained: weights
            .iter()
            .enumerate()
            .map(|(a, w)| (format!("ann{a}"), *w))
            .collect(),
        excluded: BTreeMap::new(),
        overall_iaa: None,
    };
    (set, report)
}

proptest! {
    #[test]
    fn wa_scores_sum_to_one(weights in prop::collection::vec(0.0..1.0f64, 5..9)) {
        let (set, report) = weighted_fixture(&weights);
        for label in aggregate_wa(&set, &report, 5) {
            let sum: f64 = label.option_scores.values().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!((label.confidence - label.option_scores[&label.label]).abs() < 1e-12);
        }
    }

    #[test]
    fn wa_invariant_under_weight_scaling(
        weights in prop::collection::vec(0.01..1.0f64, 5..9),
        scale in 0.1..50.0f64,
    ) {
        let (set, report) = weighted_fixture(&weights);
        let scaled: Vec<f64> = weights.iter().map(|w| w * scale).collect();
        let (_, report_scaled) = weighted_fixture(&scaled);
        let a = aggregate_wa(&set, &report, 5);
        let b = aggregate_wa(&set, &report_scaled, 5);
        prop_assert_eq!(a.len(), b.len());
        for (la, lb) in a.iter().zip(b.iter()) {
            prop_assert_eq!(&la.label, &lb.label);
            prop_assert!((la.confidence - lb.confidence).abs() < 1e-9);
            for (opt, v) in &la.option_scores {
                prop_assert!((v - lb.option_scores[opt]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn wa_order_independent(
        weights in prop::collection::vec(0.0..1.0f64, 5..8),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let (set, report) = weighted_fixture(&weights);
        let mut judgments = set.judgments().to_vec();
        judgments.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let shuffled = AnnotationSet::new(Question::Stance, judgments).unwrap();
        let a = aggregate_wa(&set, &report, 5);
        let b = aggregate_wa(&shuffled, &report, 5);
        prop_assert_eq!(a.len(), b.len());
        for (la, lb) in a.iter().zip(b.iter()) {
            prop_assert_eq!(&la.item_id, &lb.item_id);
            prop_assert_eq!(&la.label, &lb.label);
            prop_assert!((la.confidence - lb.confidence).abs() < 1e-9);
        }
    }
}

fn random_records(scores: Vec<(u8, f64)>) -> Dataset {
    let records: Vec<Record> = scores
        .into_iter()
        .enumerate()
        .map(|(i, (kind, score))| Record {
            id: format!("r{i}"),
            topic_id: (i % 4) as i64,
            topic: "t".into(),
            text: "x".into(),
            lang: "en".into(),
            split: Split::Train,
            stance_label: Some(StanceLabel::Pro),
            stance_conf: (kind == 0).then_some(score),
            quality_score: (kind == 1).then_some(score),
            evidence_score: (kind == 2).then_some(score),
            source: Source::ArgCorpus,
            derived_label: None,
        })
        .collect();
    Dataset {
        name: "prop".into(),
        records,
    }
}

proptest! {
    #[test]
    fn selection_counts_partition_input(
        scores in prop::collection::vec((0u8..3, 0.0..1.0f64), 0..40),
        task in prop::sample::select(vec![TaskKind::Stance, TaskKind::Quality, TaskKind::Evidence]),
    ) {
        let ds = random_records(scores);
        let th = SelectionThresholds::default();
        let sel = select_for_task(&ds, task, &th);
        prop_assert_eq!(
            sel.counts.kept + sel.counts.dropped + sel.counts.skipped,
            ds.len()
        );
        prop_assert_eq!(sel.counts.kept, sel.dataset.len());
        // idempotence
        let again = select_for_task(&sel.dataset, task, &th);
        prop_assert_eq!(again.dataset.records, sel.dataset.records);
    }
}

/// Regression guard: averaging per-topic macro-F1 is not the global
/// macro-F1, and the harness must never conflate the two.
#[test]
fn per_topic_mean_differs_from_global() {
    use argmine_core::evaluation::per_topic;
    let gold = ["P", "P", "P", "N", "P", "N"];
    let pred = ["P", "P", "N", "N", "N", "P"];
    let topics = [1i64, 1, 1, 1, 2, 2];
    let per = per_topic(&gold, &pred, &topics).unwrap();
    let mean: f64 = per.values().map(|v| v.value).sum::<f64>() / per.len() as f64;
    let global = macro_f1(&gold, &pred).unwrap();
    assert!((mean - global).abs() > 1e-6);
}

/// The AggregatedLabel JSONL wire shape stays stable.
#[test]
fn aggregated_label_serialization_shape() {
    let label = AggregatedLabel {
        item_id: "i1".into(),
        question: Question::Stance,
        label: "pro".into(),
        confidence: 0.72,
        n_answers: 5,
        option_scores: [("pro".to_string(), 0.72), ("con".to_string(), 0.28)]
            .into_iter()
            .collect(),
    };
    let json = serde_json::to_value(&label).unwrap();
    for key in ["item_id", "question", "label", "confidence", "n_answers", "option_scores"] {
        assert!(json.get(key).is_some(), "missing key {key}");
    }
}
