//! Statistical oracles and property tests over the public API.

mod common;

use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;
use uncttp::concurrency::map_bounded;
use uncttp::data::{split, Dataset, SplitSizes};
use uncttp::evaluation::aggregate;
use uncttp::prompting::{choose_wrong_label, parse_answer};
use uncttp::selection::{select_random, select_top_ranked, Bm25Index, Bm25Params, RankedList};
use uncttp::{Instance, LabelSet, ParsedAnswer};

#[test]
fn wrong_label_is_uniform_over_non_gold() {
    // 10^4 seeds per instance, chi-square against uniform at p = 0.001.
    let labels = LabelSet::new(["a", "b", "c", "d"]).unwrap();
    let critical = 13.82; // 2 degrees of freedom
    for gold in ["a", "c"] {
        let inst = Instance::new(format!("inst-{gold}"), "text", gold);
        let mut counts: BTreeMap<String, f64> = BTreeMap::new();
        for seed in 0..10_000u64 {
            let w = choose_wrong_label(&inst, &labels, seed).unwrap();
            assert_ne!(w, gold);
            *counts.entry(w).or_default() += 1.0;
        }
        assert_eq!(counts.len(), 3);
        let expected = 10_000.0 / 3.0;
        let chi2: f64 = counts.values().map(|o| (o - expected).powi(2) / expected).sum();
        assert!(chi2 < critical, "chi-square {chi2} for gold {gold}");
    }
}

#[test]
fn binary_wrong_label_is_the_other_label() {
    let labels = LabelSet::sarcasm();
    let inst = Instance::new("x", "t", "sarcastic");
    for seed in 0..50 {
        assert_eq!(choose_wrong_label(&inst, &labels, seed).unwrap(), "non-sarcastic");
    }
}

fn dataset(golds: &[usize], k: usize) -> Dataset {
    let labels = LabelSet::new((0..k).map(|i| format!("l{i}"))).unwrap();
    Dataset {
        name: "prop".into(),
        instances: golds
            .iter()
            .enumerate()
            .map(|(i, g)| Instance::new(format!("i{i}"), common::text(i), format!("l{}", g % k)))
            .collect(),
        labels,
        split_column: BTreeMap::new(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn balanced_split_is_disjoint_and_even(
        k in 2usize..4,
        golds in prop::collection::vec(0usize..4, 10..80),
        per in (1usize..4, 0usize..3, 0usize..3),
        seed in any::<u64>(),
    ) {
        let ds = dataset(&golds, k);
        let sizes = SplitSizes::new(per.0 * k, per.1 * k, per.2 * k);
        match split(&ds, sizes, true, seed) {
            Ok(spec) => {
                let mut seen = HashSet::new();
                for (part, size) in [(&spec.train, sizes.train), (&spec.validation, sizes.validation), (&spec.test, sizes.test)] {
                    prop_assert_eq!(part.len(), size);
                    for l in spec.labels.labels() {
                        prop_assert_eq!(part.iter().filter(|i| &i.gold == l).count(), size / k);
                    }
                    for i in part.iter() {
                        prop_assert!(seen.insert(i.id.clone()));
                    }
                }
                prop_assert_eq!(split(&ds, sizes, true, seed).unwrap(), spec);
            }
            Err(uncttp::Error::InfeasibleBalance(_)) => {
                let need = per.0 + per.1 + per.2;
                let short = ds.labels.labels().iter().any(|l| ds.instances.iter().filter(|i| &i.gold == l).count() < need);
                prop_assert!(short);
            }
            Err(e) => prop_assert!(false, "unexpected {}", e),
        }
    }

    #[test]
    fn random_and_ranked_sets_are_balanced(
        golds in prop::collection::vec(0usize..3, 12..40),
        scores in prop::collection::vec(-5.0f64..5.0, 40),
        n in 1usize..3,
        seed in any::<u64>(),
    ) {
        let ds = dataset(&golds, 3);
        let labels = &ds.labels;
        let enough = labels.labels().iter().all(|l| ds.instances.iter().filter(|i| &i.gold == l).count() >= n);
        prop_assume!(enough);
        let none = HashSet::new();
        select_random(&ds.instances, labels, n, seed).unwrap().check(labels, &none).unwrap();
        let ranking = RankedList::new(ds.instances.iter().zip(&scores).map(|(i, s)| (i.id.clone(), *s)).collect());
        let set = select_top_ranked(&ranking, &ds.instances, labels, n, "ranked", seed, "").unwrap();
        set.check(labels, &none).unwrap();
        // Each label's picks are its n best-ranked instances.
        let score: BTreeMap<&str, f64> = ds.instances.iter().zip(&scores).map(|(i, s)| (i.id.as_str(), *s)).collect();
        for l in labels.labels() {
            let picked_min = set.items.iter().filter(|d| &d.label == l).map(|d| score[d.instance_id.as_str()]).fold(f64::INFINITY, f64::min);
            let better = ds.instances.iter().filter(|i| &i.gold == l && score[i.id.as_str()] > picked_min).count();
            prop_assert!(better < n);
        }
    }

    #[test]
    fn ranked_list_sorts_descending_with_id_ties(pairs in prop::collection::vec(("[a-e]{1,3}", 0i32..4), 0..20)) {
        let list = RankedList::new(pairs.iter().map(|(id, s)| (id.clone(), *s as f64)).collect());
        for w in list.0.windows(2) {
            prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 <= w[1].0));
        }
    }

    #[test]
    fn bm25_scores_are_nonnegative_and_zero_without_overlap(
        docs in prop::collection::vec("[a-d ]{0,20}", 1..8),
        query in "[a-d ]{1,10}",
    ) {
        let train: Vec<Instance> = docs.iter().enumerate().map(|(i, d)| Instance::new(format!("d{i}"), d.clone(), "x")).collect();
        let idx = Bm25Index::new(&train, Bm25Params::default());
        prop_assert!(idx.scores(&query).iter().all(|s| *s >= 0.0));
        prop_assert!(idx.scores("zzz").iter().all(|s| *s == 0.0));
    }

    #[test]
    fn bounded_map_keeps_order(items in prop::collection::vec(any::<u32>(), 0..64), limit in 1usize..10) {
        let out = map_bounded(&items, limit, |x| Ok(u64::from(*x) * 3)).unwrap();
        prop_assert_eq!(out, items.iter().map(|x| u64::from(*x) * 3).collect::<Vec<_>>());
    }

    #[test]
    fn aggregate_ignores_run_order(mut xs in prop::collection::vec(0.0f64..=1.0, 1..10), rot in 0usize..10) {
        let base = aggregate(&xs);
        let len = xs.len();
        xs.rotate_left(rot % len);
        prop_assert_eq!(aggregate(&xs), base);
    }

    #[test]
    fn parser_finds_embedded_labels(prefix in "[A-Za-z ]{0,12}", pick in 0usize..3, upper in any::<bool>()) {
        let labels = LabelSet::financial();
        let label = &labels.labels()[pick];
        let shown = if upper { label.to_uppercase() } else { label.clone() };
        let text = format!("{prefix} {shown}.");
        let parsed = parse_answer(&text, &labels);
        // A prefix may itself contain a label word; otherwise the shown one wins.
        let earlier = labels.labels().iter().any(|l| prefix.to_lowercase().split(' ').any(|w| w == l));
        if !earlier {
            prop_assert_eq!(parsed, ParsedAnswer::Label(label.clone()));
        }
    }
}
