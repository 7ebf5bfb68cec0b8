//! Synthetic corpora shared by the integration tests.
#![allow(dead_code)]

use uncttp::data::DatasetSpec;
use uncttp::{Instance, LabelSet};

const WORDS: [&str; 24] = [
    "market", "storm", "coffee", "senator", "robot", "garden", "profit", "ticket", "holiday", "engine", "library",
    "pizza", "river", "meeting", "traffic", "museum", "budget", "laptop", "concert", "harbor", "forest", "bakery",
    "signal", "winter",
];

/// Deterministic text of a few words keyed by `i`.
pub fn text(i: usize) -> String {
    let w = |k: usize| WORDS[(i * 7 + k * 11 + i / 24) % WORDS.len()];
    format!("{} {} {} item{i}", w(0), w(1), w(2))
}

/// `per_label` instances per label for each split, labels cycling.
pub fn split_instances(prefix: &str, labels: &LabelSet, per_label: usize) -> Vec<Instance> {
    let k = labels.len();
    (0..per_label * k)
        .map(|i| Instance::new(format!("{prefix}{i:03}"), format!("{} {prefix}", text(i)), &labels.labels()[i % k]))
        .collect()
}

pub fn spec(labels: LabelSet, train: usize, validation: usize, test: usize) -> DatasetSpec {
    DatasetSpec {
        name: "toy".into(),
        train: split_instances("tr", &labels, train),
        validation: split_instances("va", &labels, validation),
        test: split_instances("te", &labels, test),
        labels,
        balance: true,
    }
}
