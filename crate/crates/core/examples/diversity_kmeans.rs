//! Clustering toy embeddings and picking one label-balanced set.

use std::collections::HashSet;

use uncttp::selection::{kmeans, select_diversity, TfIdfEmbedder};
use uncttp::{Instance, LabelSet};

fn main() -> uncttp::Result<()> {
    let points = vec![vec![0.0, 0.1], vec![0.2, 0.0], vec![5.0, 5.1], vec![5.2, 4.9], vec![9.8, 0.1]];
    let km = kmeans(&points, 3, 42)?;
    println!("assignments {:?} after {} iterations", km.assignments, km.iterations);

    let labels = LabelSet::sarcasm();
    let train: Vec<Instance> = [
        ("a", "great, another monday", "sarcastic"),
        ("b", "oh sure, that went well", "sarcastic"),
        ("c", "council approves new park", "non-sarcastic"),
        ("d", "bridge reopens after repairs", "non-sarcastic"),
        ("e", "wow, what a surprise, the train is late", "sarcastic"),
        ("f", "library extends opening hours", "non-sarcastic"),
    ]
    .iter()
    .map(|(id, t, l)| Instance::new(*id, *t, *l))
    .collect();
    let embedder = TfIdfEmbedder::fit(train.iter().map(|i| i.text.as_str()));
    let set = select_diversity(&train, &labels, 2, &embedder, 13)?;
    set.check(&labels, &HashSet::new())?;
    for d in &set.items {
        println!("{}  {:<14} {}", d.instance_id, d.label, d.text);
    }
    Ok(())
}
