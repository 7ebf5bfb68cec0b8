//! Per-query rankings by BM25 and by TF-IDF cosine.

use uncttp::selection::{rank_bm25, rank_similarity, Bm25Params, TfIdfEmbedder};
use uncttp::Instance;

fn main() -> uncttp::Result<()> {
    let train: Vec<Instance> = [
        "profit rose sharply in the third quarter",
        "the board approved a new dividend",
        "sales fell and the loss widened",
        "quarterly profit beat analyst forecasts",
    ]
    .iter()
    .enumerate()
    .map(|(i, t)| Instance::new(format!("t{i}"), *t, "neutral"))
    .collect();
    let query = Instance::new("q", "third quarter profit", "positive");

    println!("bm25:");
    for (id, s) in rank_bm25(&query, &train, Bm25Params::default()).0 {
        println!("  {id} {s:.4}");
    }
    let tfidf = TfIdfEmbedder::fit(train.iter().map(|i| i.text.as_str()));
    println!("cosine:");
    for (id, s) in rank_similarity(&query, &train, &tfidf)?.0 {
        println!("  {id} {s:.4}");
    }
    Ok(())
}
