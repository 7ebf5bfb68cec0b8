//! Ingesting a CSV corpus and drawing a balanced seeded split.

use uncttp::data::{ingest, label_counts, split, Columns, InputFormat, SplitSizes};
use uncttp::LabelSet;

fn main() -> uncttp::Result<()> {
    let dir = std::env::temp_dir().join("uncttp-split-example");
    std::fs::create_dir_all(&dir).map_err(|e| uncttp::Error::Config(e.to_string()))?;
    let path = dir.join("corpus.csv");
    let mut csv = String::from("id,text,label\n");
    for i in 0..40 {
        let label = ["positive", "neutral", "Negative", "neutral"][i % 4];
        csv += &format!("s{i},\"sentence {i}\",{label}\n");
    }
    std::fs::write(&path, csv).map_err(|e| uncttp::Error::Config(e.to_string()))?;

    let ds = ingest(&path, InputFormat::Csv, &Columns::default(), &LabelSet::financial(), "toy")?;
    println!("ingested {:?} per label", label_counts(&ds.instances, &ds.labels));
    let spec = split(&ds, "9/6/3".parse::<SplitSizes>()?, true, 13)?;
    for (name, part) in [("train", &spec.train), ("validation", &spec.validation), ("test", &spec.test)] {
        println!("{name:<10} {:?}", label_counts(part, &spec.labels));
    }
    Ok(())
}
