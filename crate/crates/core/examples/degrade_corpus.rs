//! Builds one labeled dataset per quality class plus a mixed set from a small desk
//! corpus and reports the mean error each class introduces.
//!
//! cargo run --release --example degrade_corpus -- [out_dir]

use qcia::corpus::{desk_corpus, CorpusSpec};
use qcia::degrade::{build_mixed_dataset, build_per_class_datasets, load_entry, QualityTaxonomy};

fn main() -> qcia::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/degrade_corpus".into());
    let corpus = desk_corpus(&CorpusSpec { count: 10, ..CorpusSpec::default() });
    let tax = QualityTaxonomy::desk();

    for manifest in build_per_class_datasets(&corpus, &tax, &out)? {
        let class = manifest.entries[0].class;
        let mut mae = 0.0;
        for (entry, src) in manifest.entries.iter().zip(&corpus) {
            mae += load_entry(entry, None)?.mean_abs_diff(&src.image);
        }
        println!("{:<6} {:>7.3}", class.to_string(), mae / corpus.len() as f64);
    }

    let mixed = build_mixed_dataset(&corpus, &tax, 42, format!("{out}/mixed"))?;
    mixed.write(format!("{out}/mixed/manifest.json"))?;
    let classes: Vec<String> = mixed.entries.iter().map(|e| e.class.to_string()).collect();
    println!("mixed: {}", classes.join(" "));
    Ok(())
}
