//! Generate a seeded synthetic corpus and split it.

use attrex::corpus::{split, synth_corpus, Grammar, SplitSpec};
use attrex::schema::Schema;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let schema = Schema::canonical();
    let records = synth_corpus(&Grammar::default_grammar(), &schema, 2000, 7)?;
    let ambiguous = records.iter().filter(|r| r.is_ambiguous()).count();
    println!("{} queries, {ambiguous} ambiguous", records.len());
    for r in records.iter().take(5) {
        let pairs: Vec<String> = r.pairs.iter().map(|p| format!("{}={}", p.kind, p.value)).collect();
        println!("  {:<40} {}", r.query, pairs.join(", "));
    }

    let (train, dev, test) = split(&records, &SplitSpec::new(0.8, 0.1, 0.1, 7)?)?;
    println!("split: {} / {} / {}", train.len(), dev.len(), test.len());

    let again = synth_corpus(&Grammar::default_grammar(), &schema, 2000, 7)?;
    assert_eq!(records, again);
    Ok(())
}
