//! Reading and writing the two corpus formats, and converting between them.

use attrex::corpus::{read_annotations, read_conll, record_to_query, write_annotations, write_conll};
use attrex::schema::Schema;
use std::collections::HashMap;

const CONLL: &str = "\
zatrains -X- -X- B-Brand
frozen -X- -X- B-Product_Type
meal -X- -X- I-Product_Type
blackened -X- -X- B-Flavor
chicken -X- -X- I-Flavor
alfredo -X- -X- I-Flavor

large -X- -X- B-Size
red -X- -X- B-Color
t-shirt -X- -X- B-Product_Type
";

const JSONL: &str = r#"{"query":"spicy ground beef","pairs":[{"kind":"Flavor","value":"spicy"},{"kind":"Ingredients","value":"beef"}],"source":"human"}
{"query":"red hat","pairs":[{"kind":"Color","value":"blue"},{"kind":"Product Type","value":"hat"}],"review_verdict":true,"source":"llm"}
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let schema = Schema::canonical();

    let queries = read_conll(CONLL.as_bytes(), &schema)?;
    let written = write_conll(&queries, &schema);
    assert_eq!(read_conll(written.as_bytes(), &schema)?, queries);
    println!("{} CoNLL sentences round-trip", queries.len());

    let records = read_annotations(JSONL.as_bytes())?;
    assert_eq!(write_annotations(&records), JSONL);
    for r in &records {
        // "blue" never occurs in "red hat", so that pair cannot be aligned.
        let (q, drops) = record_to_query(r, &schema, &HashMap::new())?;
        println!("{:?}: {} span(s), {} dropped", r.query, q.spans().len(), drops.len());
        for (i, reason) in drops {
            println!("  {}: {:?} -> {}", r.pairs[i].kind, r.pairs[i].value, reason.as_str());
        }
        print!("{}", write_conll(&[q], &schema));
    }
    Ok(())
}
