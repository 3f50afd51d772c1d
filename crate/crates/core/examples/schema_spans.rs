//! IOB2 tags, entity spans, and the repair applied to decoder output.

use attrex::schema::{repair_iob2, spans_from_tags, tags_from_spans, tokenize, Schema, TaggedQuery};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let schema = Schema::canonical();
    println!("{} kinds, {} tags", schema.len(), schema.tag_count());

    let tokens = tokenize("a large red woman t-shirt");
    let tags = ["O", "B-Size", "B-Color", "B-Gender", "B-Product_Type"]
        .iter()
        .map(|t| schema.parse_tag(t))
        .collect::<Result<Vec<_>, _>>()?;
    let query = TaggedQuery::new(tokens.clone(), tags)?;
    for s in query.spans() {
        println!("{:>14}: {} [{}..={}]", schema.name(s.kind), s.value, s.start, s.end);
    }
    assert_eq!(tags_from_spans(&tokens, &query.spans())?, query.tags());

    // An orphan I- tag is invalid IOB2; repair turns it into a B- tag.
    let mut raw = vec![
        schema.parse_tag("O")?,
        schema.parse_tag("I-Size")?,
        schema.parse_tag("I-Size")?,
        schema.parse_tag("O")?,
        schema.parse_tag("B-Product_Type")?,
    ];
    assert!(spans_from_tags(&tokens, &raw).is_err());
    repair_iob2(&mut raw);
    let names: Vec<String> = raw.iter().map(|t| schema.tag_name(*t)).collect();
    println!("repaired: {}", names.join(" "));
    for s in spans_from_tags(&tokens, &raw)? {
        println!("{:>14}: {}", schema.name(s.kind), s.value);
    }
    Ok(())
}
