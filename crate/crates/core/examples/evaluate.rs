//! Entity-level precision/recall/F and human satisfaction rates.

use attrex::eval::{evaluate, hsr, prf, read_judgments, MatchCounts};
use attrex::schema::{tokenize, EntitySpan, Schema, TaggedQuery};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (p, r, f) = prf(MatchCounts { tp: 4, fp: 2, fn_: 1 });
    println!("tp=4 fp=2 fn=1 -> P {p:.4} R {r:.4} F {f:.4}");

    let schema = Schema::canonical();
    let color = schema.lookup("Color").unwrap();
    let pt = schema.product_type().unwrap();
    let tokens = tokenize("red leather case");
    let gold = vec![TaggedQuery::from_spans(
        tokens.clone(),
        &[
            EntitySpan::new(color, 0, 0, &tokens),
            EntitySpan::new(pt, 2, 2, &tokens),
        ],
    )?];
    // The tagger finds the color but reads "leather case" as one product type.
    let report = evaluate(&gold, &schema, |t| {
        Ok::<_, std::convert::Infallible>(vec![EntitySpan::new(color, 0, 0, t), EntitySpan::new(pt, 1, 2, t)])
    })?;
    print!("{}", report.to_table(false, false));

    let judgments = r#"{"query":"kids shoes","kind":"Age Group","value":"kids","satisfied":true}
{"query":"nike shoes","kind":"Brand","value":"nike","satisfied":true}
{"query":"nkie shoes","kind":"Brand","value":"nkie","satisfied":false}
"#;
    let j = read_judgments(judgments.as_bytes(), Some(&schema))?;
    print!("{}", hsr(&j).to_table());
    Ok(())
}
