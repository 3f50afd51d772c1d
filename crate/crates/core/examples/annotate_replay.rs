//! The annotation pipeline against recorded model responses.
//!
//! Swap `ReplayClient` for `HttpClient::new(&LlmEndpointConfig { .. })` to
//! talk to a live OpenAI-compatible endpoint.

use attrex::annotate::{annotate_corpus, render_pairs, AnnotateConfig, PromptTemplate, ReplayClient};
use attrex::corpus::{write_annotations, Pair};
use attrex::schema::Schema;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let schema = Schema::canonical();
    let extraction = PromptTemplate::extraction();
    let review = PromptTemplate::review();
    println!("{}", extraction.render("a small blue denim jacket", ""));

    let mut replay = ReplayClient::new();
    let q1 = "a small blue denim jacket";
    replay.insert(
        &extraction.to_messages(q1, ""),
        r#"["Size: small", "Color: blue", "Material: denim", "Product Type: jacket", "Brand: levis"]"#,
    );
    let kept = [
        Pair::new("Size", "small"),
        Pair::new("Color", "blue"),
        Pair::new("Material", "denim"),
        Pair::new("Product Type", "jacket"),
    ];
    replay.insert(&review.to_messages(q1, &render_pairs(&kept)), "True");

    let q2 = "organic green tea";
    replay.insert(
        &extraction.to_messages(q2, ""),
        "Sure! The attributes are organic and green tea.",
    );

    let queries = vec![q1.to_string(), q2.to_string()];
    let (records, report) = annotate_corpus(&queries, &schema, &replay, &AnnotateConfig::default())?;
    print!("{}", write_annotations(&records));
    println!(
        "format valid {:.2}%, review passed {:.2}%, drops {:?}",
        report.format_valid_rate(),
        report.review_pass_rate(),
        report.drops
    );
    Ok(())
}
