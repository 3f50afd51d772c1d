//! Exact k-best decoding: the top hypotheses with their posteriors.

use attrex::crf::CrfModel;
use attrex::encoder::{EncoderConfig, Template};
use attrex::schema::{tokenize, Schema};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let schema = Schema::new([("Color", false), ("Material", false), ("Product Type", true)])?;
    let features = ["w0=red", "w0=leather", "w0=case"].map(String::from).to_vec();
    let encoder = EncoderConfig {
        templates: [Template::Word].into_iter().collect(),
        ..EncoderConfig::default()
    };
    let mut model = CrfModel::new(schema.clone(), features, encoder);
    let tag = |t: &str| schema.parse_tag(t);
    model.set_emission("w0=red", tag("B-Color")?, 3.0);
    model.set_emission("w0=leather", tag("B-Material")?, 2.0);
    model.set_emission("w0=leather", tag("B-Color")?, 1.5);
    model.set_emission("w0=case", tag("B-Product_Type")?, 3.0);
    model.set_transition(tag("B-Color")?, tag("B-Color")?, -1.0);

    let tokens = tokenize("red leather case");
    let obs = model.observe_tokens(&tokens)?;
    println!("log Z = {:.4}", model.log_partition(&obs)?);
    for h in model.decode_k(&obs, 3)? {
        let spans: Vec<String> = h
            .spans(&tokens)
            .iter()
            .map(|s| format!("{}: {}", schema.name(s.kind), s.value))
            .collect();
        println!(
            "#{} score {:.2} p={:.3}  {}",
            h.rank,
            h.log_score,
            h.posterior,
            spans.join(", ")
        );
    }
    let marginals = model.marginals(&obs)?;
    for (tok, row) in tokens.iter().zip(&marginals) {
        let (best, p) = row
            .iter()
            .enumerate()
            .fold((0, 0.0), |a, (i, &p)| if p > a.1 { (i, p) } else { a });
        println!(
            "{tok:>8}: {} ({p:.3})",
            schema.tag_name(attrex::schema::TagLabel::from_index(best))
        );
    }
    Ok(())
}
