//! Decorative-relation reranking on "tahini sauce for hummus".
//!
//! A hand-weighted CRF proposes three readings; a pair classifier over
//! one-hot embeddings judges which (attribute, product type) pairs decorate
//! each other, and the reading with the most valid pairs wins.

use attrex::crf::CrfModel;
use attrex::drc::{rerank, DrcJudge, DrcModel};
use attrex::encoder::{EmbeddingTable, EncoderConfig, SpanEncoder, Template};
use attrex::schema::{tokenize, Schema};

const VOCAB: [&str; 4] = ["tahini", "sauce", "for", "hummus"];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let schema = Schema::new([("Flavor", false), ("Cuisine Type", false), ("Product Type", true)])?;
    let tag = |t: &str| schema.parse_tag(t);

    let features = VOCAB.iter().map(|w| format!("w0={w}")).collect();
    let encoder = EncoderConfig {
        templates: [Template::Word].into_iter().collect(),
        ..EncoderConfig::default()
    };
    let mut crf = CrfModel::new(schema.clone(), features, encoder);
    crf.set_emission("w0=tahini", tag("B-Flavor")?, 5.0);
    crf.set_emission("w0=for", tag("O")?, 5.0);
    crf.set_emission("w0=sauce", tag("B-Cuisine_Type")?, 3.0);
    crf.set_emission("w0=sauce", tag("B-Product_Type")?, 2.0);
    // "hummus" is equally plausible as a flavor or a product type.
    crf.set_emission("w0=hummus", tag("B-Product_Type")?, 3.0);
    crf.set_emission("w0=hummus", tag("B-Flavor")?, 3.0);

    let mut table = EmbeddingTable::default();
    for (i, w) in VOCAB.iter().enumerate() {
        let mut v = vec![0.0; VOCAB.len()];
        v[i] = 1.0;
        table.insert(*w, v)?;
    }
    let span_encoder = SpanEncoder::with_table(table, 1);

    // Logistic regression on [e_attr; e_ptype]: any attribute except "sauce"
    // decorates its product type.
    let mut drc = DrcModel::zeros(span_encoder.dim(), &[], 0.5, span_encoder.fingerprint());
    let w = drc.params_mut();
    w[0] = 4.0;
    w[1] = -4.0;
    w[3] = 4.0;

    let tokens = tokenize("tahini sauce for hummus");
    let hyps = crf.decode_k(&crf.observe_tokens(&tokens)?, 3)?;
    let judge = DrcJudge::new(&drc, &span_encoder)?;
    let decision = rerank(&hyps, &tokens, &schema, &judge)?;
    for s in &decision.scores {
        let spans: Vec<String> = hyps[s.rank - 1]
            .spans(&tokens)
            .iter()
            .map(|x| format!("{}: {}", schema.name(x.kind), x.value))
            .collect();
        let score = s.score.map_or("-".to_string(), |v| v.to_string());
        println!("#{} score {score:>2}  ({})", s.rank, spans.join(", "));
        for v in &s.verdicts {
            println!(
                "      ({}, {}) p={:.3} {}",
                v.attr.value, v.ptype.value, v.probability, v.valid
            );
        }
    }
    println!("chosen: #{}", decision.chosen.rank);
    Ok(())
}
