//! Train the CRF tagger on a synthetic corpus and score it on held-out queries.

use std::collections::HashMap;

use attrex::corpus::{record_to_query, split, synth_corpus, Grammar, SplitSpec};
use attrex::crf::{train, TrainConfig};
use attrex::encoder::EncoderConfig;
use attrex::eval::evaluate;
use attrex::schema::{Schema, TaggedQuery};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let schema = Schema::canonical();
    let records = synth_corpus(&Grammar::default_grammar(), &schema, 1000, 1)?;
    let (train_set, _, test_set) = split(&records, &SplitSpec::new(0.8, 0.1, 0.1, 1)?)?;
    let to_queries = |rs: &[_]| -> Result<Vec<TaggedQuery>, Box<dyn std::error::Error>> {
        let mut out = Vec::new();
        for r in rs {
            out.push(record_to_query(r, &schema, &HashMap::new())?.0);
        }
        Ok(out)
    };
    let (train_q, test_q) = (to_queries(&train_set)?, to_queries(&test_set)?);

    let model = train(&train_q, &schema, &EncoderConfig::default(), &TrainConfig::default())?;
    for (i, loss) in model.meta().epoch_losses.iter().enumerate() {
        println!("epoch {}: loss {loss:.3}", i + 1);
    }
    println!("{} features, {} weights", model.feature_count(), model.weights().len());

    let report = evaluate(&test_q, &schema, |tokens| {
        let obs = model.observe_tokens(tokens)?;
        model.decode(&obs).map(|h| h.spans(tokens))
    })?;
    print!("{}", report.to_table(true, true));
    Ok(())
}
