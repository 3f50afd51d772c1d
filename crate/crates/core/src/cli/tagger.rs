use clap::ValueEnum;

use super::CliError;
use crate::crf::{CrfModel, Hypothesis};
use crate::drc::{rerank, DrcJudge, DrcModel, RerankDecision, RERANK_DEPTH};
use crate::encoder::SpanEncoder;
use crate::schema::EntitySpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Decoder {
    Crf,
    Softmax,
}

/// CRF decoding followed by optional DRC reranking.
pub struct Tagger {
    crf: CrfModel,
    drc: Option<(DrcModel, SpanEncoder)>,
    k: usize,
    decoder: Decoder,
}

/// Everything produced for one query.
#[derive(Debug, Clone)]
pub struct Tagged {
    /// Up to `max(k, 3)` hypotheses with DRC on, otherwise up to `k`.
    pub hypotheses: Vec<Hypothesis>,
    pub chosen: Option<Hypothesis>,
    pub decision: Option<RerankDecision>,
    pub spans: Vec<EntitySpan>,
}

impl Tagger {
    /// Fails with a model-mismatch error when `drc` was trained on a
    /// different span encoder than the CRF's encoder config describes.
    pub fn new(crf: CrfModel, drc: Option<DrcModel>, k: usize, decoder: Decoder) -> Result<Self, CliError> {
        if k == 0 {
            return Err(CliError::config("--k must be >= 1"));
        }
        let drc = match drc {
            None => None,
            Some(m) => {
                let enc = SpanEncoder::from_config(crf.encoder_config()).map_err(|e| CliError::data(e.to_string()))?;
                m.check_encoder(&enc).map_err(|e| CliError::model(e.to_string()))?;
                Some((m, enc))
            }
        };
        Ok(Tagger { crf, drc, k, decoder })
    }

    pub fn crf(&self) -> &CrfModel {
        &self.crf
    }

    pub fn tag(&self, tokens: &[String]) -> Result<Tagged, CliError> {
        if tokens.is_empty() {
            return Ok(Tagged {
                hypotheses: Vec::new(),
                chosen: None,
                decision: None,
                spans: Vec::new(),
            });
        }
        let obs = self
            .crf
            .observe_tokens(tokens)
            .map_err(|e| CliError::data(e.to_string()))?;
        let hypotheses = match self.decoder {
            Decoder::Softmax => vec![self
                .crf
                .decode_softmax(&obs)
                .map_err(|e| CliError::data(e.to_string()))?],
            Decoder::Crf => {
                let depth = if self.drc.is_some() {
                    self.k.max(RERANK_DEPTH)
                } else {
                    self.k
                };
                self.crf
                    .decode_k(&obs, depth)
                    .map_err(|e| CliError::data(e.to_string()))?
            }
        };
        let (chosen, decision) = match &self.drc {
            None => (hypotheses[0].clone(), None),
            Some((model, enc)) => {
                let judge = DrcJudge::new(model, enc).map_err(|e| CliError::model(e.to_string()))?;
                let d = rerank(&hypotheses, tokens, self.crf.schema(), &judge)
                    .map_err(|e| CliError::data(e.to_string()))?;
                (d.chosen.clone(), Some(d))
            }
        };
        let spans = chosen.spans(tokens);
        Ok(Tagged {
            hypotheses,
            chosen: Some(chosen),
            decision,
            spans,
        })
    }
}
