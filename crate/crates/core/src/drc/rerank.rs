use super::{drc_score, DrcError, DrcModel};
use crate::crf::Hypothesis;
use crate::encoder::SpanEncoder;
use crate::schema::{EntitySpan, Schema};

/// Only this many leading hypotheses take part in reranking.
pub const RERANK_DEPTH: usize = 3;

/// Decides whether an attribute span decorates a product-type span.
pub trait PairJudge {
    /// Probability of a decorative relation. Spans must lie within `tokens`.
    fn probability(&self, tokens: &[String], attr: &EntitySpan, ptype: &EntitySpan) -> f64;

    fn threshold(&self) -> f64 {
        0.5
    }
}

impl<F> PairJudge for F
where
    F: Fn(&[String], &EntitySpan, &EntitySpan) -> bool,
{
    fn probability(&self, tokens: &[String], attr: &EntitySpan, ptype: &EntitySpan) -> f64 {
        if self(tokens, attr, ptype) {
            1.0
        } else {
            0.0
        }
    }
}

/// A trained network applied to spans embedded by a matching encoder.
#[derive(Debug, Clone, Copy)]
pub struct DrcJudge<'a> {
    model: &'a DrcModel,
    encoder: &'a SpanEncoder,
}

impl<'a> DrcJudge<'a> {
    pub fn new(model: &'a DrcModel, encoder: &'a SpanEncoder) -> Result<Self, DrcError> {
        model.check_encoder(encoder)?;
        Ok(DrcJudge { model, encoder })
    }
}

impl PairJudge for DrcJudge<'_> {
    fn probability(&self, tokens: &[String], attr: &EntitySpan, ptype: &EntitySpan) -> f64 {
        let a = self
            .encoder
            .embed_span(tokens, attr)
            .expect("attribute span within tokens");
        let p = self
            .encoder
            .embed_span(tokens, ptype)
            .expect("product-type span within tokens");
        drc_score(&a, &p, self.model).expect("encoder dimension checked at construction")
    }

    fn threshold(&self) -> f64 {
        self.model.threshold()
    }
}

/// Accepts exactly the pairs whose spans both occur in one gold annotation.
#[derive(Debug, Clone)]
pub struct GoldPairJudge {
    gold: Vec<EntitySpan>,
}

impl GoldPairJudge {
    pub fn new(gold: &[EntitySpan]) -> Self {
        GoldPairJudge { gold: gold.to_vec() }
    }

    fn holds(&self, span: &EntitySpan) -> bool {
        self.gold
            .iter()
            .any(|g| g.kind == span.kind && g.start == span.start && g.end == span.end)
    }
}

impl PairJudge for GoldPairJudge {
    fn probability(&self, _tokens: &[String], attr: &EntitySpan, ptype: &EntitySpan) -> f64 {
        if attr.kind != ptype.kind && self.holds(attr) && self.holds(ptype) {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairVerdict {
    pub attr: EntitySpan,
    pub ptype: EntitySpan,
    pub probability: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisScore {
    pub rank: usize,
    pub verdicts: Vec<PairVerdict>,
    /// Count of valid pairs; `None` when the hypothesis has no product type.
    pub score: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerankDecision {
    pub chosen: Hypothesis,
    pub scores: Vec<HypothesisScore>,
    /// False when no hypothesis contained a product type.
    pub applied: bool,
}

/// Pairs each non-product-type span with its nearest product-type span
/// (the later one on a tie) and counts the pairs `judge` accepts.
pub fn hypothesis_pair_score(
    hypothesis: &Hypothesis,
    tokens: &[String],
    schema: &Schema,
    judge: &dyn PairJudge,
) -> HypothesisScore {
    let spans = hypothesis.spans(tokens);
    let is_pt = |s: &EntitySpan| schema.is_product_type(s.kind);
    let ptypes: Vec<&EntitySpan> = spans.iter().filter(|s| is_pt(s)).collect();
    if ptypes.is_empty() {
        return HypothesisScore {
            rank: hypothesis.rank,
            verdicts: Vec::new(),
            score: None,
        };
    }
    let verdicts: Vec<PairVerdict> = spans
        .iter()
        .filter(|s| !is_pt(s))
        .map(|a| {
            let mut nearest = ptypes[0];
            for &p in &ptypes[1..] {
                if a.distance(p) <= a.distance(nearest) {
                    nearest = p;
                }
            }
            let probability = judge.probability(tokens, a, nearest);
            PairVerdict {
                attr: a.clone(),
                ptype: nearest.clone(),
                probability,
                valid: probability >= judge.threshold(),
            }
        })
        .collect();
    let score = verdicts.iter().filter(|v| v.valid).count();
    HypothesisScore {
        rank: hypothesis.rank,
        verdicts,
        score: Some(score),
    }
}

/// Picks, among the first [`RERANK_DEPTH`] hypotheses, the one with the
/// most valid pairs; ties go to the better original rank and hypotheses
/// without a product type never win. With no product type anywhere the
/// first hypothesis is kept unchanged.
pub fn rerank(
    hypotheses: &[Hypothesis],
    tokens: &[String],
    schema: &Schema,
    judge: &dyn PairJudge,
) -> Result<RerankDecision, DrcError> {
    if hypotheses.is_empty() {
        return Err(DrcError::EmptyHypotheses);
    }
    let considered = &hypotheses[..hypotheses.len().min(RERANK_DEPTH)];
    let scores: Vec<HypothesisScore> = considered
        .iter()
        .map(|h| hypothesis_pair_score(h, tokens, schema, judge))
        .collect();
    let mut best: Option<(usize, usize)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(v) = s.score {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    let (chosen, applied) = match best {
        Some((i, _)) => (considered[i].clone(), true),
        None => (considered[0].clone(), false),
    };
    Ok(RerankDecision {
        chosen,
        scores,
        applied,
    })
}
