use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DrcError;
use crate::encoder::SpanEncoder;
use crate::schema::{EntitySpan, Schema, TaggedQuery};

/// Where a training pair came from: query indices into the corpus and the
/// spans filling each slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSource {
    pub attr_query: usize,
    pub attr: EntitySpan,
    pub ptype_query: usize,
    pub ptype: EntitySpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairExample {
    pub attr: Vec<f64>,
    pub ptype: Vec<f64>,
    pub label: bool,
    pub source: Option<PairSource>,
}

/// Training pairs together with the fingerprint of the encoder that
/// produced their vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDataset {
    pub fingerprint: String,
    pub examples: Vec<PairExample>,
}

impl PairDataset {
    pub fn new(fingerprint: impl Into<String>, examples: Vec<PairExample>) -> Self {
        PairDataset {
            fingerprint: fingerprint.into(),
            examples,
        }
    }

    pub fn positives(&self) -> usize {
        self.examples.iter().filter(|e| e.label).count()
    }

    pub fn negatives(&self) -> usize {
        self.examples.len() - self.positives()
    }
}

type Slot = (usize, EntitySpan);

fn surface(attr: &EntitySpan, ptype: &EntitySpan) -> (String, String) {
    (attr.value.to_lowercase(), ptype.value.to_lowercase())
}

/// Positives are every (attribute, product type) pair inside one gold
/// query. Negatives, equal in number, are drawn half from role swaps (a
/// product-type span in the attribute slot against some attribute span) and
/// half from cross-query pairings. A negative whose surface strings match
/// some positive is rejected.
pub fn build_pair_dataset(
    corpus: &[TaggedQuery],
    schema: &Schema,
    encoder: &SpanEncoder,
    seed: u64,
) -> Result<PairDataset, DrcError> {
    let pt = schema.product_type().ok_or(DrcError::NoProductTypes)?;
    let mut attrs: Vec<Vec<EntitySpan>> = Vec::with_capacity(corpus.len());
    let mut ptypes: Vec<Vec<EntitySpan>> = Vec::with_capacity(corpus.len());
    for q in corpus {
        let (p, a): (Vec<_>, Vec<_>) = q.spans().into_iter().partition(|s| s.kind == pt);
        ptypes.push(p);
        attrs.push(a);
    }
    if ptypes.iter().all(Vec::is_empty) {
        return Err(DrcError::NoProductTypes);
    }

    let mut positives: Vec<(Slot, Slot)> = Vec::new();
    for (i, (a_spans, p_spans)) in attrs.iter().zip(&ptypes).enumerate() {
        for a in a_spans {
            for p in p_spans {
                positives.push(((i, a.clone()), (i, p.clone())));
            }
        }
    }
    let known: HashSet<(String, String)> = positives.iter().map(|(a, p)| surface(&a.1, &p.1)).collect();

    let all_attrs: Vec<Slot> = attrs
        .iter()
        .enumerate()
        .flat_map(|(i, v)| v.iter().map(move |s| (i, s.clone())))
        .collect();
    let with_pt: Vec<usize> = (0..corpus.len()).filter(|&i| !ptypes[i].is_empty()).collect();
    let with_attr: Vec<usize> = (0..corpus.len()).filter(|&i| !attrs[i].is_empty()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = positives.len();
    let budget = 50 * target + 100;
    let mut negatives: Vec<(Slot, Slot)> = Vec::with_capacity(target);

    let role_swap = |rng: &mut ChaCha8Rng| -> Option<(Slot, Slot)> {
        let i = *with_pt.choose(rng)?;
        let p = ptypes[i].choose(rng)?.clone();
        let a = all_attrs.choose(rng)?.clone();
        Some(((i, p), a))
    };
    let cross = |rng: &mut ChaCha8Rng| -> Option<(Slot, Slot)> {
        let i = *with_attr.choose(rng)?;
        let j = *with_pt.choose(rng)?;
        if i == j {
            return None;
        }
        let a = attrs[i].choose(rng)?.clone();
        let p = ptypes[j].choose(rng)?.clone();
        Some(((i, a), (j, p)))
    };

    let n_swap = target / 2;
    let draw = |negatives: &mut Vec<(Slot, Slot)>, want: usize, swap_first: bool, rng: &mut ChaCha8Rng| {
        let stop = negatives.len() + want;
        for _ in 0..budget {
            if negatives.len() >= stop {
                break;
            }
            let cand = if swap_first { role_swap(rng) } else { cross(rng) };
            if let Some((a, p)) = cand {
                if !known.contains(&surface(&a.1, &p.1)) {
                    negatives.push((a, p));
                }
            }
        }
    };
    draw(&mut negatives, n_swap, true, &mut rng);
    let short = n_swap - negatives.len();
    draw(&mut negatives, target - n_swap + short, false, &mut rng);
    let remaining = target - negatives.len();
    draw(&mut negatives, remaining, true, &mut rng);

    if negatives.len() < positives.len() {
        positives.shuffle(&mut rng);
        positives.truncate(negatives.len());
    }

    let mut examples = Vec::with_capacity(positives.len() + negatives.len());
    for (label, list) in [(true, positives), (false, negatives)] {
        for ((qa, a), (qp, p)) in list {
            examples.push(PairExample {
                attr: encoder.embed_span(corpus[qa].tokens(), &a)?,
                ptype: encoder.embed_span(corpus[qp].tokens(), &p)?,
                label,
                source: Some(PairSource {
                    attr_query: qa,
                    attr: a,
                    ptype_query: qp,
                    ptype: p,
                }),
            });
        }
    }
    Ok(PairDataset::new(encoder.fingerprint(), examples))
}
