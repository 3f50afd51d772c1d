use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use super::align::align_values;
use super::annotations::{AnnotationRecord, Pair, Source};
use super::CorpusError;
use crate::schema::{tokenize, KindId, Schema};

/// The grammar shipped with the crate.
pub const DEFAULT_GRAMMAR: &str = include_str!("../../assets/default_grammar.txt");

const MAX_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
enum Part {
    Literal(String),
    /// `first` is the kind under the first reading, `second` under the other.
    Slot {
        first: String,
        second: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Template {
    parts: Vec<Part>,
}

/// Lexicons and templates for [`synth_corpus`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grammar {
    lexicons: BTreeMap<String, Vec<String>>,
    templates: Vec<Template>,
    ambiguous: Vec<Template>,
    pub ambiguous_fraction: f64,
    pub first_share: f64,
}

fn parse_template(text: &str, line: usize, allow_dual: bool) -> Result<Template, CorpusError> {
    let err = |message: String| CorpusError::Grammar { line, message };
    let mut parts = Vec::new();
    let mut rest = text.trim();
    while !rest.is_empty() {
        if let Some(after) = rest.strip_prefix('<') {
            let close = after.find('>').ok_or_else(|| err("unclosed '<'".into()))?;
            let inner = after[..close].trim();
            let slot = match inner.split_once('/') {
                Some(_) if !allow_dual => {
                    return Err(err(format!("two-reading slot <{inner}> outside an ambiguous template")))
                }
                Some((a, b)) => Part::Slot {
                    first: a.trim().to_string(),
                    second: Some(b.trim().to_string()),
                },
                None => Part::Slot {
                    first: inner.to_string(),
                    second: None,
                },
            };
            parts.push(slot);
            rest = after[close + 1..].trim_start();
        } else {
            let end = rest.find(|c: char| c.is_whitespace() || c == '<').unwrap_or(rest.len());
            parts.push(Part::Literal(rest[..end].to_string()));
            rest = rest[end..].trim_start();
        }
    }
    if !parts.iter().any(|p| matches!(p, Part::Slot { .. })) {
        return Err(err("template has no slots".into()));
    }
    Ok(Template { parts })
}

impl Grammar {
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut g = Grammar {
            lexicons: BTreeMap::new(),
            templates: Vec::new(),
            ambiguous: Vec::new(),
            ambiguous_fraction: 0.0,
            first_share: 0.5,
        };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let (key, value) = raw.split_once('=').ok_or_else(|| CorpusError::Grammar {
                line,
                message: "expected key = value".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let number = || {
                value
                    .parse::<f64>()
                    .ok()
                    .filter(|v| (0.0..=1.0).contains(v))
                    .ok_or_else(|| CorpusError::Grammar {
                        line,
                        message: format!("{key} must be a number in [0, 1]"),
                    })
            };
            match key {
                "template" => g.templates.push(parse_template(value, line, false)?),
                "ambiguous" => g.ambiguous.push(parse_template(value, line, true)?),
                "ambiguous.fraction" => g.ambiguous_fraction = number()?,
                "ambiguous.first_share" => g.first_share = number()?,
                _ => match key.strip_prefix("lexicon.") {
                    Some(kind) => {
                        let kind = kind.split('/').map(str::trim).collect::<Vec<_>>().join("/");
                        let values = value
                            .split('|')
                            .map(|v| v.split_whitespace().collect::<Vec<_>>().join(" "))
                            .filter(|v| !v.is_empty())
                            .collect();
                        g.lexicons.insert(kind, values);
                    }
                    None => {
                        return Err(CorpusError::Grammar {
                            line,
                            message: format!("unknown key {key:?}"),
                        })
                    }
                },
            }
        }
        g.check_pools()?;
        Ok(g)
    }

    pub fn default_grammar() -> Self {
        Grammar::parse(DEFAULT_GRAMMAR).expect("shipped grammar parses")
    }

    fn pool(&self, first: &str, second: Option<&str>) -> Vec<String> {
        match second {
            None => self.lexicons.get(first).cloned().unwrap_or_default(),
            Some(second) => match self.lexicons.get(&format!("{first}/{second}")) {
                Some(p) => p.clone(),
                None => {
                    let b = self.lexicons.get(second).cloned().unwrap_or_default();
                    self.lexicons
                        .get(first)
                        .map(|a| a.iter().filter(|v| b.contains(v)).cloned().collect())
                        .unwrap_or_default()
                }
            },
        }
    }

    fn check_pools(&self) -> Result<(), CorpusError> {
        for t in self.templates.iter().chain(&self.ambiguous) {
            for p in &t.parts {
                if let Part::Slot { first, second } = p {
                    if self.pool(first, second.as_deref()).is_empty() {
                        let name = match second {
                            Some(s) => format!("{first}/{s}"),
                            None => first.clone(),
                        };
                        return Err(CorpusError::EmptyLexicon(name));
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks that every slot kind exists in `schema`.
    pub fn check_schema(&self, schema: &Schema) -> Result<(), CorpusError> {
        for t in self.templates.iter().chain(&self.ambiguous) {
            for p in &t.parts {
                if let Part::Slot { first, second } = p {
                    for k in std::iter::once(first).chain(second) {
                        if schema.lookup(k).is_none() {
                            return Err(CorpusError::Grammar {
                                line: 0,
                                message: format!("slot kind {k:?} is not in the schema"),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> (Vec<Pair>, String, bool) {
        let use_ambiguous =
            !self.ambiguous.is_empty() && (self.templates.is_empty() || rng.random::<f64>() < self.ambiguous_fraction);
        let (template, second_reading) = if use_ambiguous {
            let t = &self.ambiguous[rng.random_range(0..self.ambiguous.len())];
            (t, rng.random::<f64>() >= self.first_share)
        } else {
            (&self.templates[rng.random_range(0..self.templates.len())], false)
        };
        let mut words = Vec::new();
        let mut pairs = Vec::new();
        for part in &template.parts {
            match part {
                Part::Literal(w) => words.push(w.clone()),
                Part::Slot { first, second } => {
                    let pool = self.pool(first, second.as_deref());
                    let value = pool[rng.random_range(0..pool.len())].clone();
                    let kind = match (second, second_reading) {
                        (Some(s), true) => s.clone(),
                        _ => first.clone(),
                    };
                    words.push(value.clone());
                    pairs.push(Pair::new(kind, value));
                }
            }
        }
        (pairs, words.join(" "), use_ambiguous)
    }
}

/// Generates `n` self-consistent records (every pair aligns to the query)
/// deterministically from `seed`. Records drawn from ambiguous templates
/// carry `"ambiguous": true`.
pub fn synth_corpus(
    grammar: &Grammar,
    schema: &Schema,
    n: usize,
    seed: u64,
) -> Result<Vec<AnnotationRecord>, CorpusError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if grammar.templates.is_empty() && grammar.ambiguous.is_empty() {
        return Err(CorpusError::Grammar {
            line: 0,
            message: "grammar declares no templates".into(),
        });
    }
    grammar.check_schema(schema)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut made = None;
        for _ in 0..MAX_ATTEMPTS {
            let (pairs, query, ambiguous) = grammar.sample(&mut rng);
            if aligns_exactly(&query, &pairs, schema) {
                made = Some((pairs, query, ambiguous));
                break;
            }
        }
        let (pairs, query, ambiguous) = made.ok_or_else(|| CorpusError::Grammar {
            line: 0,
            message: "could not generate a self-consistent record".into(),
        })?;
        let mut rec = AnnotationRecord::new(query, pairs, Source::Synthetic);
        if ambiguous {
            rec.extra.insert("ambiguous".into(), Value::Bool(true));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Slot values must land on the slot's own tokens, in slot order.
fn aligns_exactly(query: &str, pairs: &[Pair], schema: &Schema) -> bool {
    let tokens = tokenize(query);
    let typed: Vec<(KindId, &str)> = pairs
        .iter()
        .map(|p| {
            (
                schema.lookup(&p.kind).expect("checked against schema"),
                p.value.as_str(),
            )
        })
        .collect();
    let alignment = align_values(&tokens, &typed);
    if !alignment.drops().is_empty() {
        return false;
    }
    let spans = alignment.spans();
    spans.len() == pairs.len()
        && spans
            .iter()
            .zip(pairs)
            .all(|(s, p)| s.value == p.value && schema.name(s.kind) == p.kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{record_to_query, KindAliases};

    #[test]
    fn zero_records() {
        let g = Grammar::default_grammar();
        assert!(synth_corpus(&g, &Schema::canonical(), 0, 1).unwrap().is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let g = Grammar::default_grammar();
        let s = Schema::canonical();
        let a = synth_corpus(&g, &s, 200, 42).unwrap();
        assert_eq!(a, synth_corpus(&g, &s, 200, 42).unwrap());
        assert_ne!(a, synth_corpus(&g, &s, 200, 43).unwrap());
    }

    #[test]
    fn records_are_self_consistent() {
        let g = Grammar::default_grammar();
        let s = Schema::canonical();
        for r in synth_corpus(&g, &s, 500, 7).unwrap() {
            let (q, drops) = record_to_query(&r, &s, &KindAliases::new()).unwrap();
            assert!(drops.is_empty(), "{r:?}");
            assert_eq!(q.spans().len(), r.pairs.len());
        }
    }

    #[test]
    fn default_grammar_ambiguity_rate() {
        let g = Grammar::default_grammar();
        let recs = synth_corpus(&g, &Schema::canonical(), 2000, 0).unwrap();
        let amb = recs.iter().filter(|r| r.is_ambiguous()).count();
        assert!(amb * 10 >= recs.len(), "only {amb} ambiguous records");
        let second = recs
            .iter()
            .filter(|r| r.is_ambiguous() && r.pairs.iter().filter(|p| p.kind == "Flavor").count() == 2)
            .count();
        assert!(second > 0 && second < amb);
    }

    #[test]
    fn empty_lexicon_and_bad_lines() {
        let err = Grammar::parse("template = <Color> <Product Type>\nlexicon.Color = red\n").unwrap_err();
        assert!(matches!(err, CorpusError::EmptyLexicon(k) if k == "Product Type"));
        assert!(Grammar::parse("template = <Color/Flavor>\n").is_err());
        assert!(Grammar::parse("nonsense\n").is_err());
        assert!(Grammar::parse("ambiguous.fraction = 2\n").is_err());
    }

    #[test]
    fn dual_slot_pool_falls_back_to_intersection() {
        let g = Grammar::parse(
            "lexicon.Flavor = mint | lemon\nlexicon.Product Type = lemon | tea\nambiguous = <Flavor/Product Type> tea\n",
        )
        .unwrap();
        assert_eq!(g.pool("Flavor", Some("Product Type")), vec!["lemon".to_string()]);
    }
}
