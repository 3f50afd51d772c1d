use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::align::{align_values, DropReason};
use super::CorpusError;
use crate::schema::{tokenize, KindId, Schema, TaggedQuery};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Human,
    Llm,
    Synthetic,
}

/// One `kind: value` attribute pair as written by an annotator.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pair {
    pub kind: String,
    pub value: String,
}

impl Pair {
    pub fn new(kind: impl Into<String>, value: impl Into<String>) -> Self {
        Pair {
            kind: kind.into(),
            value: value.into(),
        }
    }
}

/// Keep/drop verdict for one parsed pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanEntry {
    pub kind: String,
    pub value: String,
    pub kept: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<DropReason>,
}

/// A query with its attribute pairs and annotation provenance.
///
/// Fields not listed here are kept in `extra` and written back unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub query: String,
    pub pairs: Vec<Pair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean_report: Option<Vec<CleanEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review_verdict: Option<bool>,
    pub source: Source,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl AnnotationRecord {
    pub fn new(query: impl Into<String>, pairs: Vec<Pair>, source: Source) -> Self {
        AnnotationRecord {
            query: query.into(),
            pairs,
            raw_response: None,
            clean_report: None,
            review_verdict: None,
            source,
            extra: Map::new(),
        }
    }

    /// True when the `ambiguous` marker set by the synthetic generator is present.
    pub fn is_ambiguous(&self) -> bool {
        self.extra.get("ambiguous").and_then(Value::as_bool).unwrap_or(false)
    }
}

/// Reads JSON Lines; blank lines are skipped.
pub fn read_annotations<R: BufRead>(input: R) -> Result<Vec<AnnotationRecord>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedJson {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_annotations(records: &[AnnotationRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("annotation records serialize"));
        out.push('\n');
    }
    out
}

/// Maps foreign kind names onto schema kinds (e.g. `Category` → `Product Type`).
pub type KindAliases = HashMap<String, String>;

/// Aligns a record's pairs to its query tokens. Returns the tagged query and
/// `(pair index, reason)` for pairs that could not be placed.
pub fn record_to_query(
    record: &AnnotationRecord,
    schema: &Schema,
    aliases: &KindAliases,
) -> Result<(TaggedQuery, Vec<(usize, DropReason)>), CorpusError> {
    let tokens = tokenize(&record.query);
    let mut known: Vec<(usize, KindId, &str)> = Vec::new();
    let mut drops = Vec::new();
    for (i, p) in record.pairs.iter().enumerate() {
        let name = aliases.get(&p.kind).map(String::as_str).unwrap_or(&p.kind);
        match schema.lookup(name).or_else(|| schema.lookup_ci(name)) {
            Some(k) => known.push((i, k, p.value.as_str())),
            None => drops.push((i, DropReason::UnknownKind)),
        }
    }
    let pairs: Vec<(KindId, &str)> = known.iter().map(|&(_, k, v)| (k, v)).collect();
    let alignment = align_values(&tokens, &pairs);
    for (j, reason) in alignment.drops() {
        drops.push((known[j].0, reason));
    }
    drops.sort();
    let query = TaggedQuery::from_spans(tokens, &alignment.spans())?;
    Ok((query, drops))
}
