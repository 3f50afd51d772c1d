use serde_json::Value;

use super::AnnotateError;
use crate::corpus::{align_values, AlignOutcome, CleanEntry, DropReason, Pair};
use crate::schema::{tokenize, EntitySpan, KindId, Schema};

fn fragment(s: &str) -> String {
    const MAX: usize = 80;
    match s.char_indices().nth(MAX) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

/// Reads the first `["Kind: value", ...]` list in `text`.
///
/// Kinds known to `schema` (compared case-insensitively) take their
/// canonical spelling; unknown kinds are kept verbatim for [`clean`] to drop.
/// Whitespace around the first `:` is ignored.
pub fn parse_llm_answer(text: &str, schema: &Schema) -> Result<Vec<Pair>, AnnotateError> {
    let start = text
        .find('[')
        .ok_or_else(|| AnnotateError::Format(format!("no list in {:?}", fragment(text))))?;
    let list = &text[start..];
    let value = serde_json::Deserializer::from_str(list)
        .into_iter::<Value>()
        .next()
        .and_then(Result::ok)
        .ok_or_else(|| AnnotateError::Format(format!("malformed list {:?}", fragment(list))))?;
    let Value::Array(items) = value else {
        unreachable!("text after '[' parses only as an array")
    };
    items
        .iter()
        .map(|item| {
            let s = item
                .as_str()
                .ok_or_else(|| AnnotateError::Format(format!("unquoted item {}", fragment(&item.to_string()))))?;
            let (kind, value) = s
                .split_once(':')
                .ok_or_else(|| AnnotateError::Format(format!("missing ':' in {:?}", fragment(s))))?;
            let (kind, value) = (kind.trim(), value.trim());
            if kind.is_empty() || value.is_empty() {
                return Err(AnnotateError::Format(format!(
                    "empty kind or value in {:?}",
                    fragment(s)
                )));
            }
            let kind = match schema.lookup_ci(kind) {
                Some(id) => schema.name(id).to_string(),
                None => kind.to_string(),
            };
            Ok(Pair::new(kind, value))
        })
        .collect()
}

/// Pairs that survived cleaning, each with its aligned span.
#[derive(Debug, Clone, PartialEq)]
pub struct Cleaned {
    pub kept: Vec<(Pair, EntitySpan)>,
    /// One entry per input pair, in input order.
    pub report: Vec<CleanEntry>,
}

impl Cleaned {
    pub fn pairs(&self) -> Vec<Pair> {
        self.kept.iter().map(|(p, _)| p.clone()).collect()
    }
}

/// Drops pairs whose kind is not in `schema` and pairs that do not align
/// to unclaimed query tokens.
pub fn clean(query: &str, pairs: &[Pair], schema: &Schema) -> Cleaned {
    let tokens = tokenize(query);
    let mut report: Vec<CleanEntry> = pairs
        .iter()
        .map(|p| CleanEntry {
            kind: p.kind.clone(),
            value: p.value.clone(),
            kept: false,
            reason: Some(DropReason::UnknownKind),
        })
        .collect();
    let known: Vec<(usize, KindId)> = pairs
        .iter()
        .enumerate()
        .filter_map(|(i, p)| schema.lookup_ci(&p.kind).map(|k| (i, k)))
        .collect();
    let to_align: Vec<(KindId, &str)> = known.iter().map(|&(i, k)| (k, pairs[i].value.as_str())).collect();
    let alignment = align_values(&tokens, &to_align);
    let mut kept = Vec::new();
    for (&(i, _), outcome) in known.iter().zip(alignment.outcomes) {
        match outcome {
            AlignOutcome::Span(span) => {
                report[i].kept = true;
                report[i].reason = None;
                kept.push((pairs[i].clone(), span));
            }
            AlignOutcome::Dropped(r) => report[i].reason = Some(r),
        }
    }
    Cleaned { kept, report }
}

/// The first standalone `true` or `false`, in any case.
pub fn parse_review(text: &str) -> Result<bool, AnnotateError> {
    for word in text.split(|c: char| !c.is_alphanumeric()) {
        if word.eq_ignore_ascii_case("true") {
            return Ok(true);
        }
        if word.eq_ignore_ascii_case("false") {
            return Ok(false);
        }
    }
    Err(AnnotateError::Format(format!("no verdict in {:?}", fragment(text))))
}
