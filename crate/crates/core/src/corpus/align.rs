use serde::{Deserialize, Serialize};

use crate::schema::{tokenize, EntitySpan, KindId};

/// Why an attribute pair did not survive alignment or cleaning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DropReason {
    UnknownKind,
    NotInQuery,
    Overlap,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::UnknownKind => "UnknownKind",
            DropReason::NotInQuery => "NotInQuery",
            DropReason::Overlap => "Overlap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AlignOutcome {
    Span(EntitySpan),
    Dropped(DropReason),
}

/// Per-pair outcomes, in input pair order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub outcomes: Vec<AlignOutcome>,
}

impl Alignment {
    /// Aligned spans sorted by start position.
    pub fn spans(&self) -> Vec<EntitySpan> {
        let mut spans: Vec<EntitySpan> = self
            .outcomes
            .iter()
            .filter_map(|o| match o {
                AlignOutcome::Span(s) => Some(s.clone()),
                AlignOutcome::Dropped(_) => None,
            })
            .collect();
        spans.sort_by_key(|s| s.start);
        spans
    }

    /// `(pair index, reason)` for every dropped pair.
    pub fn drops(&self) -> Vec<(usize, DropReason)> {
        self.outcomes
            .iter()
            .enumerate()
            .filter_map(|(i, o)| match o {
                AlignOutcome::Dropped(r) => Some((i, *r)),
                AlignOutcome::Span(_) => None,
            })
            .collect()
    }
}

/// Greedy left-to-right, case-insensitive alignment of attribute values to
/// query tokens. Each pair takes the first occurrence whose tokens are all
/// still unclaimed; a value that only occurs over claimed tokens is an
/// `Overlap`, one that does not occur at all is `NotInQuery`.
pub fn align_values(tokens: &[String], pairs: &[(KindId, &str)]) -> Alignment {
    let lowered: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
    let mut claimed = vec![false; tokens.len()];
    let mut outcomes = Vec::with_capacity(pairs.len());
    for &(kind, value) in pairs {
        let needle: Vec<String> = tokenize(value).iter().map(|t| t.to_lowercase()).collect();
        if needle.is_empty() || needle.len() > tokens.len() {
            outcomes.push(AlignOutcome::Dropped(DropReason::NotInQuery));
            continue;
        }
        let mut seen = false;
        let mut hit = None;
        for start in 0..=tokens.len() - needle.len() {
            let end = start + needle.len();
            if lowered[start..end] != needle[..] {
                continue;
            }
            seen = true;
            if claimed[start..end].iter().all(|c| !c) {
                hit = Some(start);
                break;
            }
        }
        match hit {
            Some(start) => {
                let end = start + needle.len() - 1;
                claimed[start..=end].iter_mut().for_each(|c| *c = true);
                outcomes.push(AlignOutcome::Span(EntitySpan::new(kind, start, end, tokens)));
            }
            None if seen => outcomes.push(AlignOutcome::Dropped(DropReason::Overlap)),
            None => outcomes.push(AlignOutcome::Dropped(DropReason::NotInQuery)),
        }
    }
    Alignment { outcomes }
}
