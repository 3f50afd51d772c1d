use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    clean, complete_with_retry, parse_llm_answer, parse_review, render_pairs, AnnotateError, ChatClient,
    LlmEndpointConfig, PromptTemplate,
};
use crate::corpus::{AnnotationRecord, DropReason, Source};
use crate::schema::Schema;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotateConfig {
    pub endpoint: LlmEndpointConfig,
    /// Ask-and-review attempts per query. A further round runs only when the
    /// previous answer was malformed or failed review.
    pub rounds: usize,
}

impl Default for AnnotateConfig {
    fn default() -> Self {
        AnnotateConfig {
            endpoint: LlmEndpointConfig::default(),
            rounds: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRunReport {
    pub total: usize,
    pub format_valid: usize,
    /// Cleaning drops keyed by reason name.
    pub drops: BTreeMap<String, usize>,
    pub review_pass: usize,
    /// Queries abandoned on an endpoint, transport or replay error.
    pub failures: usize,
}

impl AnnotationRunReport {
    fn pct(n: usize, d: usize) -> f64 {
        if d == 0 {
            0.0
        } else {
            100.0 * n as f64 / d as f64
        }
    }

    /// Share of queries whose answer parsed, in percent.
    pub fn format_valid_rate(&self) -> f64 {
        Self::pct(self.format_valid, self.total)
    }

    /// Share of well-formed answers that passed review, in percent.
    pub fn review_pass_rate(&self) -> f64 {
        Self::pct(self.review_pass, self.format_valid)
    }
}

#[derive(Default)]
struct Outcome {
    format_valid: bool,
    drops: Vec<DropReason>,
    review_pass: bool,
    failed: bool,
}

fn set(record: &mut AnnotationRecord, key: &str, value: impl Into<Value>) {
    record.extra.insert(key.into(), value.into());
}

fn annotate_one(
    query: &str,
    schema: &Schema,
    client: &dyn ChatClient,
    config: &AnnotateConfig,
) -> (AnnotationRecord, Outcome) {
    let ep = &config.endpoint;
    let call = |msgs: &[_]| complete_with_retry(client, msgs, ep.max_retries, ep.backoff_base_secs);
    let mut record = AnnotationRecord::new(query, Vec::new(), Source::Llm);
    let mut out = Outcome::default();
    if query.trim().is_empty() {
        set(&mut record, "error", AnnotateError::EmptyQuery.to_string());
        out.failed = true;
        return (record, out);
    }
    for round in 1..=config.rounds {
        record = AnnotationRecord::new(query, Vec::new(), Source::Llm);
        out = Outcome::default();
        if config.rounds > 1 {
            set(&mut record, "rounds", round);
        }
        let answer = match call(&PromptTemplate::extraction().to_messages(query, "")) {
            Ok(a) => a,
            Err(e) => {
                set(&mut record, "error", e.to_string());
                out.failed = true;
                break;
            }
        };
        record.raw_response = Some(answer.clone());
        let parsed = match parse_llm_answer(&answer, schema) {
            Ok(p) => p,
            Err(e) => {
                set(&mut record, "format_error", e.to_string());
                continue;
            }
        };
        out.format_valid = true;
        let cleaned = clean(query, &parsed, schema);
        out.drops = cleaned.report.iter().filter_map(|c| c.reason).collect();
        record.pairs = cleaned.pairs();
        record.clean_report = Some(cleaned.report);
        if record.pairs.is_empty() {
            break;
        }
        let review = PromptTemplate::review().to_messages(query, &render_pairs(&record.pairs));
        match call(&review) {
            Ok(text) => {
                let verdict = parse_review(&text).unwrap_or_else(|e| {
                    set(&mut record, "review_error", e.to_string());
                    false
                });
                set(&mut record, "review_response", text);
                record.review_verdict = Some(verdict);
                out.review_pass = verdict;
                if verdict {
                    break;
                }
            }
            Err(e) => {
                set(&mut record, "error", e.to_string());
                out.failed = true;
                break;
            }
        }
    }
    (record, out)
}

/// Runs extraction, cleaning and review for every query with at most
/// `max_in_flight` queries outstanding. Records come back in input order
/// and per-query failures are recorded in the record, not returned.
pub fn annotate_corpus(
    queries: &[String],
    schema: &Schema,
    client: &dyn ChatClient,
    config: &AnnotateConfig,
) -> Result<(Vec<AnnotationRecord>, AnnotationRunReport), AnnotateError> {
    config.endpoint.validate()?;
    if config.rounds == 0 {
        return Err(AnnotateError::Config("rounds must be >= 1".into()));
    }
    let next = AtomicUsize::new(0);
    let workers = config.endpoint.max_in_flight.min(queries.len()).max(1);
    let mut results: Vec<(usize, AnnotationRecord, Outcome)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(q) = queries.get(i) else { break };
                        let (rec, out) = annotate_one(q, schema, client, config);
                        done.push((i, rec, out));
                    }
                    done
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("annotation worker panicked"))
            .collect()
    });
    results.sort_by_key(|r| r.0);

    let mut report = AnnotationRunReport {
        total: queries.len(),
        ..Default::default()
    };
    let mut records = Vec::with_capacity(results.len());
    for (_, rec, out) in results {
        report.format_valid += out.format_valid as usize;
        report.review_pass += out.review_pass as usize;
        report.failures += out.failed as usize;
        for r in out.drops {
            *report.drops.entry(r.as_str().to_string()).or_default() += 1;
        }
        records.push(rec);
    }
    Ok((records, report))
}
