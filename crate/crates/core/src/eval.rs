//! Entity-level scoring with exact (kind, start, end) matching, plus human
//! satisfaction rates from judgment files.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::schema::{EntitySpan, Schema, TaggedQuery};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{side} spans overlap at token {token}")]
    OverlapWithinSide { side: &'static str, token: usize },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("tagger failed on record {record}: {message}")]
    Tagger { record: usize, message: String },
    #[error("line {line}: {message}")]
    MalformedJudgment { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl std::ops::AddAssign for MatchCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

fn check_disjoint(spans: &[EntitySpan], side: &'static str) -> Result<(), EvalError> {
    let mut sorted: Vec<&EntitySpan> = spans.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end));
    for w in sorted.windows(2) {
        if w[1].start <= w[0].end {
            return Err(EvalError::OverlapWithinSide {
                side,
                token: w[1].start,
            });
        }
    }
    Ok(())
}

fn key(s: &EntitySpan) -> (u16, usize, usize) {
    (s.kind.0, s.start, s.end)
}

/// Counts exact matches between two span sets of one query.
pub fn match_entities(gold: &[EntitySpan], predicted: &[EntitySpan]) -> Result<MatchCounts, EvalError> {
    check_disjoint(gold, "gold")?;
    check_disjoint(predicted, "predicted")?;
    let g: HashSet<_> = gold.iter().map(key).collect();
    let tp = predicted.iter().filter(|p| g.contains(&key(p))).count();
    Ok(MatchCounts {
        tp,
        fp: predicted.len() - tp,
        fn_: gold.len() - tp,
    })
}

/// Precision, recall and F-score; any zero denominator yields 0.
pub fn prf(c: MatchCounts) -> (f64, f64, f64) {
    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    let p = ratio(c.tp, c.tp + c.fp);
    let r = ratio(c.tp, c.tp + c.fn_);
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub name: String,
    #[serde(flatten)]
    pub counts: MatchCounts,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

impl ScoreRow {
    fn new(name: impl Into<String>, counts: MatchCounts) -> Self {
        let (precision, recall, f_score) = prf(counts);
        ScoreRow {
            name: name.into(),
            counts,
            precision,
            recall,
            f_score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroScores {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    /// Kinds with at least one gold or predicted span.
    pub kinds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: usize,
    /// One row per schema kind, in schema order.
    pub per_kind: Vec<ScoreRow>,
    /// Micro-averaged over all kinds.
    pub overall: ScoreRow,
    #[serde(rename = "macro")]
    pub macro_avg: MacroScores,
    /// Counts for each record, in corpus order.
    pub per_record: Vec<MatchCounts>,
    /// Free-form description of the run that produced the report.
    pub config: Map<String, Value>,
}

pub const ZERO_DIVISION_NOTE: &str = "Zero denominators are reported as 0.";

impl EvalReport {
    /// Aligned table with P/R/F columns; kind rows only with `per_kind`,
    /// the macro row only with `with_macro`.
    pub fn to_table(&self, per_kind: bool, with_macro: bool) -> String {
        let mut rows: Vec<&ScoreRow> = Vec::new();
        if per_kind {
            rows.extend(&self.per_kind);
        }
        rows.push(&self.overall);
        let width = rows.iter().map(|r| r.name.len()).chain([7]).max().unwrap_or(7);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>6} {:>6} {:>6}  {:>9} {:>9} {:>9}",
            "kind", "tp", "fp", "fn", "precision", "recall", "f-score"
        );
        for r in rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>6} {:>6} {:>6}  {:>9.4} {:>9.4} {:>9.4}",
                r.name, r.counts.tp, r.counts.fp, r.counts.fn_, r.precision, r.recall, r.f_score
            );
        }
        if with_macro {
            let m = &self.macro_avg;
            let _ = writeln!(
                out,
                "{:<width$}  {:>6} {:>6} {:>6}  {:>9.4} {:>9.4} {:>9.4}",
                "macro", "", "", "", m.precision, m.recall, m.f_score
            );
        }
        let _ = writeln!(out, "records: {}. {}", self.records, ZERO_DIVISION_NOTE);
        out
    }
}

/// Tags every gold query's tokens with `tagger` and scores the predictions.
pub fn evaluate<F, E>(gold: &[TaggedQuery], schema: &Schema, mut tagger: F) -> Result<EvalReport, EvalError>
where
    F: FnMut(&[String]) -> Result<Vec<EntitySpan>, E>,
    E: std::fmt::Display,
{
    let mut per_kind = vec![MatchCounts::default(); schema.len()];
    let mut per_record = Vec::with_capacity(gold.len());
    for (i, q) in gold.iter().enumerate() {
        let g = q.spans();
        let p = tagger(q.tokens()).map_err(|e| EvalError::Tagger {
            record: i,
            message: e.to_string(),
        })?;
        for s in g.iter().chain(&p) {
            if s.kind.index() >= schema.len() {
                return Err(EvalError::SchemaMismatch(format!(
                    "kind id {} outside a schema of {} kinds (record {i})",
                    s.kind.0,
                    schema.len()
                )));
            }
            if s.end >= q.len() {
                return Err(EvalError::SchemaMismatch(format!(
                    "span {s} past the end of record {i}"
                )));
            }
        }
        per_record.push(match_entities(&g, &p)?);
        for id in schema.ids() {
            let gk: Vec<EntitySpan> = g.iter().filter(|s| s.kind == id).cloned().collect();
            let pk: Vec<EntitySpan> = p.iter().filter(|s| s.kind == id).cloned().collect();
            per_kind[id.index()] += match_entities(&gk, &pk)?;
        }
    }
    let mut total = MatchCounts::default();
    for c in &per_kind {
        total += *c;
    }
    let rows: Vec<ScoreRow> = schema
        .ids()
        .map(|id| ScoreRow::new(schema.name(id), per_kind[id.index()]))
        .collect();
    let active: Vec<&ScoreRow> = rows
        .iter()
        .filter(|r| r.counts.tp + r.counts.fp + r.counts.fn_ > 0)
        .collect();
    let mean = |f: fn(&ScoreRow) -> f64| {
        if active.is_empty() {
            0.0
        } else {
            active.iter().map(|r| f(r)).sum::<f64>() / active.len() as f64
        }
    };
    let macro_avg = MacroScores {
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        f_score: mean(|r| r.f_score),
        kinds: active.len(),
    };
    Ok(EvalReport {
        records: gold.len(),
        per_kind: rows,
        overall: ScoreRow::new("overall", total),
        macro_avg,
        per_record,
        config: Map::new(),
    })
}

/// A human yes/no verdict on one annotated attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub query: String,
    pub kind: String,
    pub value: String,
    pub satisfied: bool,
}

/// Reads JSON Lines of judgments, rejecting kinds outside `schema` if given.
pub fn read_judgments<R: BufRead>(input: R, schema: Option<&Schema>) -> Result<Vec<JudgmentRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let j: JudgmentRecord = serde_json::from_str(&line).map_err(|e| EvalError::MalformedJudgment {
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(s) = schema {
            if s.lookup(&j.kind).is_none() {
                return Err(EvalError::MalformedJudgment {
                    line: i + 1,
                    message: format!("unknown kind {:?}", j.kind),
                });
            }
        }
        out.push(j);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsrRow {
    pub satisfied: usize,
    pub total: usize,
    /// Percentage rounded to one decimal.
    pub rate: f64,
}

impl HsrRow {
    fn new(satisfied: usize, total: usize) -> Self {
        HsrRow {
            satisfied,
            total,
            rate: (1000.0 * satisfied as f64 / total as f64).round() / 10.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HsrReport {
    /// Only kinds with at least one judgment appear.
    pub per_kind: BTreeMap<String, HsrRow>,
    pub overall: Option<HsrRow>,
}

impl HsrReport {
    pub fn to_table(&self) -> String {
        let width = self.per_kind.keys().map(String::len).chain([7]).max().unwrap_or(7);
        let mut out = format!("{:<width$}  {:>6}  {:>6}\n", "kind", "HSR", "n");
        let rows = self
            .per_kind
            .iter()
            .map(|(k, r)| (k.as_str(), r))
            .chain(self.overall.iter().map(|r| ("overall", r)));
        for (k, r) in rows {
            let _ = writeln!(out, "{k:<width$}  {:>6.1}  {:>6}", r.rate, r.total);
        }
        out
    }
}

/// Human satisfaction rate per kind and overall.
pub fn hsr(judgments: &[JudgmentRecord]) -> HsrReport {
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for j in judgments {
        let c = counts.entry(j.kind.clone()).or_default();
        c.0 += j.satisfied as usize;
        c.1 += 1;
    }
    let (s, t) = counts.values().fold((0, 0), |a, c| (a.0 + c.0, a.1 + c.1));
    HsrReport {
        per_kind: counts.into_iter().map(|(k, (s, t))| (k, HsrRow::new(s, t))).collect(),
        overall: (t > 0).then(|| HsrRow::new(s, t)),
    }
}
