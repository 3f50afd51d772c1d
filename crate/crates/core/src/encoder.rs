//! Per-token feature templates for the CRF and dense span vectors for the
//! decorative-relation classifier.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::schema::EntitySpan;

pub const BOS: &str = "<BOS>";
pub const EOS: &str = "<EOS>";

#[derive(Debug, Error, PartialEq)]
pub enum EncoderError {
    #[error("cannot encode an empty token sequence")]
    EmptyInput,
    #[error("line {line}: expected {expected} values, found {found}")]
    RaggedDimensions { line: usize, expected: usize, found: usize },
    #[error("line {line}: {value:?} is not a number")]
    NonNumericValue { line: usize, value: String },
    #[error("span {start}..{end} out of bounds for {len} tokens")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },
    #[error("invalid encoder config: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

/// Feature templates that [`encode`] can emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Template {
    /// Lowercased current word.
    Word,
    /// Lowercased words within the window radius.
    Neighbors,
    Prefix,
    Suffix,
    Shape,
    Bias,
}

impl Template {
    pub const ALL: [Template; 6] = [
        Template::Word,
        Template::Neighbors,
        Template::Prefix,
        Template::Suffix,
        Template::Shape,
        Template::Bias,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub templates: BTreeSet<Template>,
    pub window: usize,
    pub affix_cap: usize,
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
    pub hash_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            templates: Template::ALL.into_iter().collect(),
            window: 1,
            affix_cap: 3,
            embeddings: None,
            hash_dim: 64,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        if !(1..=5).contains(&self.affix_cap) {
            return Err(EncoderError::Config(format!(
                "affix cap {} not in 1..=5",
                self.affix_cap
            )));
        }
        if self.hash_dim == 0 {
            return Err(EncoderError::Config("hash dimension must be positive".into()));
        }
        Ok(())
    }
}

/// One active (template, value) feature; all features carry weight 1.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Feature {
    pub template: String,
    pub value: String,
}

impl Feature {
    fn new(template: impl Into<String>, value: impl Into<String>) -> Self {
        Feature {
            template: template.into(),
            value: value.into(),
        }
    }

    /// `template=value`, the key under which the CRF stores weights.
    pub fn key(&self) -> String {
        format!("{}={}", self.template, self.value)
    }
}

/// Sorted, de-duplicated active features of one position.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeatureVector {
    features: Vec<Feature>,
}

impl FeatureVector {
    pub fn from_features(mut features: Vec<Feature>) -> Self {
        features.sort();
        features.dedup();
        FeatureVector { features }
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn contains(&self, template: &str, value: &str) -> bool {
        self.features.iter().any(|f| f.template == template && f.value == value)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Coarse orthographic class of a token.
pub fn shape(token: &str) -> &'static str {
    let mut chars = token.chars();
    let Some(first) = chars.next() else {
        return "other";
    };
    if token.chars().all(|c| c.is_ascii_digit()) {
        "digit"
    } else if token.chars().all(|c| c.is_lowercase()) {
        "lower"
    } else if token.chars().all(|c| c.is_uppercase()) {
        "upper"
    } else if first.is_uppercase() && chars.all(|c| c.is_lowercase()) {
        "capitalized"
    } else if token.chars().any(|c| c.is_alphanumeric()) {
        "mixed"
    } else {
        "other"
    }
}

/// Emits the enabled templates at every position of `tokens`.
pub fn encode(tokens: &[String], config: &EncoderConfig) -> Result<Vec<FeatureVector>, EncoderError> {
    if tokens.is_empty() {
        return Err(EncoderError::EmptyInput);
    }
    let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
    let on = |t: Template| config.templates.contains(&t);
    let n = tokens.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut fs = Vec::new();
        if on(Template::Word) {
            fs.push(Feature::new("w0", lower[i].clone()));
        }
        if on(Template::Neighbors) {
            for d in 1..=config.window {
                let left = if i >= d { lower[i - d].as_str() } else { BOS };
                let right = if i + d < n { lower[i + d].as_str() } else { EOS };
                fs.push(Feature::new(format!("w-{d}"), left));
                fs.push(Feature::new(format!("w+{d}"), right));
            }
        }
        let chars: Vec<char> = lower[i].chars().collect();
        for len in 1..=config.affix_cap.min(chars.len()) {
            if on(Template::Prefix) {
                fs.push(Feature::new(
                    format!("pre{len}"),
                    chars[..len].iter().collect::<String>(),
                ));
            }
            if on(Template::Suffix) {
                fs.push(Feature::new(
                    format!("suf{len}"),
                    chars[chars.len() - len..].iter().collect::<String>(),
                ));
            }
        }
        if on(Template::Shape) {
            fs.push(Feature::new("shape", shape(&tokens[i])));
        }
        if on(Template::Bias) {
            fs.push(Feature::new("bias", "1"));
        }
        out.push(FeatureVector::from_features(fs));
    }
    Ok(out)
}

/// Static token vectors of a fixed dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    /// Dimension of stored vectors; 0 only for an empty table.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Exact lookup, then lowercase.
    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors
            .get(token)
            .or_else(|| self.vectors.get(&token.to_lowercase()))
            .map(Vec::as_slice)
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<(), EncoderError> {
        if vector.is_empty() || (self.dim != 0 && vector.len() != self.dim) {
            return Err(EncoderError::RaggedDimensions {
                line: 0,
                expected: self.dim,
                found: vector.len(),
            });
        }
        self.dim = vector.len();
        self.vectors.insert(token.into(), vector);
        Ok(())
    }

    fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (tok, v) in &self.vectors {
            h.update(tok.as_bytes());
            h.update([0u8]);
            for x in v {
                h.update(x.to_le_bytes());
            }
        }
        hex::encode(&h.finalize()[..8])
    }
}

/// Reads `token v1 ... vd` lines. Later duplicates replace earlier ones.
pub fn load_embeddings<R: BufRead>(input: R) -> Result<EmbeddingTable, EncoderError> {
    let mut table = EmbeddingTable::default();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| EncoderError::Io(e.to_string()))?;
        let lineno = i + 1;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values = fields
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| EncoderError::NonNumericValue {
                        line: lineno,
                        value: v.to_string(),
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if values.is_empty() || (table.dim != 0 && values.len() != table.dim) {
            return Err(EncoderError::RaggedDimensions {
                line: lineno,
                expected: table.dim,
                found: values.len(),
            });
        }
        table.dim = values.len();
        table.vectors.insert(token.to_string(), values);
    }
    Ok(table)
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a; stable across processes and platforms.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Signed feature hashing of the token and its boundary-marked character
/// trigrams, L2-normalized.
pub fn hashed_vector(token: &str, dim: usize) -> Vec<f64> {
    let lower = token.to_lowercase();
    let mut v = vec![0.0; dim];
    let mut add = |feature: &str| {
        let h = fnv1a(feature.as_bytes());
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[(h % dim as u64) as usize] += sign;
    };
    add(&format!("w:{lower}"));
    let marked: Vec<char> = format!("^{lower}$").chars().collect();
    for w in marked.windows(3) {
        add(&format!("c:{}", w.iter().collect::<String>()));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Turns entity spans into fixed-length vectors: mean of token vectors from a
/// loaded table (unknown tokens count as zero), or of hashed vectors when no
/// table is loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanEncoder {
    table: Option<EmbeddingTable>,
    hash_dim: usize,
}

impl SpanEncoder {
    pub fn hashed(hash_dim: usize) -> Self {
        SpanEncoder {
            table: None,
            hash_dim: hash_dim.max(1),
        }
    }

    pub fn with_table(table: EmbeddingTable, hash_dim: usize) -> Self {
        if table.is_empty() {
            return SpanEncoder::hashed(hash_dim);
        }
        SpanEncoder {
            table: Some(table),
            hash_dim: hash_dim.max(1),
        }
    }

    /// Builds the encoder described by `config`, loading its embedding file if set.
    pub fn from_config(config: &EncoderConfig) -> Result<Self, EncoderError> {
        config.validate()?;
        match &config.embeddings {
            None => Ok(SpanEncoder::hashed(config.hash_dim)),
            Some(path) => {
                let f = std::fs::File::open(path).map_err(|e| EncoderError::Io(format!("{}: {e}", path.display())))?;
                let table = load_embeddings(std::io::BufReader::new(f))?;
                Ok(SpanEncoder::with_table(table, config.hash_dim))
            }
        }
    }

    pub fn dim(&self) -> usize {
        match &self.table {
            Some(t) => t.dim(),
            None => self.hash_dim,
        }
    }

    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        match &self.table {
            Some(t) => t.get(token).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.dim()]),
            None => hashed_vector(token, self.hash_dim),
        }
    }

    pub fn embed_span(&self, tokens: &[String], span: &EntitySpan) -> Result<Vec<f64>, EncoderError> {
        if span.start > span.end || span.end >= tokens.len() {
            return Err(EncoderError::SpanOutOfBounds {
                start: span.start,
                end: span.end,
                len: tokens.len(),
            });
        }
        let mut acc = vec![0.0; self.dim()];
        for tok in &tokens[span.start..=span.end] {
            for (a, x) in acc.iter_mut().zip(self.token_vector(tok)) {
                *a += x;
            }
        }
        let n = span.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }

    /// Identifies the vector space, so models trained on one encoder can
    /// refuse another.
    pub fn fingerprint(&self) -> String {
        match &self.table {
            None => format!("hash-fnv1a:dim={}", self.hash_dim),
            Some(t) => format!("table:dim={}:n={}:sha256={}", t.dim(), t.len(), t.digest()),
        }
    }
}
