//! Linear-chain CRF over sparse feature templates.
//!
//! A tag sequence `y` for an observation `x` scores
//! `start[y0] + Σ_i emit(x_i, y_i) + Σ_i trans[y_{i-1}, y_i] + end[y_{n-1}]`,
//! where `emit` sums the weights of the features active at position `i`.
//! Probabilities are `exp(score - log Z)` with `Z` summed over every tag
//! sequence, including IOB2-invalid ones.

mod lattice;
mod train;

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{encode, EncoderConfig, EncoderError, FeatureVector};
use crate::schema::{repair_iob2, spans_from_tags, EntitySpan, Schema, TagLabel};
use lattice::Lattice;

pub use crate::optim::Optimizer;
pub use train::{nll_and_gradient, train, TrainConfig};

const MODEL_FORMAT: &str = "attrex-crf";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CrfError {
    #[error("empty input sequence")]
    EmptyInput,
    #[error("features and tags differ in length ({features} vs {tags})")]
    LengthMismatch { features: usize, tags: usize },
    #[error("tag index {0} is outside the model's alphabet")]
    UnknownTag(usize),
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("model weights became non-finite")]
    NonFinite,
    #[error("model schema does not match the expected schema")]
    SchemaMismatch,
    #[error("malformed model file: {0}")]
    Format(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Feature ids active at each position, resolved against one model.
/// Features the model has never seen are dropped (weight 0).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    positions: Vec<Vec<usize>>,
}

impl Observation {
    pub fn new(positions: Vec<Vec<usize>>) -> Self {
        Observation { positions }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vec<usize>] {
        &self.positions
    }
}

/// One decoded tag sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tags: Vec<TagLabel>,
    /// Unnormalized score.
    pub log_score: f64,
    /// `exp(log_score - log Z)`.
    pub posterior: f64,
    /// 1-based position in k-best order.
    pub rank: usize,
}

impl Hypothesis {
    /// Entity spans, with orphan `I-` tags read as `B-`.
    pub fn spans(&self, tokens: &[String]) -> Vec<EntitySpan> {
        let mut tags = self.tags.clone();
        repair_iob2(&mut tags);
        spans_from_tags(tokens, &tags).expect("repaired tags are valid")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs_run: usize,
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
}

/// Weights are stored in one flat vector:
/// `[emission F×T | transition T×T | start T | end T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    schema: Schema,
    features: Vec<String>,
    index: HashMap<String, usize>,
    weights: Vec<f64>,
    encoder: EncoderConfig,
    train_config: Option<TrainConfig>,
    meta: TrainingMeta,
}

impl CrfModel {
    /// All-zero model over `schema` with the given feature keys.
    pub fn new(schema: Schema, features: Vec<String>, encoder: EncoderConfig) -> Self {
        let index = features.iter().enumerate().map(|(i, f)| (f.clone(), i)).collect();
        let t = schema.tag_count();
        let weights = vec![0.0; features.len() * t + t * t + 2 * t];
        CrfModel {
            schema,
            features,
            index,
            weights,
            encoder,
            train_config: None,
            meta: TrainingMeta::default(),
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn encoder_config(&self) -> &EncoderConfig {
        &self.encoder
    }

    pub fn train_config(&self) -> Option<&TrainConfig> {
        self.train_config.as_ref()
    }

    pub fn meta(&self) -> &TrainingMeta {
        &self.meta
    }

    pub fn tag_count(&self) -> usize {
        self.schema.tag_count()
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn feature_id(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn emission_offset(&self, feature: usize, tag: usize) -> usize {
        feature * self.tag_count() + tag
    }

    pub fn transition_offset(&self, from: usize, to: usize) -> usize {
        let t = self.tag_count();
        self.features.len() * t + from * t + to
    }

    pub fn start_offset(&self, tag: usize) -> usize {
        let t = self.tag_count();
        self.features.len() * t + t * t + tag
    }

    pub fn end_offset(&self, tag: usize) -> usize {
        let t = self.tag_count();
        self.features.len() * t + t * t + t + tag
    }

    pub fn set_emission(&mut self, feature_key: &str, tag: TagLabel, w: f64) {
        let f = self.index[feature_key];
        let o = self.emission_offset(f, tag.index());
        self.weights[o] = w;
    }

    pub fn set_transition(&mut self, from: TagLabel, to: TagLabel, w: f64) {
        let o = self.transition_offset(from.index(), to.index());
        self.weights[o] = w;
    }

    pub fn set_start(&mut self, tag: TagLabel, w: f64) {
        let o = self.start_offset(tag.index());
        self.weights[o] = w;
    }

    pub fn set_end(&mut self, tag: TagLabel, w: f64) {
        let o = self.end_offset(tag.index());
        self.weights[o] = w;
    }

    fn params(&self) -> (&[f64], &[f64], &[f64]) {
        let t = self.tag_count();
        let base = self.features.len() * t;
        (
            &self.weights[base..base + t * t],
            &self.weights[base + t * t..base + t * t + t],
            &self.weights[base + t * t + t..],
        )
    }

    /// Resolves feature vectors to ids, dropping unknown features.
    pub fn observe(&self, features: &[FeatureVector]) -> Observation {
        Observation {
            positions: features
                .iter()
                .map(|fv| fv.features().iter().filter_map(|f| self.feature_id(&f.key())).collect())
                .collect(),
        }
    }

    /// Encodes tokens with the model's encoder config and resolves them.
    pub fn observe_tokens(&self, tokens: &[String]) -> Result<Observation, CrfError> {
        Ok(self.observe(&encode(tokens, &self.encoder)?))
    }

    fn emissions(&self, obs: &Observation) -> Vec<f64> {
        let t_n = self.tag_count();
        let mut em = vec![0.0; obs.len() * t_n];
        for (i, feats) in obs.positions.iter().enumerate() {
            let row = &mut em[i * t_n..(i + 1) * t_n];
            for &f in feats {
                let w = &self.weights[f * t_n..(f + 1) * t_n];
                for (r, x) in row.iter_mut().zip(w) {
                    *r += x;
                }
            }
        }
        em
    }

    fn with_lattice<R>(&self, obs: &Observation, f: impl FnOnce(&Lattice<'_>) -> R) -> Result<R, CrfError> {
        if obs.is_empty() {
            return Err(CrfError::EmptyInput);
        }
        let em = self.emissions(obs);
        let (transition, start, end) = self.params();
        let lat = Lattice {
            n: obs.len(),
            tags: self.tag_count(),
            emission: &em,
            transition,
            start,
            end,
        };
        Ok(f(&lat))
    }

    fn check_tags(&self, obs: &Observation, tags: &[TagLabel]) -> Result<Vec<usize>, CrfError> {
        if obs.len() != tags.len() {
            return Err(CrfError::LengthMismatch {
                features: obs.len(),
                tags: tags.len(),
            });
        }
        tags.iter()
            .map(|t| {
                let i = t.index();
                if i < self.tag_count() {
                    Ok(i)
                } else {
                    Err(CrfError::UnknownTag(i))
                }
            })
            .collect()
    }

    /// Unnormalized log score of `tags`.
    pub fn score_sequence(&self, obs: &Observation, tags: &[TagLabel]) -> Result<f64, CrfError> {
        let path = self.check_tags(obs, tags)?;
        self.with_lattice(obs, |lat| lat.path_score(&path))
    }

    /// `log Z` by the forward algorithm.
    pub fn log_partition(&self, obs: &Observation) -> Result<f64, CrfError> {
        self.with_lattice(obs, |lat| lat.log_partition())
    }

    /// Per-position tag marginals `p[i][t]`.
    pub fn marginals(&self, obs: &Observation) -> Result<Vec<Vec<f64>>, CrfError> {
        self.with_lattice(obs, |lat| {
            let alpha = lat.forward();
            let beta = lat.backward();
            let log_z = lat.log_partition_from(&alpha);
            (0..lat.n)
                .map(|i| {
                    (0..lat.tags)
                        .map(|t| (alpha[i * lat.tags + t] + beta[i * lat.tags + t] - log_z).exp())
                        .collect()
                })
                .collect()
        })
    }

    /// Exact 1-best (Viterbi) decode.
    pub fn decode(&self, obs: &Observation) -> Result<Hypothesis, CrfError> {
        Ok(self.decode_k(obs, 1)?.remove(0))
    }

    /// Exact top-`k` distinct tag sequences, best first. Ties go to the
    /// lexicographically smallest tag-index sequence.
    pub fn decode_k(&self, obs: &Observation, k: usize) -> Result<Vec<Hypothesis>, CrfError> {
        let k = k.max(1);
        self.with_lattice(obs, |lat| {
            let log_z = lat.log_partition();
            lat.kbest(k)
                .into_iter()
                .enumerate()
                .map(|(r, (path, score))| Hypothesis {
                    tags: path.into_iter().map(TagLabel::from_index).collect(),
                    log_score: score,
                    posterior: (score - log_z).exp(),
                    rank: r + 1,
                })
                .collect()
        })
    }

    /// Independent per-position argmax of emission scores (transitions
    /// ignored), followed by IOB2 repair.
    pub fn decode_softmax(&self, obs: &Observation) -> Result<Hypothesis, CrfError> {
        self.with_lattice(obs, |lat| {
            let mut tags: Vec<TagLabel> = (0..lat.n)
                .map(|i| {
                    let row = &lat.emission[i * lat.tags..(i + 1) * lat.tags];
                    let mut best = 0;
                    for (t, &v) in row.iter().enumerate() {
                        if v > row[best] {
                            best = t;
                        }
                    }
                    TagLabel::from_index(best)
                })
                .collect();
            repair_iob2(&mut tags);
            let path: Vec<usize> = tags.iter().map(|t| t.index()).collect();
            let score = lat.path_score(&path);
            Hypothesis {
                tags,
                log_score: score,
                posterior: (score - lat.log_partition()).exp(),
                rank: 1,
            }
        })
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    pub fn save<W: Write>(&self, mut out: W) -> Result<(), CrfError> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            schema: self.schema.clone(),
            encoder: self.encoder.clone(),
            train: self.train_config.clone(),
            meta: self.meta.clone(),
            features: self.features.clone(),
            weights: self.weights.clone(),
        };
        serde_json::to_writer(&mut out, &file).map_err(|e| CrfError::Format(e.to_string()))?;
        out.write_all(b"\n")?;
        Ok(())
    }

    /// Loads a model; with `expected` set, rejects a model trained on a different schema.
    pub fn load<R: Read>(input: R, expected: Option<&Schema>) -> Result<Self, CrfError> {
        let file: ModelFile = serde_json::from_reader(input).map_err(|e| CrfError::Format(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(CrfError::Format(format!(
                "unsupported container {} v{}",
                file.format, file.version
            )));
        }
        if let Some(s) = expected {
            if *s != file.schema {
                return Err(CrfError::SchemaMismatch);
            }
        }
        let mut model = CrfModel::new(file.schema, file.features, file.encoder);
        if model.weights.len() != file.weights.len() {
            return Err(CrfError::Format(format!(
                "expected {} weights, found {}",
                model.weights.len(),
                file.weights.len()
            )));
        }
        model.weights = file.weights;
        if !model.all_finite() {
            return Err(CrfError::NonFinite);
        }
        model.train_config = file.train;
        model.meta = file.meta;
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    schema: Schema,
    encoder: EncoderConfig,
    train: Option<TrainConfig>,
    meta: TrainingMeta,
    features: Vec<String>,
    weights: Vec<f64>,
}
