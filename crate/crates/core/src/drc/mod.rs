//! Decorative relation correction: a small feed-forward classifier judges
//! whether an attribute span modifies a product-type span, and the top CRF
//! hypotheses are reranked by how many such relations they contain.

mod pairs;
mod rerank;
mod train;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{EncoderError, SpanEncoder};

pub use pairs::{build_pair_dataset, PairDataset, PairExample, PairSource};
pub use rerank::{
    hypothesis_pair_score, rerank, DrcJudge, GoldPairJudge, HypothesisScore, PairJudge, PairVerdict, RerankDecision,
    RERANK_DEPTH,
};
pub use train::{bce_and_gradient, train_drc, DrcConfig};

const MODEL_FORMAT: &str = "attrex-drc";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DrcError {
    #[error("vector length {found} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("corpus contains no product-type spans")]
    NoProductTypes,
    #[error("training pairs need at least one example of each label")]
    DegenerateLabels,
    #[error("no hypotheses to rerank")]
    EmptyHypotheses,
    #[error("model was trained for encoder {model}, got {encoder}")]
    EncoderMismatch { model: String, encoder: String },
    #[error("invalid DRC config: {0}")]
    Config(String),
    #[error("model weights became non-finite")]
    NonFinite,
    #[error("malformed model file: {0}")]
    Format(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Input `2·d` → ReLU hidden layers → one sigmoid unit.
///
/// Parameters live in one flat vector, layer after layer, each as a
/// row-major `out × in` weight matrix followed by its `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrcModel {
    dim: usize,
    sizes: Vec<usize>,
    params: Vec<f64>,
    threshold: f64,
    fingerprint: String,
    #[serde(default)]
    train_config: Option<DrcConfig>,
    #[serde(default)]
    epoch_losses: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: DrcModel,
}

fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

impl DrcModel {
    /// All-zero network for span vectors of length `dim`.
    pub fn zeros(dim: usize, hidden: &[usize], threshold: f64, fingerprint: impl Into<String>) -> Self {
        let mut sizes = vec![2 * dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let n = sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        DrcModel {
            dim,
            sizes,
            params: vec![0.0; n],
            threshold,
            fingerprint: fingerprint.into(),
            train_config: None,
            epoch_losses: Vec::new(),
        }
    }

    /// Span vector length `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Unit counts from input to output.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn set_threshold(&mut self, threshold: f64) {
        self.threshold = threshold;
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn train_config(&self) -> Option<&DrcConfig> {
        self.train_config.as_ref()
    }

    pub fn epoch_losses(&self) -> &[f64] {
        &self.epoch_losses
    }

    /// Offset of layer `l`'s weight matrix; its biases follow at
    /// `+ sizes[l+1] * sizes[l]`.
    pub fn layer_offset(&self, l: usize) -> usize {
        self.sizes.windows(2).take(l).map(|w| w[1] * (w[0] + 1)).sum()
    }

    pub fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Pre-activations of every layer; the last entry holds the output logit.
    fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut pre = Vec::with_capacity(self.layer_count());
        let mut act = x.to_vec();
        for l in 0..self.layer_count() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.layer_offset(l);
            let w = &self.params[off..off + n_out * n_in];
            let b = &self.params[off + n_out * n_in..off + n_out * (n_in + 1)];
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    b[o] + w[o * n_in..(o + 1) * n_in]
                        .iter()
                        .zip(&act)
                        .map(|(a, c)| a * c)
                        .sum::<f64>()
                })
                .collect();
            act = z.iter().map(|v| v.max(0.0)).collect();
            pre.push(z);
        }
        pre
    }

    fn logit(&self, x: &[f64]) -> f64 {
        self.forward(x).last().expect("at least one layer")[0]
    }

    fn check(&self, v: &[f64]) -> Result<(), DrcError> {
        if v.len() != self.dim {
            return Err(DrcError::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        Ok(())
    }

    /// Fails unless `encoder` produces vectors this model was trained on.
    pub fn check_encoder(&self, encoder: &SpanEncoder) -> Result<(), DrcError> {
        let fp = encoder.fingerprint();
        if fp != self.fingerprint || encoder.dim() != self.dim {
            return Err(DrcError::EncoderMismatch {
                model: self.fingerprint.clone(),
                encoder: fp,
            });
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|w| w.is_finite())
    }

    pub fn save<W: Write>(&self, mut out: W) -> Result<(), DrcError> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        serde_json::to_writer_pretty(&mut out, &file).map_err(|e| DrcError::Format(e.to_string()))?;
        out.write_all(b"\n")?;
        Ok(())
    }

    /// Reads a model file, checking its shape and, when given, that it was
    /// trained on `encoder`'s vector space.
    pub fn load<R: Read>(input: R, encoder: Option<&SpanEncoder>) -> Result<Self, DrcError> {
        let file: ModelFile = serde_json::from_reader(input).map_err(|e| DrcError::Format(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(DrcError::Format(format!(
                "unsupported format {} v{}",
                file.format, file.version
            )));
        }
        let m = file.model;
        let shape_ok = m.sizes.len() >= 2
            && m.sizes[0] == 2 * m.dim
            && m.sizes.last() == Some(&1)
            && m.sizes.iter().all(|&s| s > 0)
            && m.params.len() == m.sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum::<usize>();
        if !shape_ok {
            return Err(DrcError::Format("layer sizes do not match parameters".into()));
        }
        if let Some(enc) = encoder {
            m.check_encoder(enc)?;
        }
        Ok(m)
    }
}

/// `σ(f([e_attr, e_ptype]))` for the model's network `f`.
pub fn drc_score(e_attr: &[f64], e_ptype: &[f64], model: &DrcModel) -> Result<f64, DrcError> {
    model.check(e_attr)?;
    model.check(e_ptype)?;
    let x: Vec<f64> = e_attr.iter().chain(e_ptype).copied().collect();
    Ok(sigmoid(model.logit(&x)))
}

#[cfg(test)]
mod tests;
