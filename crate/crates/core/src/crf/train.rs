use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CrfError, CrfModel, Observation};
use crate::encoder::{encode, EncoderConfig};
use crate::optim::{Optimizer, Stepper};
use crate::schema::{Schema, TagLabel, TaggedQuery};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 32,
            learning_rate: 0.1,
            l2: 1e-4,
            optimizer: Optimizer::Adam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CrfError> {
        if self.epochs == 0 {
            return Err(CrfError::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(CrfError::Config("batch size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(CrfError::Config("learning rate must be > 0".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(CrfError::Config("l2 must be >= 0".into()));
        }
        Ok(())
    }
}

/// Negative log-likelihood of `batch` plus `l2/2 ‖θ‖²`, and its gradient
/// (expected minus empirical feature counts plus `l2 θ`) laid out like
/// [`CrfModel::weights`].
pub fn nll_and_gradient(
    model: &CrfModel,
    batch: &[(Observation, Vec<TagLabel>)],
    l2: f64,
) -> Result<(f64, Vec<f64>), CrfError> {
    let t_n = model.tag_count();
    let mut grad: Vec<f64> = model.weights.iter().map(|w| l2 * w).collect();
    let mut loss = 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>();
    let trans_base = model.transition_offset(0, 0);
    let start_base = model.start_offset(0);
    let end_base = model.end_offset(0);
    for (obs, tags) in batch {
        let gold = model.check_tags(obs, tags)?;
        let (log_z, gold_score, unary, pairwise) = model.with_lattice(obs, |lat| {
            let alpha = lat.forward();
            let beta = lat.backward();
            let log_z = lat.log_partition_from(&alpha);
            let unary: Vec<f64> = (0..lat.n * t_n).map(|j| (alpha[j] + beta[j] - log_z).exp()).collect();
            let mut pairwise = vec![0.0; t_n * t_n];
            for i in 1..lat.n {
                for s in 0..t_n {
                    let a = alpha[(i - 1) * t_n + s];
                    for t in 0..t_n {
                        let lp =
                            a + lat.transition[s * t_n + t] + lat.emission[i * t_n + t] + beta[i * t_n + t] - log_z;
                        pairwise[s * t_n + t] += lp.exp();
                    }
                }
            }
            (log_z, lat.path_score(&gold), unary, pairwise)
        })?;
        loss += log_z - gold_score;

        for (i, feats) in obs.positions().iter().enumerate() {
            let p = &unary[i * t_n..(i + 1) * t_n];
            for &f in feats {
                let g = &mut grad[f * t_n..(f + 1) * t_n];
                for (gt, pt) in g.iter_mut().zip(p) {
                    *gt += pt;
                }
                g[gold[i]] -= 1.0;
            }
        }
        for (j, p) in pairwise.iter().enumerate() {
            grad[trans_base + j] += p;
        }
        for w in gold.windows(2) {
            grad[trans_base + w[0] * t_n + w[1]] -= 1.0;
        }
        let last = obs.len() - 1;
        for t in 0..t_n {
            grad[start_base + t] += unary[t];
            grad[end_base + t] += unary[last * t_n + t];
        }
        grad[start_base + gold[0]] -= 1.0;
        grad[end_base + gold[last]] -= 1.0;
    }
    Ok((loss, grad))
}

/// Collects feature keys in first-seen corpus order.
fn feature_index(corpus: &[Vec<crate::encoder::FeatureVector>]) -> Vec<String> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut keys = Vec::new();
    for sent in corpus {
        for fv in sent {
            for f in fv.features() {
                let k = f.key();
                if !seen.contains_key(&k) {
                    seen.insert(k.clone(), keys.len());
                    keys.push(k);
                }
            }
        }
    }
    keys
}

/// Mini-batch maximum-likelihood training from a zero model.
///
/// Batches are drawn from a seeded shuffle per epoch and processed in a
/// single thread, so identical inputs give bitwise-identical models.
pub fn train(
    corpus: &[TaggedQuery],
    schema: &Schema,
    encoder: &EncoderConfig,
    cfg: &TrainConfig,
) -> Result<CrfModel, CrfError> {
    cfg.validate()?;
    encoder.validate()?;
    let corpus: Vec<&TaggedQuery> = corpus.iter().filter(|q| !q.is_empty()).collect();
    if corpus.is_empty() {
        return Err(CrfError::EmptyCorpus);
    }
    let encoded = corpus
        .iter()
        .map(|q| encode(q.tokens(), encoder))
        .collect::<Result<Vec<_>, _>>()?;
    let mut model = CrfModel::new(schema.clone(), feature_index(&encoded), encoder.clone());
    let data: Vec<(Observation, Vec<TagLabel>)> = encoded
        .iter()
        .zip(&corpus)
        .map(|(fv, q)| (model.observe(fv), q.tags().to_vec()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stepper = Stepper::new(cfg.optimizer, cfg.learning_rate, model.weights.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i].clone()));
            let (loss, grad) = nll_and_gradient(&model, &batch, cfg.l2)?;
            epoch_loss += loss;
            stepper.apply(&mut model.weights, &grad);
        }
        if !model.all_finite() || !epoch_loss.is_finite() {
            return Err(CrfError::NonFinite);
        }
        log::info!("crf epoch {}/{}: loss {:.4}", epoch + 1, cfg.epochs, epoch_loss);
        model.meta.epoch_losses.push(epoch_loss);
    }
    let (final_loss, _) = nll_and_gradient(&model, &data, cfg.l2)?;
    model.meta.epochs_run = cfg.epochs;
    model.meta.final_loss = final_loss;
    model.train_config = Some(cfg.clone());
    Ok(model)
}
