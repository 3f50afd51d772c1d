use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, DrcError, DrcModel, PairDataset, PairExample};
use crate::optim::{Optimizer, Stepper};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrcConfig {
    /// Hidden layer widths; empty gives logistic regression.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub l2: f64,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for DrcConfig {
    fn default() -> Self {
        DrcConfig {
            hidden: vec![64],
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.01,
            optimizer: Optimizer::Adam,
            l2: 0.0,
            threshold: 0.5,
            seed: 0,
        }
    }
}

impl DrcConfig {
    pub fn validate(&self) -> Result<(), DrcError> {
        let bad = |m: &str| Err(DrcError::Config(m.into()));
        if self.hidden.contains(&0) {
            return bad("hidden layers must have at least one unit");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch size must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be > 0");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be >= 0");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Mean binary cross-entropy over `batch` plus `l2/2 ‖θ‖²`, with its
/// gradient laid out like [`DrcModel::params`].
pub fn bce_and_gradient(model: &DrcModel, batch: &[PairExample], l2: f64) -> Result<(f64, Vec<f64>), DrcError> {
    let mut grad = vec![0.0; model.params.len()];
    let mut loss = 0.0;
    let layers = model.layer_count();
    for ex in batch {
        model.check(&ex.attr)?;
        model.check(&ex.ptype)?;
        let x: Vec<f64> = ex.attr.iter().chain(&ex.ptype).copied().collect();
        let pre = model.forward(&x);
        let z = pre[layers - 1][0];
        let y = if ex.label { 1.0 } else { 0.0 };
        loss += z.max(0.0) - y * z + (-z.abs()).exp().ln_1p();

        let mut delta = vec![sigmoid(z) - y];
        for l in (0..layers).rev() {
            let (n_in, n_out) = (model.sizes[l], model.sizes[l + 1]);
            let off = model.layer_offset(l);
            let input: Vec<f64> = if l == 0 {
                x.clone()
            } else {
                pre[l - 1].iter().map(|v| v.max(0.0)).collect()
            };
            for o in 0..n_out {
                let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                for (g, a) in row.iter_mut().zip(&input) {
                    *g += delta[o] * a;
                }
                grad[off + n_out * n_in + o] += delta[o];
            }
            if l > 0 {
                let w = &model.params[off..off + n_out * n_in];
                delta = (0..n_in)
                    .map(|i| {
                        if pre[l - 1][i] > 0.0 {
                            (0..n_out).map(|o| w[o * n_in + i] * delta[o]).sum()
                        } else {
                            0.0
                        }
                    })
                    .collect();
            }
        }
    }
    let n = batch.len().max(1) as f64;
    loss /= n;
    for (g, w) in grad.iter_mut().zip(&model.params) {
        *g = *g / n + l2 * w;
    }
    loss += 0.5 * l2 * model.params.iter().map(|w| w * w).sum::<f64>();
    Ok((loss, grad))
}

/// Mini-batch training of a fresh network on `data`.
///
/// Weights start uniform in `±1/√fan_in` and biases at zero, all drawn
/// from `config.seed`, so equal inputs give identical models.
pub fn train_drc(data: &PairDataset, config: &DrcConfig) -> Result<DrcModel, DrcError> {
    config.validate()?;
    let examples = &data.examples;
    let positives = examples.iter().filter(|e| e.label).count();
    if positives == 0 || positives == examples.len() {
        return Err(DrcError::DegenerateLabels);
    }
    let dim = examples[0].attr.len();
    let mut model = DrcModel::zeros(dim, &config.hidden, config.threshold, data.fingerprint.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for l in 0..model.layer_count() {
        let (n_in, n_out) = (model.sizes[l], model.sizes[l + 1]);
        let bound = 1.0 / (n_in as f64).sqrt();
        let off = model.layer_offset(l);
        for w in &mut model.params[off..off + n_out * n_in] {
            *w = rng.random_range(-bound..=bound);
        }
    }

    let mut stepper = Stepper::new(config.optimizer, config.learning_rate, model.params.len());
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut batch = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| examples[i].clone()));
            let (loss, grad) = bce_and_gradient(&model, &batch, config.l2)?;
            epoch_loss += loss * chunk.len() as f64;
            stepper.apply(&mut model.params, &grad);
        }
        epoch_loss /= examples.len() as f64;
        if !model.all_finite() || !epoch_loss.is_finite() {
            return Err(DrcError::NonFinite);
        }
        log::info!("drc epoch {}/{}: loss {:.4}", epoch + 1, config.epochs, epoch_loss);
        model.epoch_losses.push(epoch_loss);
    }
    model.train_config = Some(config.clone());
    Ok(model)
}
