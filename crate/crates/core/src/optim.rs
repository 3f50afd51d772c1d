//! First-order update rules shared by the CRF and DRC trainers.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

pub(crate) struct Stepper {
    kind: Optimizer,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Stepper {
    pub fn new(kind: Optimizer, lr: f64, len: usize) -> Self {
        let (m, v) = match kind {
            Optimizer::Sgd => (Vec::new(), Vec::new()),
            Optimizer::Adam => (vec![0.0; len], vec![0.0; len]),
        };
        Stepper {
            kind,
            lr,
            m,
            v,
            step: 0,
        }
    }

    pub fn apply(&mut self, weights: &mut [f64], grad: &[f64]) {
        match self.kind {
            Optimizer::Sgd => {
                for (w, g) in weights.iter_mut().zip(grad) {
                    *w -= self.lr * g;
                }
            }
            Optimizer::Adam => {
                self.step += 1;
                let c1 = 1.0 - BETA1.powi(self.step);
                let c2 = 1.0 - BETA2.powi(self.step);
                for j in 0..weights.len() {
                    let g = grad[j];
                    self.m[j] = BETA1 * self.m[j] + (1.0 - BETA1) * g;
                    self.v[j] = BETA2 * self.v[j] + (1.0 - BETA2) * g * g;
                    let m_hat = self.m[j] / c1;
                    let v_hat = self.v[j] / c2;
                    weights[j] -= self.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
        }
    }
}
