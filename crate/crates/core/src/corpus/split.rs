use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, dev: f64, test: f64, seed: u64) -> Result<Self, CorpusError> {
        let spec = SplitSpec { train, dev, test, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let ok = [self.train, self.dev, self.test]
            .iter()
            .all(|f| f.is_finite() && *f >= 0.0)
            && (self.train + self.dev + self.test - 1.0).abs() < 1e-9;
        if ok {
            Ok(())
        } else {
            Err(CorpusError::BadFractions(self.train, self.dev, self.test))
        }
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.8,
            dev: 0.1,
            test: 0.1,
            seed: 0,
        }
    }
}

/// Seeded shuffle, then train/dev sizes by rounding and test takes the rest.
pub fn split<T: Clone>(items: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>, Vec<T>), CorpusError> {
    spec.validate()?;
    let n = items.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let n_train = ((n as f64) * spec.train).round() as usize;
    let n_dev = (((n as f64) * spec.dev).round() as usize).min(n - n_train.min(n));
    let n_train = n_train.min(n);
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<T>>();
    Ok((
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_dev]),
        pick(&order[n_train + n_dev..]),
    ))
}
