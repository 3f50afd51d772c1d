//! Test-only oracles: exhaustive enumeration over tiny CRF instances and
//! central finite differences. Nothing here calls the dynamic programs it checks.
#![allow(dead_code)]

use attrex::crf::{nll_and_gradient, CrfModel, Observation};
use attrex::encoder::EncoderConfig;
use attrex::schema::{Schema, TagLabel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub model: CrfModel,
    pub obs: Observation,
    pub gold: Vec<TagLabel>,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n ≤ 4` positions, `T ∈ {1, 3, 5}` tags, up to 4 sparse features.
/// With `integer_weights` every weight is in {-1, 0, 1}, which makes exact
/// score ties common.
pub fn random_instance(rng: &mut ChaCha8Rng, integer_weights: bool) -> Instance {
    let kinds = rng.random_range(0..3usize);
    let schema = Schema::new((0..kinds).map(|k| (format!("K{k}"), k == 0))).unwrap();
    let n_features = rng.random_range(1..5usize);
    let feats: Vec<String> = (0..n_features).map(|i| format!("f{i}")).collect();
    let mut model = CrfModel::new(schema, feats, EncoderConfig::default());
    for w in model.weights_mut() {
        *w = if integer_weights {
            rng.random_range(-1i32..=1) as f64
        } else {
            rng.random_range(-2.0..2.0)
        };
    }
    let n = rng.random_range(1..5usize);
    let positions = (0..n)
        .map(|_| (0..n_features).filter(|_| rng.random_bool(0.5)).collect())
        .collect();
    let t = model.tag_count();
    let gold = (0..n).map(|_| TagLabel::from_index(rng.random_range(0..t))).collect();
    Instance {
        model,
        obs: Observation::new(positions),
        gold,
    }
}

/// Score straight from the definition: sum of every active weight.
pub fn oracle_score(model: &CrfModel, obs: &Observation, path: &[usize]) -> f64 {
    let w = model.weights();
    let mut s = w[model.start_offset(path[0])] + w[model.end_offset(*path.last().unwrap())];
    for (i, &t) in path.iter().enumerate() {
        for &f in &obs.positions()[i] {
            s += w[model.emission_offset(f, t)];
        }
        if i > 0 {
            s += w[model.transition_offset(path[i - 1], t)];
        }
    }
    s
}

/// Every tag sequence with its score, sorted by score descending and then
/// lexicographically by tag index.
pub fn enumerate(model: &CrfModel, obs: &Observation) -> Vec<(Vec<usize>, f64)> {
    let t = model.tag_count();
    let n = obs.len();
    let total = t.pow(n as u32);
    let mut all: Vec<(Vec<usize>, f64)> = (0..total)
        .map(|mut code| {
            let mut path = vec![0; n];
            for i in (0..n).rev() {
                path[i] = code % t;
                code /= t;
            }
            let s = oracle_score(model, obs, &path);
            (path, s)
        })
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all
}

pub fn oracle_log_z(all: &[(Vec<usize>, f64)]) -> f64 {
    let max = all.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
    max + all.iter().map(|x| (x.1 - max).exp()).sum::<f64>().ln()
}

/// Regularized negative log-likelihood computed by enumeration.
pub fn oracle_nll(model: &CrfModel, obs: &Observation, gold: &[TagLabel], l2: f64) -> f64 {
    let all = enumerate(model, obs);
    let reg = 0.5 * l2 * model.weights().iter().map(|w| w * w).sum::<f64>();
    oracle_log_z(&all) - oracle_score(model, obs, &path_of(gold)) + reg
}

/// Largest per-coordinate relative error between the analytic gradient and
/// central differences of [`oracle_nll`] with step `eps`; denominators are
/// floored at `floor`.
pub fn gradient_check(inst: &Instance, l2: f64, eps: f64, floor: f64) -> f64 {
    let batch = vec![(inst.obs.clone(), inst.gold.clone())];
    let (_, grad) = nll_and_gradient(&inst.model, &batch, l2).unwrap();
    let mut worst: f64 = 0.0;
    for j in 0..grad.len() {
        let mut plus = inst.model.clone();
        plus.weights_mut()[j] += eps;
        let mut minus = inst.model.clone();
        minus.weights_mut()[j] -= eps;
        let lp = oracle_nll(&plus, &inst.obs, &inst.gold, l2);
        let lm = oracle_nll(&minus, &inst.obs, &inst.gold, l2);
        let fd = (lp - lm) / (2.0 * eps);
        let rel = (grad[j] - fd).abs() / grad[j].abs().max(fd.abs()).max(floor);
        worst = worst.max(rel);
    }
    worst
}

pub fn path_of(tags: &[TagLabel]) -> Vec<usize> {
    tags.iter().map(|t| t.index()).collect()
}
