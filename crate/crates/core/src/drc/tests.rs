use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::crf::Hypothesis;
use crate::schema::{tokenize, EntitySpan, KindId, Schema, TagLabel, TaggedQuery};

fn food_schema() -> Schema {
    Schema::new([("Flavor", false), ("Cuisine Type", false), ("Product Type", true)]).unwrap()
}

const FLAVOR: KindId = KindId(0);
const CUISINE: KindId = KindId(1);
const PT: KindId = KindId(2);

fn hyp(tags: Vec<TagLabel>, rank: usize) -> Hypothesis {
    Hypothesis {
        tags,
        log_score: -(rank as f64),
        posterior: 0.0,
        rank,
    }
}

/// The two readings of "tahini sauce for hummus".
fn tahini() -> (Vec<String>, Hypothesis, Hypothesis) {
    use TagLabel::{B, O};
    let toks = tokenize("tahini sauce for hummus");
    let a = hyp(vec![B(FLAVOR), B(CUISINE), O, B(PT)], 1);
    let b = hyp(vec![B(FLAVOR), B(PT), O, B(FLAVOR)], 2);
    (toks, a, b)
}

fn tahini_verdicts(_: &[String], attr: &EntitySpan, ptype: &EntitySpan) -> bool {
    matches!(
        (attr.value.as_str(), ptype.value.as_str()),
        ("tahini", "hummus") | ("tahini", "sauce") | ("hummus", "sauce")
    )
}

#[test]
fn tahini_scores_and_choice() {
    let (toks, a, b) = tahini();
    let schema = food_schema();
    let sa = hypothesis_pair_score(&a, &toks, &schema, &tahini_verdicts);
    let sb = hypothesis_pair_score(&b, &toks, &schema, &tahini_verdicts);
    assert_eq!(sa.score, Some(1));
    assert_eq!(sb.score, Some(2));
    let d = rerank(&[a, b.clone()], &toks, &schema, &tahini_verdicts).unwrap();
    assert!(d.applied);
    assert_eq!(d.chosen, b);
}

#[test]
fn product_type_only_scores_zero() {
    let toks = tokenize("hummus");
    let h = hyp(vec![TagLabel::B(PT)], 1);
    let s = hypothesis_pair_score(&h, &toks, &food_schema(), &tahini_verdicts);
    assert_eq!(s.score, Some(0));
    assert!(s.verdicts.is_empty());
}

#[test]
fn no_product_type_is_unscored() {
    let (toks, _, _) = tahini();
    let h = hyp(vec![TagLabel::B(FLAVOR), TagLabel::O, TagLabel::O, TagLabel::O], 1);
    assert_eq!(
        hypothesis_pair_score(&h, &toks, &food_schema(), &tahini_verdicts).score,
        None
    );
    let d = rerank(std::slice::from_ref(&h), &toks, &food_schema(), &tahini_verdicts).unwrap();
    assert!(!d.applied);
    assert_eq!(d.chosen, h);
}

#[test]
fn unscored_never_beats_scored() {
    let (toks, a, _) = tahini();
    let none = hyp(vec![TagLabel::B(FLAVOR), TagLabel::O, TagLabel::O, TagLabel::O], 1);
    let a = Hypothesis { rank: 2, ..a };
    let d = rerank(
        &[none, a.clone()],
        &toks,
        &food_schema(),
        &|_: &[String], _: &EntitySpan, _: &EntitySpan| false,
    )
    .unwrap();
    assert!(d.applied);
    assert_eq!(d.chosen, a);
}

#[test]
fn ties_keep_better_rank() {
    let (toks, a, b) = tahini();
    let always = |_: &[String], _: &EntitySpan, _: &EntitySpan| true;
    let d = rerank(&[a.clone(), b], &toks, &food_schema(), &always).unwrap();
    assert_eq!(d.chosen, a);
}

#[test]
fn only_top_three_are_considered() {
    let (toks, _, b) = tahini();
    let filler = |r| hyp(vec![TagLabel::O; 4], r);
    let b4 = Hypothesis { rank: 4, ..b };
    let d = rerank(
        &[filler(1), filler(2), filler(3), b4],
        &toks,
        &food_schema(),
        &tahini_verdicts,
    )
    .unwrap();
    assert!(!d.applied);
    assert_eq!(d.scores.len(), 3);
    assert_eq!(d.chosen.rank, 1);
}

#[test]
fn empty_hypotheses_error() {
    assert!(matches!(
        rerank(&[], &[], &food_schema(), &tahini_verdicts),
        Err(DrcError::EmptyHypotheses)
    ));
}

#[test]
fn nearest_product_type_prefers_later_on_tie() {
    use TagLabel::{B, O};
    let toks = tokenize("sauce tahini hummus");
    let h = hyp(vec![B(PT), B(FLAVOR), B(PT)], 1);
    let s = hypothesis_pair_score(&h, &toks, &food_schema(), &tahini_verdicts);
    assert_eq!(s.verdicts.len(), 1);
    assert_eq!(s.verdicts[0].ptype.value, "hummus");
    let toks = tokenize("tahini sauce x hummus");
    let h = hyp(vec![B(FLAVOR), B(PT), O, B(PT)], 1);
    let s = hypothesis_pair_score(&h, &toks, &food_schema(), &tahini_verdicts);
    assert_eq!(s.verdicts[0].ptype.value, "sauce");
}

#[test]
fn gold_judge_accepts_only_gold_pairs() {
    let (toks, a, b) = tahini();
    let gold = b.spans(&toks);
    let judge = GoldPairJudge::new(&gold);
    assert_eq!(hypothesis_pair_score(&b, &toks, &food_schema(), &judge).score, Some(2));
    assert_eq!(hypothesis_pair_score(&a, &toks, &food_schema(), &judge).score, Some(0));
}

#[test]
fn zero_network_is_one_half() {
    let m = DrcModel::zeros(3, &[4, 2], 0.5, "x");
    assert_eq!(drc_score(&[1.0, -2.0, 3.0], &[0.5, 0.0, 9.0], &m).unwrap(), 0.5);
    assert_eq!(m.sizes(), &[6, 4, 2, 1]);
    assert_eq!(m.params().len(), 4 * 7 + 2 * 5 + 3);
}

#[test]
fn dimension_mismatch() {
    let m = DrcModel::zeros(3, &[4], 0.5, "x");
    assert!(matches!(
        drc_score(&[1.0, 2.0], &[0.0; 3], &m),
        Err(DrcError::DimensionMismatch { expected: 3, found: 2 })
    ));
}

fn random_model(rng: &mut ChaCha8Rng, dim: usize, hidden: &[usize], scale: f64) -> DrcModel {
    let mut m = DrcModel::zeros(dim, hidden, 0.5, "x");
    for w in m.params_mut() {
        *w = rng.random_range(-scale..scale);
    }
    m
}

proptest! {
    #[test]
    fn score_strictly_inside_unit_interval(
        seed in 0u64..1000,
        a in prop::collection::vec(-1e6f64..1e6, 2),
        p in prop::collection::vec(-1e6f64..1e6, 2),
    ) {
        let m = random_model(&mut ChaCha8Rng::seed_from_u64(seed), 2, &[3], 50.0);
        let s = drc_score(&a, &p, &m).unwrap();
        prop_assert!(s > 0.0 && s < 1.0);
    }

    #[test]
    fn output_bias_is_monotone(seed in 0u64..1000, bump in 0.01f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = random_model(&mut rng, 2, &[4], 1.0);
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let before = drc_score(&x[..2], &x[2..], &m).unwrap();
        let last = m.params().len() - 1;
        m.params_mut()[last] += bump;
        prop_assert!(drc_score(&x[..2], &x[2..], &m).unwrap() > before);
    }

    #[test]
    fn pair_score_bounded_by_attribute_count(seed in 0u64..500, n in 1usize..7) {
        let schema = food_schema();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let toks: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        let tags: Vec<TagLabel> = (0..n).map(|_| TagLabel::from_index(rng.random_range(0..schema.tag_count()))).collect();
        let h = hyp(tags, 1);
        let coin = |_: &[String], a: &EntitySpan, _: &EntitySpan| a.start % 2 == 0;
        let s = hypothesis_pair_score(&h, &toks, &schema, &coin);
        let attrs = h.spans(&toks).iter().filter(|s| s.kind != PT).count();
        if let Some(v) = s.score {
            prop_assert!(v <= attrs);
            prop_assert_eq!(s.verdicts.len(), attrs);
        }
        let d = rerank(std::slice::from_ref(&h), &toks, &schema, &coin).unwrap();
        prop_assert_eq!(d.chosen, h);
    }
}

fn example(attr: Vec<f64>, ptype: Vec<f64>, label: bool) -> PairExample {
    PairExample {
        attr,
        ptype,
        label,
        source: None,
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for trial in 0..40 {
        let hidden: Vec<usize> = match trial % 3 {
            0 => vec![],
            1 => vec![3],
            _ => vec![3, 2],
        };
        let m = random_model(&mut rng, 2, &hidden, 1.0);
        let batch: Vec<PairExample> = (0..3)
            .map(|_| {
                let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                example(v[..2].to_vec(), v[2..].to_vec(), rng.random_bool(0.5))
            })
            .collect();
        let l2 = if trial % 2 == 0 { 0.0 } else { 0.05 };
        let (_, grad) = bce_and_gradient(&m, &batch, l2).unwrap();
        let eps = 1e-6;
        for j in 0..grad.len() {
            let mut plus = m.clone();
            plus.params_mut()[j] += eps;
            let mut minus = m.clone();
            minus.params_mut()[j] -= eps;
            let fd = (bce_and_gradient(&plus, &batch, l2).unwrap().0 - bce_and_gradient(&minus, &batch, l2).unwrap().0)
                / (2.0 * eps);
            worst = worst.max((grad[j] - fd).abs() / grad[j].abs().max(fd.abs()).max(1e-6));
        }
    }
    assert!(worst < 1e-4, "relative error {worst}");
}

fn separable(rng: &mut ChaCha8Rng, n: usize) -> Vec<PairExample> {
    let w = [1.0, -2.0, 0.5, 1.5, -1.0, 0.7];
    let mut out = Vec::new();
    while out.len() < n {
        let v: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
        if z.abs() < 0.2 {
            continue;
        }
        out.push(example(v[..3].to_vec(), v[3..].to_vec(), z > 0.0));
    }
    out
}

#[test]
fn separable_pairs_are_learned() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let train = PairDataset::new("x", separable(&mut rng, 600));
    let test = separable(&mut rng, 300);
    let m = train_drc(&train, &DrcConfig::default()).unwrap();
    let correct = test
        .iter()
        .filter(|e| (drc_score(&e.attr, &e.ptype, &m).unwrap() >= 0.5) == e.label)
        .count();
    let acc = correct as f64 / test.len() as f64;
    assert!(acc >= 0.95, "accuracy {acc}");
}

#[test]
fn repeated_positive_is_fitted() {
    let mut ex = vec![example(vec![1.0, 0.0], vec![0.0, 1.0], true); 20];
    ex.push(example(vec![0.0, 1.0], vec![1.0, 0.0], false));
    let m = train_drc(&PairDataset::new("x", ex), &DrcConfig::default()).unwrap();
    assert!(drc_score(&[1.0, 0.0], &[0.0, 1.0], &m).unwrap() > 0.5);
}

#[test]
fn training_is_deterministic_and_validated() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let data = PairDataset::new("x", separable(&mut rng, 100));
    let cfg = DrcConfig {
        epochs: 3,
        seed: 9,
        ..DrcConfig::default()
    };
    assert_eq!(train_drc(&data, &cfg).unwrap(), train_drc(&data, &cfg).unwrap());
    let other = DrcConfig {
        seed: 10,
        ..cfg.clone()
    };
    assert_ne!(train_drc(&data, &cfg).unwrap(), train_drc(&data, &other).unwrap());

    let only_pos = PairDataset::new("x", vec![example(vec![1.0], vec![1.0], true)]);
    assert!(matches!(train_drc(&only_pos, &cfg), Err(DrcError::DegenerateLabels)));
    let bad = DrcConfig { hidden: vec![0], ..cfg };
    assert!(matches!(train_drc(&data, &bad), Err(DrcError::Config(_))));
}

#[test]
fn model_file_round_trip_and_encoder_check() {
    let enc = SpanEncoder::hashed(4);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut m = random_model(&mut rng, 4, &[5], 1.0);
    m.fingerprint = enc.fingerprint();
    let mut buf = Vec::new();
    m.save(&mut buf).unwrap();
    let back = DrcModel::load(buf.as_slice(), Some(&enc)).unwrap();
    assert_eq!(back, m);
    assert!(matches!(
        DrcModel::load(buf.as_slice(), Some(&SpanEncoder::hashed(8))),
        Err(DrcError::EncoderMismatch { .. })
    ));
    let mut v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
    v["params"].as_array_mut().unwrap().pop();
    let broken = serde_json::to_vec(&v).unwrap();
    assert!(matches!(
        DrcModel::load(broken.as_slice(), None),
        Err(DrcError::Format(_))
    ));
    assert!(DrcJudge::new(&m, &SpanEncoder::hashed(8)).is_err());
}

fn food_corpus(texts: &[(&str, &[TagLabel])]) -> Vec<TaggedQuery> {
    texts
        .iter()
        .map(|(t, tags)| TaggedQuery::new(tokenize(t), tags.to_vec()).unwrap())
        .collect()
}

#[test]
fn pair_dataset_positives() {
    use TagLabel::{B, O};
    let schema = food_schema();
    let enc = SpanEncoder::hashed(8);
    let corpus = food_corpus(&[("tahini hummus", &[B(FLAVOR), B(PT)])]);
    let data = build_pair_dataset(&corpus, &schema, &enc, 0).unwrap();
    let pos: Vec<_> = data.examples.iter().filter(|e| e.label).collect();
    assert_eq!(pos.len(), 1);
    let src = pos[0].source.as_ref().unwrap();
    assert_eq!(
        (src.attr.value.as_str(), src.ptype.value.as_str()),
        ("tahini", "hummus")
    );
    assert_eq!(data.negatives(), 1);
    assert_eq!(data.fingerprint, enc.fingerprint());

    let corpus = food_corpus(&[("hummus", &[B(PT)]), ("spicy x", &[B(FLAVOR), O])]);
    let data = build_pair_dataset(&corpus, &schema, &enc, 0).unwrap();
    assert_eq!(data.positives(), 0);

    let corpus = food_corpus(&[("spicy", &[B(FLAVOR)])]);
    assert!(matches!(
        build_pair_dataset(&corpus, &schema, &enc, 0),
        Err(DrcError::NoProductTypes)
    ));
    let no_pt = Schema::new([("Flavor", false)]).unwrap();
    let corpus = food_corpus(&[("spicy", &[B(KindId(0))])]);
    assert!(matches!(
        build_pair_dataset(&corpus, &no_pt, &enc, 0),
        Err(DrcError::NoProductTypes)
    ));
}

proptest! {
    #[test]
    fn pair_dataset_is_balanced(seed in 0u64..200, picks in prop::collection::vec((0usize..4, 0usize..4, 0usize..3), 1..12)) {
        use TagLabel::B;
        let flavors = ["spicy", "sweet", "tahini", "smoky"];
        let things = ["hummus", "salsa", "sauce", "dip"];
        let cuisines = ["greek", "thai", "mexican"];
        let corpus: Vec<TaggedQuery> = picks
            .iter()
            .map(|&(f, t, c)| {
                let text = format!("{} {} {}", flavors[f], cuisines[c], things[t]);
                TaggedQuery::new(tokenize(&text), vec![B(FLAVOR), B(CUISINE), B(PT)]).unwrap()
            })
            .collect();
        let data = build_pair_dataset(&corpus, &food_schema(), &SpanEncoder::hashed(8), seed).unwrap();
        let (p, n) = (data.positives() as i64, data.negatives() as i64);
        prop_assert!((p - n).abs() <= 1);
        prop_assert!(p >= 1);
        let again = build_pair_dataset(&corpus, &food_schema(), &SpanEncoder::hashed(8), seed).unwrap();
        prop_assert_eq!(data, again);
    }
}
