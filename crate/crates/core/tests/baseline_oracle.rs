mod support;

use persuade_core::baseline::{
    evaluate_hf1, featurize, predict, threshold_grid, train, tune_thresholds, FeatureConfig, HierModel,
    Hyperparams, InputMode, LogisticProblem,
};
use persuade_core::corpus::MemeInstance;
use persuade_core::LabelHierarchy;
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::*;

const WORDS: &[&str] = &["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta", "iota", "kappa"];

fn random_docs(rng: &mut ChaCha8Rng, g: &RandomHierarchy, n: usize) -> Vec<MemeInstance> {
    (0..n)
        .map(|i| {
            let s = random_subset(rng, &g.labels, 2);
            let mut text: Vec<String> = (0..rng.random_range(3..9)).map(|_| WORDS.choose(rng).unwrap().to_string()).collect();
            // one marker word per label so the heads have something to fit
            text.extend(s.iter().map(|l| l.to_lowercase()));
            MemeInstance {
                labels: Some(g.extend(&s).into_iter().collect()),
                ..MemeInstance::new(format!("d{i:03}"), text.join(" "))
            }
        })
        .collect()
}

fn small_hyper() -> Hyperparams {
    Hyperparams {
        epochs: 40,
        features: FeatureConfig {
            dimension: 1 << 12,
            ..FeatureConfig::default()
        },
        ..Hyperparams::default()
    }
}

fn fixture(seed: u64, n: usize) -> (RandomHierarchy, LabelHierarchy, Vec<MemeInstance>, HierModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = random_hierarchy(&mut rng, 10, 3);
    while g.labels.len() < 3 {
        g = random_hierarchy(&mut rng, 10, 3);
    }
    let h = g.build();
    let docs = random_docs(&mut rng, &g, n);
    let model = train(&docs, &h, &small_hyper(), seed).unwrap().model;
    (g, h, docs, model)
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..50 {
        let columns = rng.random_range(1..8);
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
        for _ in 0..rng.random_range(1..12) {
            let mut row = Vec::new();
            for j in 0..columns {
                if rng.random_bool(0.6) {
                    row.push((j, rng.random_range(-2.0..2.0)));
                }
            }
            rows.push(row);
        }
        let targets = rows.iter().map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
        let p = LogisticProblem { columns, rows, targets };
        let w: Vec<f64> = (0..columns).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = rng.random_range(-1.0..1.0);
        let l2 = rng.random_range(0.0..0.1);
        let (_, gw, gb) = p.loss_and_grad(&w, b, l2);
        let eps = 1e-6;
        let rel = |num: f64, ana: f64| (num - ana).abs() / num.abs().max(ana.abs()).max(1e-8);
        for j in 0..columns {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[j] += eps;
            wm[j] -= eps;
            let num = (p.loss_and_grad(&wp, b, l2).0 - p.loss_and_grad(&wm, b, l2).0) / (2.0 * eps);
            assert!(rel(num, gw[j]) <= 1e-5, "{num} vs {}", gw[j]);
        }
        let num = (p.loss_and_grad(&w, b + eps, l2).0 - p.loss_and_grad(&w, b - eps, l2).0) / (2.0 * eps);
        assert!(rel(num, gb) <= 1e-5);

        let (fw, fb) = p.fit(l2, 0.5, 50);
        let zero = vec![0.0; columns];
        assert!(p.loss_and_grad(&fw, fb, l2).0 <= p.loss_and_grad(&zero, 0.0, l2).0 + 1e-12);
    }
}

fn with_thresholds(model: &HierModel, t: &[f64]) -> HierModel {
    let mut m = model.clone();
    for (head, &x) in m.heads.iter_mut().zip(t) {
        head.threshold = x;
    }
    m
}

/// Coordinate ascent written against the public prediction path.
fn reference_tuning(model: &HierModel, dev: &[MemeInstance], h: &LabelHierarchy) -> Vec<f64> {
    let mut t: Vec<f64> = model.heads.iter().map(|hd| hd.threshold).collect();
    let hf1 = |t: &[f64]| {
        let m = with_thresholds(model, t);
        let gold: Vec<NameSet> = dev.iter().map(|d| d.labels.clone().unwrap().into_iter().collect()).collect();
        let pred: Vec<NameSet> = dev
            .iter()
            .map(|d| {
                let p = predict(&m, h, d).unwrap();
                let ids: Vec<_> = p.iter().collect();
                h.names_of(&ids).into_iter().map(String::from).collect()
            })
            .collect();
        let tp: usize = gold.iter().zip(&pred).map(|(g, p)| g.intersection(p).count()).sum();
        let np: usize = pred.iter().map(|p| p.len()).sum();
        let ng: usize = gold.iter().map(|g| g.len()).sum();
        if np == 0 && ng == 0 {
            return 1.0;
        }
        let hp = if np == 0 { 0.0 } else { tp as f64 / np as f64 };
        let hr = if ng == 0 { 0.0 } else { tp as f64 / ng as f64 };
        oracle_f_beta(hp, hr, 1.0)
    };
    let mut order: Vec<usize> = (0..model.heads.len()).collect();
    order.sort_by(|&a, &b| model.heads[a].label.cmp(&model.heads[b].label));
    let mut best = hf1(&t);
    for _ in 0..2 {
        let mut changed = false;
        for &k in &order {
            if model.heads[k].always_negative {
                continue;
            }
            for x in (1..=19).map(|i| i as f64 / 20.0) {
                let prev = t[k];
                t[k] = x;
                let f = hf1(&t);
                if f > best {
                    best = f;
                    changed = true;
                } else {
                    t[k] = prev;
                }
            }
        }
        if !changed {
            break;
        }
    }
    t
}

#[test]
fn tuning_matches_reference_ascent() {
    for seed in 0..8 {
        let (g, h, _, model) = fixture(100 + seed, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dev = random_docs(&mut rng, &g, 25);
        let tuned = tune_thresholds(&model, &dev, &h).unwrap();
        let got: Vec<f64> = tuned.heads.iter().map(|hd| hd.threshold).collect();
        assert_eq!(got, reference_tuning(&model, &dev, &h), "seed {seed}");
        let before = evaluate_hf1(&model, &dev, &h).unwrap();
        let after = evaluate_hf1(&tuned, &dev, &h).unwrap();
        assert!(after >= before);
        let again = tune_thresholds(&tuned, &dev, &h).unwrap();
        assert!(evaluate_hf1(&again, &dev, &h).unwrap() >= after);
        assert!(got.iter().all(|t| threshold_grid().any(|x| x == *t) || *t == 0.5));
    }
}

#[test]
fn predictions_are_ancestor_closed() {
    let mut pairs = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for seed in 0..5 {
        let (g, h, _, model) = fixture(200 + seed, 60);
        for _ in 0..200 {
            let t: Vec<f64> = model.heads.iter().map(|_| rng.random_range(0.01..0.99)).collect();
            let m = with_thresholds(&model, &t);
            let inst = &random_docs(&mut rng, &g, 1)[0];
            let p = predict(&m, &h, inst).unwrap();
            assert!(h.is_consistent(&p).unwrap());
            pairs += 1;
        }
    }
    assert_eq!(pairs, 1000);
}

#[test]
fn training_is_bit_deterministic() {
    let (_, h, docs, model) = fixture(300, 50);
    let again = train(&docs, &h, &small_hyper(), 300).unwrap().model;
    assert_eq!(model, again);
    let bits = |m: &HierModel| -> Vec<u64> { m.heads.iter().flat_map(|hd| hd.weights.iter().map(|w| w.to_bits())).collect() };
    assert_eq!(bits(&model), bits(&again));
}

#[test]
fn caption_features_live_in_their_own_namespace() {
    let cfg = FeatureConfig {
        mode: InputMode::TextCaption,
        ..FeatureConfig::default()
    };
    let as_text = featurize("propaganda poster", None, InputMode::Text, &cfg);
    let as_caption = featurize("", Some("propaganda poster"), InputMode::TextCaption, &cfg);
    let a: Vec<u32> = as_text.vector.entries.iter().map(|e| e.0).collect();
    assert!(as_caption.vector.entries.iter().all(|e| !a.contains(&e.0)));
    assert!(featurize("x y", None, InputMode::TextCaption, &cfg).degraded);
    assert!(!featurize("x y", None, InputMode::Text, &cfg).degraded);
}

proptest! {
    #[test]
    fn vectors_are_unit_or_zero(text in "[a-z !,.]{0,40}", caption in proptest::option::of("[a-z ]{0,30}")) {
        for mode in [InputMode::Text, InputMode::TextCaption] {
            let cfg = FeatureConfig { mode, ..FeatureConfig::default() };
            let f = featurize(&text, caption.as_deref(), mode, &cfg);
            prop_assert!(f.vector.is_zero() || (f.vector.norm() - 1.0).abs() < 1e-12);
            prop_assert!(f.vector.entries.windows(2).all(|w| w[0].0 < w[1].0));
            prop_assert!(f.vector.entries.iter().all(|e| e.0 < cfg.dimension && e.1 != 0.0));
        }
    }
}
