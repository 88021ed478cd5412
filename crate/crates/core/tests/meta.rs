use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use ttstack_core::data::{prepare_eval, PipelineConfig};
use ttstack_core::meta::{
    compute_class_weights, extract_logits, fit_logreg, fit_logreg_from, LogRegOptions, LogitRecord, MetaFeatures,
    MetaModel, Provenance, Standardizer,
};
use ttstack_core::synth::SyntheticSpec;
use ttstack_core::vit::{TinyViT, ViTConfig};

fn learner(seed: u64, depth: usize) -> TinyViT {
    TinyViT::new(ViTConfig {
        image_size: 16,
        patch_size: 4,
        embed_dim: 8,
        depth,
        num_heads: 2,
        mlp_ratio: 2,
        seed,
        ..ViTConfig::default()
    })
    .unwrap()
}

fn pipeline() -> PipelineConfig {
    PipelineConfig { target_size: 16, ..PipelineConfig::default() }
}

fn small_corpus() -> ttstack_core::Dataset {
    SyntheticSpec { negatives: 6, positives: 4, size: 16, seed: 3, ..SyntheticSpec::default() }
        .generate()
        .unwrap()
}

#[test]
fn class_weight_examples() {
    let mut labels = vec![0u8; 124];
    labels.extend([1u8; 25]);
    let w = compute_class_weights(&labels).unwrap();
    assert!((w[0] - 0.600806).abs() < 1e-6);
    assert!((w[1] - 2.98).abs() < 1e-6);
    assert_eq!(w[0] * 124.0 + w[1] * 25.0, 149.0);
    assert_eq!(compute_class_weights(&[0, 1, 0, 1]).unwrap(), [1.0, 1.0]);
    assert!(compute_class_weights(&[1, 1]).is_err());
}

#[test]
fn seven_learners_give_fourteen_columns() {
    let models: Vec<(String, TinyViT)> = (0..7).map(|k| (format!("m{k}"), learner(k, 1 + k as usize % 2))).collect();
    let refs: Vec<(&str, &TinyViT)> = models.iter().map(|(id, m)| (id.as_str(), m)).collect();
    let data = small_corpus();
    let feats = extract_logits(&refs, &data, &pipeline(), Provenance::MetaTrain).unwrap();
    assert_eq!(feats.len(), 10);
    assert!(feats.rows.iter().all(|r| r.len() == 14));
    assert_eq!(feats.width(), 14);
    assert_eq!(feats.labels, data.labels());

    // each block is exactly that learner's forward pass
    let inputs: Vec<_> = data.samples().iter().map(|s| prepare_eval(&s.image, 16)).collect();
    for (id, m) in &models {
        let direct: Vec<[f64; 2]> = m.forward(&inputs).unwrap().iter().map(|l| l.as_array()).collect();
        assert_eq!(feats.learner_logits(id).unwrap(), direct);
    }

    // reversing the learner list permutes column blocks and nothing else
    let rev: Vec<(&str, &TinyViT)> = refs.iter().rev().copied().collect();
    let feats_rev = extract_logits(&rev, &data, &pipeline(), Provenance::MetaTrain).unwrap();
    for (a, b) in feats.rows.iter().zip(&feats_rev.rows) {
        for k in 0..7 {
            assert_eq!(a[2 * k..2 * k + 2], b[2 * (6 - k)..2 * (6 - k) + 2]);
        }
    }
}

#[test]
fn single_learner_single_sample() {
    let m = learner(9, 1);
    let data = SyntheticSpec { negatives: 1, positives: 1, size: 16, seed: 4, ..SyntheticSpec::default() }
        .generate()
        .unwrap();
    let feats = extract_logits(&[("solo", &m)], &data, &pipeline(), Provenance::Inference).unwrap();
    let x = prepare_eval(&data.samples()[0].image, 16);
    assert_eq!(feats.rows[0], m.forward(&[x]).unwrap()[0].as_array().to_vec());
}

#[test]
fn extraction_leaves_learners_frozen() {
    let m = learner(5, 2);
    let before = m.checksum();
    extract_logits(&[("a", &m)], &small_corpus(), &pipeline(), Provenance::MetaTrain).unwrap();
    assert_eq!(m.checksum(), before);
}

#[test]
fn extraction_errors() {
    let m = learner(5, 1);
    let data = small_corpus();
    assert!(extract_logits(&[], &data, &pipeline(), Provenance::MetaTrain).is_err());
    assert!(extract_logits(&[("a", &m), ("a", &m)], &data, &pipeline(), Provenance::MetaTrain).is_err());
    let wrong = PipelineConfig { target_size: 32, ..pipeline() };
    assert!(extract_logits(&[("a", &m)], &data, &wrong, Provenance::MetaTrain).is_err());
}

fn features(rows: Vec<Vec<f64>>, labels: Vec<u8>, provenance: Provenance) -> MetaFeatures {
    let k = rows[0].len() / 2;
    MetaFeatures {
        sample_ids: (0..rows.len()).map(|i| format!("s{i}")).collect(),
        rows,
        labels,
        learner_order: (0..k).map(|i| format!("l{i}")).collect(),
        provenance,
    }
}

#[test]
fn meta_fit_rejects_non_train_rows() {
    let rows = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.2, 0.9], vec![0.8, 0.1]];
    let labels = vec![1, 0, 1, 0];
    for p in [Provenance::MetaValidation, Provenance::Inference] {
        assert!(MetaModel::fit(&features(rows.clone(), labels.clone(), p), &LogRegOptions::default()).is_err());
    }
    assert!(MetaModel::fit(&features(rows, labels, Provenance::MetaTrain), &LogRegOptions::default()).is_ok());
}

/// Independent objective and gradient for the oracle.
fn oracle_objective(x: &[Vec<f64>], y: &[u8], cw: [f64; 2], w: &[f64], b: f64) -> (f64, Vec<f64>, f64) {
    let mut f = 0.0;
    let mut gw = w.to_vec();
    let mut gb = 0.0;
    f += 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    for (row, &label) in x.iter().zip(y) {
        let z = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        let c = cw[label as usize];
        let t = label as f64;
        // -log p for the observed class, i.e. log(1 + e^{-z}) or log(1 + e^{z})
        let m = if t == 1.0 { -z } else { z };
        f += c * (m.max(0.0) + (-m.abs()).exp().ln_1p());
        let p = 1.0 / (1.0 + (-z).exp());
        for (g, a) in gw.iter_mut().zip(row) {
            *g += c * (p - t) * a;
        }
        gb += c * (p - t);
    }
    (f, gw, gb)
}

fn random_problem(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<u8>) {
    loop {
        let truth: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect()).collect();
        let y: Vec<u8> = x
            .iter()
            .map(|r| {
                let z: f64 = r.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>();
                let noise: f64 = StandardNormal.sample(rng);
                u8::from(z + 0.5 * noise > 0.3)
            })
            .collect();
        if y.iter().filter(|&&v| v == 1).count() >= 2 && y.iter().filter(|&&v| v == 0).count() >= 2 {
            return (x, y);
        }
    }
}

#[test]
fn logreg_matches_gradient_descent_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..5 {
        let (x, y) = random_problem(&mut rng, 20, 4);
        let cw = compute_class_weights(&y).unwrap();
        let model = fit_logreg(&x, &y, cw, &LogRegOptions::default()).unwrap();
        assert!(model.converged);

        let (mut w, mut b) = (vec![0.0; 4], 0.0);
        for _ in 0..1_000_000 {
            let (_, gw, gb) = oracle_objective(&x, &y, cw, &w, b);
            for (wi, g) in w.iter_mut().zip(&gw) {
                *wi -= 1e-3 * g;
            }
            b -= 1e-3 * gb;
        }
        let oracle = oracle_objective(&x, &y, cw, &w, b).0;
        let ours = oracle_objective(&x, &y, cw, &model.weights, model.bias).0;
        assert!((ours - oracle).abs() < 1e-3, "{ours} vs {oracle}");
        assert!(ours <= oracle + 1e-9);
    }
}

#[test]
fn logreg_refits_agree_from_random_starts() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (x, y) = random_problem(&mut rng, 20, 4);
    let cw = compute_class_weights(&y).unwrap();
    let opts = LogRegOptions::default();
    let base = fit_logreg(&x, &y, cw, &opts).unwrap();
    let f0 = oracle_objective(&x, &y, cw, &base.weights, base.bias).0;
    for _ in 0..5 {
        let init: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let m = fit_logreg_from(&x, &y, cw, &opts, &init, rng.random_range(-3.0..3.0)).unwrap();
        let f = oracle_objective(&x, &y, cw, &m.weights, m.bias).0;
        assert!((f - f0).abs() < 1e-6);
        for (a, b) in m.weights.iter().zip(&base.weights) {
            assert!((a - b).abs() < 1e-4);
        }
        assert!((m.bias - base.bias).abs() < 1e-4);
    }
}

#[test]
fn separable_data_stays_finite() {
    let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 - 4.5]).collect();
    let y: Vec<u8> = (0..10).map(|i| u8::from(i >= 5)).collect();
    let m = fit_logreg(&x, &y, [1.0, 1.0], &LogRegOptions::default()).unwrap();
    assert!(m.weights[0].is_finite() && m.weights[0] > 0.0);
    assert!(m.converged);
}

#[test]
fn stack_predict_examples() {
    let m = learner(31, 1);
    let data = small_corpus();
    let inputs: Vec<_> = data.samples().iter().map(|s| prepare_eval(&s.image, 16)).collect();

    let mut meta = MetaModel {
        learner_order: vec!["a".into()],
        standardizer: Standardizer::identity(2),
        logreg: fit_logreg(&[vec![0.0, 0.0], vec![1.0, 1.0]], &[0, 1], [1.0, 1.0], &LogRegOptions::default()).unwrap(),
    };
    meta.logreg.weights = vec![0.0, 0.0];
    meta.logreg.bias = 0.0;
    for (label, p) in meta.stack_predict(&[("a", &m)], &inputs).unwrap() {
        assert_eq!((label, p), (1, 0.5));
    }

    // a positive weight on the cancer column makes the probability rise with that logit
    meta.logreg.weights = vec![0.0, 2.0];
    let logits = m.forward(&inputs).unwrap();
    let probs = meta.stack_predict(&[("a", &m)], &inputs).unwrap();
    for i in 0..inputs.len() {
        for j in 0..inputs.len() {
            if logits[i].logit_cancer > logits[j].logit_cancer {
                assert!(probs[i].1 > probs[j].1);
            }
        }
    }
    assert!(meta.stack_predict(&[("b", &m)], &inputs).is_err());
}

#[test]
fn meta_model_save_load() {
    let dir = tempfile::tempdir().unwrap();
    let rows = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.2, 0.9], vec![0.8, 0.1]];
    let meta = MetaModel::fit(&features(rows, vec![1, 0, 1, 0], Provenance::MetaTrain), &LogRegOptions::default()).unwrap();
    let path = dir.path().join("meta.json");
    meta.save(&path).unwrap();
    assert_eq!(MetaModel::load(&path).unwrap(), meta);
    let mut bad = meta.clone();
    bad.learner_order.push("extra".into());
    bad.save(&path).unwrap();
    assert!(MetaModel::load(&path).is_err());
}

#[test]
fn logit_csv_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let m1 = learner(1, 1);
    let m2 = learner(2, 2);
    let data = small_corpus();
    let feats = extract_logits(&[("x", &m1), ("y", &m2)], &data, &pipeline(), Provenance::MetaTrain).unwrap();
    let path = dir.path().join("logits.csv");
    feats.write_csv(&path).unwrap();
    let back = MetaFeatures::read_csv(&path, Provenance::MetaTrain, None).unwrap();
    assert_eq!(back, feats);

    let order = vec!["y".to_string(), "x".to_string()];
    let swapped = MetaFeatures::read_csv(&path, Provenance::MetaTrain, Some(&order)).unwrap();
    assert_eq!(swapped.learner_logits("x"), feats.learner_logits("x"));

    let mut records = feats.to_records();
    records.retain(|r| !(r.sample_id == feats.sample_ids[3] && r.learner_id == "y"));
    assert!(MetaFeatures::from_records(&records, Provenance::MetaTrain, None).is_err());

    let mut records = feats.to_records();
    records.push(LogitRecord { learner_id: "z".into(), ..records[0].clone() });
    let order = vec!["x".to_string(), "y".to_string()];
    assert!(MetaFeatures::from_records(&records, Provenance::MetaTrain, Some(&order)).is_err());

    let mut records = feats.to_records();
    records[0].logit_0 = f64::INFINITY;
    assert!(MetaFeatures::from_records(&records, Provenance::MetaTrain, None).is_err());

    std::fs::write(&path, "id,label\ns,1\n").unwrap();
    assert!(MetaFeatures::read_csv(&path, Provenance::MetaTrain, None).is_err());
}
