use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttstack_core::data::NormalizedTensor;
use ttstack_core::vit::{argmax, cross_entropy, softmax, LogitPair, TinyViT, ViTConfig};

fn small_config() -> ViTConfig {
    ViTConfig {
        image_size: 16,
        patch_size: 4,
        embed_dim: 8,
        depth: 1,
        num_heads: 2,
        mlp_ratio: 4,
        seed: 3,
        ..ViTConfig::default()
    }
}

fn random_inputs(n: usize, size: usize, seed: u64) -> Vec<NormalizedTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| NormalizedTensor::from_values(size, size, (0..size * size).map(|_| rng.random_range(-1.0..=1.0)).collect()))
        .collect()
}

/// Replaces every parameter with a draw of scale `std` so that all
/// gradient paths are comfortably away from zero.
fn randomize(model: &mut TinyViT, std: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in model.params.slices_mut() {
        for v in s {
            *v = rng.random_range(-std..std);
        }
    }
}

#[test]
fn init_is_deterministic_and_biases_are_zero() {
    let a = TinyViT::new(ViTConfig::default()).unwrap();
    let b = TinyViT::new(ViTConfig::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.checksum(), b.checksum());
    let p = &a.params;
    assert_eq!(ViTConfig::default().num_tokens(), 65);
    assert_eq!(p.pos_embed.len(), 65 * 64);
    let mut biases = vec![&p.patch_b, &p.head_b, &p.norm_beta];
    for blk in &p.blocks {
        biases.extend([&blk.b_q, &blk.b_k, &blk.b_v, &blk.b_o, &blk.b_1, &blk.b_2, &blk.ln1_beta, &blk.ln2_beta]);
    }
    assert!(biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
    // truncated at two standard deviations
    assert!(p.patch_w.iter().all(|w| w.abs() <= 0.04));
    assert!(p.pos_embed.iter().any(|&w| w != 0.0));
    let other = TinyViT::new(ViTConfig { seed: 7, ..ViTConfig::default() }).unwrap();
    assert_ne!(other.params, a.params);
}

#[test]
fn invalid_configs() {
    for bad in [
        ViTConfig { patch_size: 5, ..ViTConfig::default() },
        ViTConfig { num_heads: 3, ..ViTConfig::default() },
        ViTConfig { num_classes: 3, ..ViTConfig::default() },
        ViTConfig { in_channels: 3, ..ViTConfig::default() },
        ViTConfig { depth: 0, ..ViTConfig::default() },
    ] {
        assert!(TinyViT::new(bad).is_err());
    }
}

#[test]
fn heterogeneous_configs_have_different_shapes() {
    let a = TinyViT::new(ViTConfig { image_size: 16, patch_size: 4, embed_dim: 16, depth: 1, num_heads: 2, ..ViTConfig::default() }).unwrap();
    let b = TinyViT::new(ViTConfig { image_size: 16, patch_size: 8, embed_dim: 16, depth: 2, num_heads: 4, ..ViTConfig::default() }).unwrap();
    let shapes = |m: &TinyViT| m.params.named().into_iter().map(|(n, s)| (n, s.len())).collect::<Vec<_>>();
    assert_ne!(shapes(&a), shapes(&b));
    assert_ne!(a.params.pos_embed.len(), b.params.pos_embed.len());
}

#[test]
fn forward_shapes_and_errors() {
    let model = TinyViT::new(small_config()).unwrap();
    let batch = random_inputs(5, 16, 1);
    let logits = model.forward(&batch).unwrap();
    assert_eq!(logits.len(), 5);
    assert!(logits.iter().all(LogitPair::is_finite));
    assert!(model.forward(&random_inputs(1, 8, 1)).is_err());
}

#[test]
fn attention_rows_are_distributions() {
    let mut model = TinyViT::new(ViTConfig { image_size: 16, depth: 2, embed_dim: 16, num_heads: 4, ..ViTConfig::default() }).unwrap();
    randomize(&mut model, 1.0, 11);
    for x in random_inputs(3, 16, 2) {
        for map in model.attention_maps(&x).unwrap() {
            for row in map.chunks(17) {
                assert!(row.iter().all(|&p| p >= 0.0));
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn batch_permutation_permutes_logits() {
    let mut model = TinyViT::new(small_config()).unwrap();
    randomize(&mut model, 0.5, 4);
    let batch = random_inputs(4, 16, 5);
    let logits = model.forward(&batch).unwrap();
    let perm = [2, 0, 3, 1];
    let permuted: Vec<_> = perm.iter().map(|&i| batch[i].clone()).collect();
    let logits_p = model.forward(&permuted).unwrap();
    for (k, &i) in perm.iter().enumerate() {
        assert_eq!(logits_p[k], logits[i]);
    }
    // pure function
    assert_eq!(model.forward(&batch).unwrap(), logits);
}

#[test]
fn softmax_examples() {
    assert_eq!(softmax(LogitPair::new(0.0, 0.0)), [0.5, 0.5]);
    let p = softmax(LogitPair::new(1000.0, 0.0));
    assert!(p[0] == 1.0 && p[1] >= 0.0 && p[1] < 1e-300);
    // 1 / (1 + e) and e / (1 + e), e = exp(1)
    let e = std::f64::consts::E;
    let p = softmax(LogitPair::new(1.0, 2.0));
    assert!((p[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
    assert!((p[0] - 0.268941).abs() < 1e-6 && (p[1] - 0.731059).abs() < 1e-6);
    assert!((p[0] + p[1] - 1.0).abs() < 1e-15);
}

#[test]
fn softmax_shift_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let l = LogitPair::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
        let c = rng.random_range(-50.0..50.0);
        let a = softmax(l);
        let b = softmax(LogitPair::new(l.logit_noncancer + c, l.logit_cancer + c));
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }
}

#[test]
fn cross_entropy_examples() {
    let ln2 = std::f64::consts::LN_2;
    assert!((cross_entropy(&[LogitPair::new(0.0, 0.0)], &[0]) - ln2).abs() < 1e-15);
    assert!((cross_entropy(&[LogitPair::new(0.0, 0.0)], &[1]) - ln2).abs() < 1e-15);
    assert!(cross_entropy(&[LogitPair::new(20.0, -20.0)], &[0]) < 1e-8);
    let e = std::f64::consts::E;
    let expected = -(e / (1.0 + e)).ln();
    let got = cross_entropy(&[LogitPair::new(1.0, 2.0)], &[1]);
    assert!((got - expected).abs() < 1e-15);
    assert!((got - 0.313262).abs() < 1e-6);
    assert!(cross_entropy(&[LogitPair::new(-3.0, 4.0), LogitPair::new(2.0, 2.5)], &[0, 1]) >= 0.0);
}

#[test]
fn argmax_examples_and_agreement_with_softmax() {
    assert_eq!(argmax(LogitPair::new(3.2, -1.0)), 0);
    assert_eq!(argmax(LogitPair::new(0.0, 0.0)), 0);
    assert_eq!(argmax(LogitPair::new(-1.0, 0.5)), 1);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..1000 {
        let l = LogitPair::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let p = softmax(l);
        let by_prob = if p[1] > p[0] { 1 } else { 0 };
        assert_eq!(argmax(l), by_prob);
    }
}

#[test]
fn predict_uses_argmax() {
    let mut model = TinyViT::new(small_config()).unwrap();
    randomize(&mut model, 0.5, 12);
    let batch = random_inputs(6, 16, 13);
    let logits = model.forward(&batch).unwrap();
    let preds = model.predict(&batch).unwrap();
    for (l, p) in logits.iter().zip(preds) {
        assert_eq!(argmax(*l), p);
    }
}

/// Central finite differences on the mean loss, one scalar at a time.
fn numerical_gradient(model: &TinyViT, batch: &[NormalizedTensor], labels: &[u8], step: f64) -> Vec<Vec<f64>> {
    let loss = |m: &TinyViT| cross_entropy(&m.forward(batch).unwrap(), labels);
    let mut probe = model.clone();
    let sizes: Vec<usize> = model.params.named().iter().map(|(_, s)| s.len()).collect();
    let mut out = Vec::new();
    for (t, &n) in sizes.iter().enumerate() {
        let mut g = Vec::with_capacity(n);
        for i in 0..n {
            let orig = probe.params.slices_mut()[t][i];
            probe.params.slices_mut()[t][i] = orig + step;
            let up = loss(&probe);
            probe.params.slices_mut()[t][i] = orig - step;
            let down = loss(&probe);
            probe.params.slices_mut()[t][i] = orig;
            g.push((up - down) / (2.0 * step));
        }
        out.push(g);
    }
    out
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut model = TinyViT::new(small_config()).unwrap();
    randomize(&mut model, 0.5, 21);
    let batch = random_inputs(2, 16, 22);
    let labels = [0u8, 1];
    let (loss, grads) = model.backward(&batch, &labels).unwrap();
    assert!((loss - cross_entropy(&model.forward(&batch).unwrap(), &labels)).abs() < 1e-14);
    let numeric = numerical_gradient(&model, &batch, &labels, 1e-4);
    let mut worst = 0.0f64;
    for ((name, analytic), numeric) in grads.named().into_iter().zip(numeric) {
        for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
            let scale = a.abs().max(n.abs()).max(1e-6);
            let rel = (a - n).abs() / scale;
            worst = worst.max(rel);
            assert!(rel < 1e-4, "{name}[{i}]: analytic {a:e} numeric {n:e} rel {rel:e}");
        }
    }
    eprintln!("worst relative gradient error {worst:e}");
}

#[test]
fn duplicated_batch_gives_same_gradients() {
    let mut model = TinyViT::new(small_config()).unwrap();
    randomize(&mut model, 0.5, 31);
    let batch = random_inputs(2, 16, 32);
    let labels = [1u8, 0];
    let (l1, g1) = model.backward(&batch, &labels).unwrap();
    let doubled: Vec<_> = batch.iter().flat_map(|x| [x.clone(), x.clone()]).collect();
    let (l2, g2) = model.backward(&doubled, &[1, 1, 0, 0]).unwrap();
    assert!((l1 - l2).abs() < 1e-14);
    for ((name, a), (_, b)) in g1.named().into_iter().zip(g2.named()) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-13 * x.abs().max(1e-300).max(1.0), "{name}");
        }
    }
}

#[test]
fn zero_head_gives_ln2_and_no_upstream_gradient() {
    let mut model = TinyViT::new(small_config()).unwrap();
    model.params.head_w.fill(0.0);
    model.params.head_b.fill(0.0);
    let batch = random_inputs(3, 16, 41);
    let (loss, grads) = model.backward(&batch, &[0, 1, 1]).unwrap();
    assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    for (name, g) in grads.named() {
        if name.starts_with("head_") {
            continue;
        }
        assert!(g.iter().all(|&v| v == 0.0), "{name} should receive no gradient");
    }
    assert!(grads.head_w.iter().any(|&v| v != 0.0));
}

#[test]
fn backward_is_deterministic() {
    let model = TinyViT::new(small_config()).unwrap();
    let batch = random_inputs(3, 16, 51);
    let a = model.backward(&batch, &[0, 1, 0]).unwrap();
    let b = model.backward(&batch, &[0, 1, 0]).unwrap();
    assert_eq!(a, b);
    assert!(model.backward(&batch, &[0, 1]).is_err());
    assert!(model.backward(&batch, &[0, 1, 2]).is_err());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let mut model = TinyViT::new(ViTConfig { image_size: 16, seed: 99, ..ViTConfig::default() }).unwrap();
    model.params.head_b = vec![f64::MIN_POSITIVE, -0.0];
    model.save(&path).unwrap();
    let back = TinyViT::load(&path).unwrap();
    assert_eq!(back.config(), model.config());
    for ((_, a), (_, b)) in back.params.named().into_iter().zip(model.params.named()) {
        assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    assert_eq!(back.checksum(), model.checksum());

    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 3);
    std::fs::write(&path, &bytes).unwrap();
    assert!(TinyViT::load(&path).is_err());
    std::fs::write(&path, b"garbage").unwrap();
    assert!(TinyViT::load(&path).is_err());
}
