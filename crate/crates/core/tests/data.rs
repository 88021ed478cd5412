use std::collections::HashSet;
use std::path::Path;

use proptest::prelude::*;
use ttstack_core::data::{make_batches, ClassMapping, Dataset, GrayImage, LabeledSample, Mode, PipelineConfig};
use ttstack_core::synth::SyntheticSpec;
use ttstack_core::Error;

fn write_images(dir: &Path, n: usize, value: u8) {
    std::fs::create_dir_all(dir).unwrap();
    for i in 0..n {
        GrayImage::filled(4, 3, value + i as u8).unwrap().write_pgm(&dir.join(format!("im{i}.pgm"))).unwrap();
    }
}

#[test]
fn loads_two_class_tree() {
    let root = tempfile::tempdir().unwrap();
    write_images(&root.path().join("Cancer"), 2, 200);
    write_images(&root.path().join("NonCancer"), 3, 10);
    std::fs::write(root.path().join("NonCancer/notes.txt"), "ignored").unwrap();

    let ds = Dataset::load(root.path()).unwrap();
    assert_eq!(ds.len(), 5);
    assert_eq!(ds.class_counts(), [3, 2]);
    assert_eq!(ds.mapping, ClassMapping::default());
    let ids: Vec<&str> = ds.samples().iter().map(|s| s.id.as_str()).collect();
    assert_eq!(ids, ["Cancer/im0.pgm", "Cancer/im1.pgm", "NonCancer/im0.pgm", "NonCancer/im1.pgm", "NonCancer/im2.pgm"]);
    assert_eq!(ds.labels(), [1, 1, 0, 0, 0]);
    assert_eq!(ds.samples()[1].image.pixels()[0], 201);

    assert_eq!(Dataset::load(root.path()).unwrap(), ds);
}

#[test]
fn empty_class_loads_but_cannot_split() {
    let root = tempfile::tempdir().unwrap();
    write_images(&root.path().join("Cancer"), 0, 0);
    write_images(&root.path().join("NonCancer"), 4, 0);
    let ds = Dataset::load(root.path()).unwrap();
    assert_eq!(ds.class_counts(), [4, 0]);
    assert!(ds.stratified_split(0.8, 1).is_err());
}

#[test]
fn structural_errors() {
    let root = tempfile::tempdir().unwrap();
    write_images(&root.path().join("Cancer"), 1, 0);
    assert!(matches!(Dataset::load(root.path()), Err(Error::Data(_))));
    write_images(&root.path().join("NonCancer"), 1, 0);
    write_images(&root.path().join("Other"), 1, 0);
    assert!(matches!(Dataset::load(root.path()), Err(Error::Data(_))));
    assert!(Dataset::load(&root.path().join("missing")).is_err());
}

#[test]
fn undecodable_file_is_named() {
    let root = tempfile::tempdir().unwrap();
    write_images(&root.path().join("Cancer"), 1, 0);
    write_images(&root.path().join("NonCancer"), 1, 0);
    std::fs::write(root.path().join("Cancer/broken.pgm"), b"P2 nope").unwrap();
    let err = Dataset::load(root.path()).unwrap_err().to_string();
    assert!(err.contains("broken.pgm"), "{err}");
}

#[test]
fn synthetic_corpus_round_trips_through_disk() {
    let root = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec { negatives: 5, positives: 3, size: 8, ..SyntheticSpec::default() };
    let written = spec.write_corpus(root.path()).unwrap();
    assert_eq!(Dataset::load(root.path()).unwrap(), written);
    assert_eq!(spec.generate().unwrap(), written);
}

#[test]
fn corpus_split_and_balance_counts() {
    let ds = SyntheticSpec { size: 4, ..SyntheticSpec::default() }.generate().unwrap();
    assert_eq!(ds.class_counts(), [620, 125]);
    let (train, val) = ds.stratified_split(0.8, 42).unwrap();
    assert_eq!((train.class_counts(), val.class_counts()), ([496, 100], [124, 25]));
    let balanced = train.balance_by_upsampling(42).unwrap();
    assert_eq!(balanced.class_counts(), [496, 496]);
    assert_eq!(balanced.len(), 992);
    assert_eq!(val.class_counts(), [124, 25]);
    // the published training accuracies are whole sample counts out of 992
    assert_eq!((0.997984f64 * 992.0).round(), 990.0);
    assert!((0.997984f64 * 992.0 - 990.0).abs() < 1e-3);
    assert!((0.996976f64 * 992.0 - 989.0).abs() < 1e-3);
}

fn toy(n0: usize, n1: usize) -> Dataset {
    let mut samples = Vec::new();
    for (label, n) in [(0u8, n0), (1u8, n1)] {
        for i in 0..n {
            let img = GrayImage::filled(3, 3, (i % 200) as u8 + 50 * label).unwrap();
            samples.push(LabeledSample::new(format!("c{label}/{i:04}"), img, label).unwrap());
        }
    }
    Dataset::new(samples, ClassMapping::default()).unwrap()
}

fn ids(ds: &Dataset) -> HashSet<String> {
    ds.samples().iter().map(|s| s.id.clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_is_a_stratified_partition(n0 in 2usize..80, n1 in 2usize..80, ratio in 0.05f64..0.95, seed in any::<u64>()) {
        let ds = toy(n0, n1);
        let (train, val) = ds.stratified_split(ratio, seed).unwrap();
        let (a, b) = (ids(&train), ids(&val));
        prop_assert!(a.is_disjoint(&b));
        prop_assert_eq!(a.union(&b).cloned().collect::<HashSet<_>>(), ids(&ds));
        for (c, &n) in [n0, n1].iter().enumerate() {
            let t = train.class_counts()[c] as f64;
            prop_assert!((t - ratio * n as f64).abs() <= 1.0);
            prop_assert!(t >= 1.0 && val.class_counts()[c] >= 1);
        }
        let (train2, val2) = ds.stratified_split(ratio, seed).unwrap();
        prop_assert_eq!(train, train2);
        prop_assert_eq!(val, val2);
    }

    #[test]
    fn balancing_equalises_from_the_minority(n0 in 1usize..60, n1 in 1usize..60, seed in any::<u64>()) {
        let ds = toy(n0, n1);
        let out = ds.balance_by_upsampling(seed).unwrap();
        let m = n0.max(n1);
        prop_assert_eq!(out.class_counts(), [m, m]);
        prop_assert_eq!(&out.samples()[..ds.len()], ds.samples());
        let minority = u8::from(n1 < n0);
        let originals = ids(&ds);
        for s in &out.samples()[ds.len()..] {
            prop_assert_eq!(s.label, minority);
            prop_assert!(originals.contains(s.origin_id()));
        }
    }

    #[test]
    fn training_epoch_covers_each_sample_once(n in 1usize..40, batch in 1usize..16, epoch in 0usize..5, seed in any::<u64>()) {
        let ds = toy(n, n);
        let cfg = PipelineConfig { target_size: 5, batch_size: batch, ..PipelineConfig::default() };
        let batches = make_batches(&ds, &cfg, Mode::Train { epoch }, seed).unwrap();
        let seen: Vec<String> = batches.iter().flat_map(|b| b.ids.clone()).collect();
        prop_assert_eq!(seen.len(), ds.len());
        prop_assert_eq!(seen.iter().cloned().collect::<HashSet<_>>(), ids(&ds));
        prop_assert!(batches[..batches.len() - 1].iter().all(|b| b.len() == batch));
        for b in &batches {
            for x in &b.inputs {
                prop_assert_eq!(x.shape(), (1, 5, 5));
                prop_assert!(x.values().iter().all(|v| (-1.0..=1.0).contains(v)));
            }
        }
        prop_assert_eq!(make_batches(&ds, &cfg, Mode::Train { epoch }, seed).unwrap(), batches);
    }
}
