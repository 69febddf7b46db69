use wembed::dist::{sample, Corpus, CorpusConfig, DistributionSpec, SampleSet};
use wembed::nn::{euclidean, Activation, ArchConfig, EncoderParams, InitMode, Pooling};
use wembed::ot::SinkhornOptions;
use wembed::train::{
    all_pairs, loss_and_grad, loss_full, loss_wass, precompute_targets, train, Adam, AdamConfig, LrSchedule, PairBatch,
    RegMode, RegWeights, TargetCache, TrainConfig, TrainData,
};
use wembed::{Error, Exec};

fn mean_network() -> EncoderParams {
    let arch = ArchConfig {
        input_dim: 1,
        phi_widths: vec![1],
        rho_hidden: vec![],
        output_dim: 1,
        pooling: Pooling::Mean,
        activation: Activation::Identity,
    };
    EncoderParams::init(&arch, 0, InitMode::Identity).unwrap()
}

fn points(xs: &[f64]) -> SampleSet {
    SampleSet::from_points(1, xs.to_vec()).unwrap()
}

#[test]
fn wass_loss_is_zero_on_a_perfect_fit() {
    let sets = vec![points(&[0.0]), points(&[1.0]), points(&[3.0])];
    let batch = PairBatch::new(sets, vec![(0, 1), (0, 2), (1, 2)], vec![1.0, 3.0, 2.0]).unwrap();
    assert_eq!(loss_wass(&mean_network(), &batch).unwrap(), 0.0);
}

#[test]
fn wass_loss_single_pair_hand_value() {
    let batch = PairBatch::new(vec![points(&[0.0]), points(&[2.0])], vec![(0, 1)], vec![1.0]).unwrap();
    assert_eq!(loss_wass(&mean_network(), &batch).unwrap(), 1.0);
}

fn random_batch() -> (EncoderParams, PairBatch) {
    let arch = ArchConfig { input_dim: 1, phi_widths: vec![8, 8], rho_hidden: vec![4], ..ArchConfig::default() };
    let params = EncoderParams::init(&arch, 3, InitMode::Xavier).unwrap();
    let sets: Vec<SampleSet> =
        (0..4).map(|k| sample(&DistributionSpec::normal(k as f64 * 0.5, 1.0), 20, k).unwrap()).collect();
    let batch = PairBatch::new(sets, all_pairs(4), vec![0.5, 1.0, 1.5, 0.5, 1.0, 0.5])
        .unwrap()
        .with_translation(&[1.25])
        .unwrap()
        .with_scaling(-0.75)
        .unwrap();
    (params, batch)
}

#[test]
fn scripted_recomputation_matches_tape_loss() {
    let (params, batch) = random_batch();
    let embed = |sets: &[SampleSet]| -> Vec<Vec<f64>> { sets.iter().map(|s| params.encode(s).unwrap()).collect() };
    let base = embed(&batch.sets);
    let moved = embed(batch.translated.as_ref().unwrap());
    let (scaled_sets, a) = batch.scaled.as_ref().unwrap();
    let stretched = embed(scaled_sets);
    let n = batch.pairs.len() as f64;
    let (mut wass, mut trans, mut scale) = (0.0, 0.0, 0.0);
    for (&(i, j), &t) in batch.pairs.iter().zip(&batch.targets) {
        let d = euclidean(&base[i], &base[j]);
        wass += (d - t).powi(2) / n;
        trans += (euclidean(&moved[i], &moved[j]) - d).powi(2) / n;
        scale += (euclidean(&stretched[i], &stretched[j]) - a.abs() * d).powi(2) / n;
    }
    let w = RegWeights { translation: 0.3, scaling: 2.0 };
    let terms = loss_full(&params, &batch, RegMode::Full, w).unwrap();
    assert!((terms.wass - wass).abs() < 1e-9);
    assert!((terms.translation - trans).abs() < 1e-9);
    assert!((terms.scaling - scale).abs() < 1e-9);
    assert!((terms.total - (wass + 0.3 * trans + 2.0 * scale)).abs() < 1e-9);

    let scaling_only = loss_full(&params, &batch, RegMode::ScalingOnly, w).unwrap();
    assert!((scaling_only.total - (wass + 2.0 * scale)).abs() < 1e-9);
}

#[test]
fn unregularized_mode_equals_wass_loss() {
    let (params, batch) = random_batch();
    let none = loss_full(&params, &batch, RegMode::None, RegWeights::default()).unwrap();
    assert_eq!(none.total, loss_wass(&params, &batch).unwrap());
    assert_eq!(none.translation, 0.0);
    assert_eq!(none.scaling, 0.0);
}

#[test]
fn identity_transforms_give_zero_regularizers() {
    let (params, batch) = random_batch();
    let batch = PairBatch::new(batch.sets, batch.pairs, batch.targets)
        .unwrap()
        .with_translation(&[0.0])
        .unwrap()
        .with_scaling(1.0)
        .unwrap();
    let terms = loss_full(&params, &batch, RegMode::Full, RegWeights::default()).unwrap();
    assert_eq!(terms.translation, 0.0);
    assert_eq!(terms.scaling, 0.0);
}

#[test]
fn missing_variants_are_rejected() {
    let (params, batch) = random_batch();
    let bare = PairBatch::new(batch.sets, batch.pairs, batch.targets).unwrap();
    assert!(matches!(loss_full(&params, &bare, RegMode::Full, RegWeights::default()), Err(Error::InvalidArgument(_))));
}

#[test]
fn bad_pairs_and_targets_are_rejected() {
    let sets = vec![points(&[0.0]), points(&[1.0])];
    assert!(PairBatch::new(sets.clone(), vec![(1, 1)], vec![0.0]).is_err());
    assert!(PairBatch::new(sets.clone(), vec![(0, 2)], vec![0.0]).is_err());
    assert!(PairBatch::new(sets.clone(), vec![(0, 1)], vec![-1.0]).is_err());
    assert!(PairBatch::new(sets, vec![(0, 1)], vec![]).is_err());
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let (params, batch) = random_batch();
    let (_, grads) = loss_and_grad(&params, &batch, RegMode::Full, RegWeights::default()).unwrap();
    let mut stepped = params.clone();
    let mut adam = Adam::new(AdamConfig::default(), &stepped);
    adam.step(&mut stepped, &grads, 0.0);
    assert_eq!(stepped, params);
}

#[test]
fn small_gradient_step_decreases_the_loss() {
    let (params, batch) = random_batch();
    let w = RegWeights::default();
    let (before, grads) = loss_and_grad(&params, &batch, RegMode::Full, w).unwrap();
    let mut moved = params.clone();
    for (p, g) in moved.tensors_mut().zip(&grads) {
        for (x, d) in p.data_mut().iter_mut().zip(g.data()) {
            *x -= 1e-3 * d;
        }
    }
    let after = loss_full(&moved, &batch, RegMode::Full, w).unwrap();
    assert!(after.total < before.total, "{} !< {}", after.total, before.total);

    let mut adam_moved = params.clone();
    Adam::new(AdamConfig::default(), &adam_moved).step(&mut adam_moved, &grads, 1e-4);
    assert!(loss_full(&adam_moved, &batch, RegMode::Full, w).unwrap().total < before.total);
}

fn tiny_setup() -> (Corpus, TargetCache, TrainConfig) {
    let cfg = CorpusConfig {
        name: "tiny".into(),
        specs: vec![
            DistributionSpec::normal(0.0, 1.0),
            DistributionSpec::normal(2.0, 0.5),
            DistributionSpec::uniform(-1.0, 1.0),
        ],
        draws_per_spec: 2,
        sample_size: 12,
        seed: 5,
    };
    let corpus = Corpus::generate(&cfg).unwrap();
    let opts = SinkhornOptions::default();
    let cache = precompute_targets(&corpus.sets, &all_pairs(corpus.len()), 1.0, &opts, Exec::default()).unwrap();
    let config = TrainConfig {
        epochs: 4,
        batch_size: 4,
        arch: ArchConfig { phi_widths: vec![8, 8], rho_hidden: vec![4], ..ArchConfig::default() },
        patience: None,
        schedule: LrSchedule::Constant,
        seed: 9,
        ..TrainConfig::default()
    };
    (corpus, cache, config)
}

#[test]
fn training_is_deterministic_and_resumable() {
    let (corpus, cache, config) = tiny_setup();
    let data = TrainData { corpus: &corpus, targets: &cache, heldout: None };
    let a = train(&config, &data, None).unwrap();
    let b = train(&config, &data, None).unwrap();
    assert_eq!(a.checkpoint.params, b.checkpoint.params);
    assert_eq!(a.log, b.log);
    assert_eq!(a.checkpoint.epoch, 4);

    let half = TrainConfig { epochs: 2, ..config.clone() };
    let first = train(&half, &data, None).unwrap();
    let resumed = train(&config, &data, Some(first.checkpoint)).unwrap();
    assert_eq!(resumed.checkpoint.params, a.checkpoint.params);
    assert_eq!(resumed.log, a.log[2..]);
}

#[test]
fn training_rejects_eval_only_and_duplicate_sets() {
    let (corpus, cache, config) = tiny_setup();
    let mut bad = corpus.clone();
    bad.sets[0].source = DistributionSpec::dirac_1d(0.0);
    let data = TrainData { corpus: &bad, targets: &cache, heldout: None };
    assert!(matches!(train(&config, &data, None), Err(Error::EvalOnlyFamily(_))));

    let mut dup = corpus.clone();
    dup.sets[1] = dup.sets[0].clone();
    let data = TrainData { corpus: &dup, targets: &cache, heldout: None };
    assert!(matches!(train(&config, &data, None), Err(Error::InvalidArgument(_))));
}

#[test]
fn training_rejects_mismatched_target_cache() {
    let (corpus, cache, config) = tiny_setup();
    let data = TrainData { corpus: &corpus, targets: &cache, heldout: None };
    let other = TrainConfig { p: 2.0, ..config };
    assert!(train(&other, &data, None).is_err());
}

#[test]
fn heldout_metrics_are_logged() {
    let (corpus, cache, config) = tiny_setup();
    let held: Vec<SampleSet> = corpus.sets[..3].to_vec();
    let held_cache =
        precompute_targets(&held, &all_pairs(3), 1.0, &SinkhornOptions::default(), Exec::Sequential).unwrap();
    let data = TrainData { corpus: &corpus, targets: &cache, heldout: Some((&held, &held_cache)) };
    let out = train(&config, &data, None).unwrap();
    assert!(out.log.iter().all(|e| e.heldout_r.is_some() && e.heldout_rmse.is_some()));
}

#[test]
fn cosine_schedule_endpoints() {
    let cfg = TrainConfig {
        epochs: 10,
        learning_rate: 1e-3,
        schedule: LrSchedule::Cosine { min_lr: 1e-5 },
        ..TrainConfig::default()
    };
    assert_eq!(cfg.lr_at(0), 1e-3);
    assert!((cfg.lr_at(10) - 1e-5).abs() < 1e-18);
    assert!((cfg.lr_at(5) - 0.5 * (1e-3 + 1e-5)).abs() < 1e-15);
}
