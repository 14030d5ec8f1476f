mod common;

use std::io::Write;

use flate2::write::GzEncoder;
use flate2::Compression;
use prune_init::data::{labels_to_idx_bytes, load_split, DatasetName, Split};
use prune_init::experiment::{run_experiment, run_trial_observed, TrainingObserver};
use prune_init::{
    Architecture, ExperimentConfig, ExperimentData, FitnessVariant, MlpNetwork, Pruner,
    StrategyKind, TrialResult,
};

fn data() -> ExperimentData {
    ExperimentData::new(common::synthetic(400, 5, 1), common::synthetic(200, 5, 2)).unwrap()
}

fn base() -> ExperimentConfig {
    let mut c = ExperimentConfig {
        iterations: 120,
        batch_size: 16,
        trials: 2,
        loss_every: 5,
        eval_at: vec![30, 60],
        ..ExperimentConfig::default()
    };
    c.adam.lr = 0.01;
    c
}

fn trials(c: &ExperimentConfig, d: &ExperimentData) -> Vec<TrialResult> {
    run_experiment(c, d)
        .unwrap()
        .trials
        .into_iter()
        .map(|mut t| {
            t.wall_seconds = 0.0;
            t
        })
        .collect()
}

#[test]
fn none_matches_random_at_zero() {
    let d = data();
    for arch in [Architecture::Single, Architecture::ThreeLayer] {
        let mut none = base();
        none.arch = arch;
        none.strategy = StrategyKind::None;
        let mut random = none.clone();
        random.strategy = StrategyKind::Random;
        random.p = 0.0;
        assert_eq!(trials(&none, &d), trials(&random, &d));
    }
}

#[test]
fn kstarts_with_one_start_matches_random() {
    let d = data();
    for fitness in [FitnessVariant::Magnitude, FitnessVariant::Gradient, FitnessVariant::SumOfGradients] {
        let mut random = base();
        random.arch = Architecture::ThreeLayer;
        random.strategy = StrategyKind::Random;
        random.p = 0.6;
        let mut k1 = random.clone();
        k1.strategy = StrategyKind::KStarts;
        k1.k = 1;
        k1.fitness = fitness;
        assert_eq!(trials(&random, &d), trials(&k1, &d));
    }
}

#[test]
fn combination_without_dissipation_matches_kstarts() {
    let d = data();
    let mut kstarts = base();
    kstarts.arch = Architecture::ThreeLayer;
    kstarts.k = 6;
    kstarts.p = 0.3;
    let mut comb = kstarts.clone();
    comb.strategy = StrategyKind::Combination;
    comb.epsilon = 0.0;
    assert_eq!(trials(&kstarts, &d), trials(&comb, &d));
}

#[test]
fn trials_are_reproducible_and_distinct() {
    let d = data();
    let c = base();
    let a = trials(&c, &d);
    assert_eq!(a, trials(&c, &d));
    assert_ne!(a[0].final_masks, a[1].final_masks);
    let mut shifted = c.clone();
    shifted.base_seed = 1;
    // trial 1 of seed 0 is trial 0 of seed 1
    let b = trials(&shifted, &d);
    assert_eq!(a[1].checkpoints, b[0].checkpoints);
}

#[test]
fn learning_improves_over_chance() {
    let d = data();
    let mut c = base();
    c.strategy = StrategyKind::None;
    c.iterations = 300;
    let r = run_experiment(&c, &d).unwrap();
    assert!(r.final_aggregate().mean > 0.5, "{}", r.final_aggregate().mean);
    let curve = &r.trials[0].loss_curve;
    assert!(curve.last().unwrap().1 < curve.first().unwrap().1);
}

struct ZeroCheck(usize);

impl TrainingObserver for ZeroCheck {
    fn after_step(&mut self, _: u64, net: &MlpNetwork, pruner: &Pruner) -> prune_init::Result<()> {
        let masks = pruner.effective_masks(&net.weight_shapes());
        for (layer, mask) in net.layers().iter().zip(&masks) {
            for (i, w) in layer.weights.data().iter().enumerate() {
                if !mask.is_active(i) {
                    assert_eq!(*w, 0.0);
                    self.0 += 1;
                }
            }
        }
        Ok(())
    }
}

#[test]
fn masked_weights_stay_zero_for_every_strategy() {
    let d = data();
    for strategy in [StrategyKind::Random, StrategyKind::KStarts, StrategyKind::Dissipating, StrategyKind::Combination] {
        let mut c = base();
        c.arch = Architecture::ThreeLayer;
        c.strategy = strategy;
        c.dissipation_target = 0.4;
        c.iterations = 100;
        let mut probe = ZeroCheck(0);
        let t = run_trial_observed(&c, 0, &d, &mut probe).unwrap();
        assert!(probe.0 > 0, "{strategy}");
        assert!(t.overall_sparsity() > 0.2, "{strategy}: {}", t.overall_sparsity());
    }
}

#[test]
fn autoencoder_reconstruction_improves() {
    let d = data();
    let mut c = base();
    c.arch = Architecture::Autoencoder;
    c.strategy = StrategyKind::KStarts;
    c.trials = 1;
    c.iterations = 200;
    c.eval_at = vec![1];
    let t = &run_experiment(&c, &d).unwrap().trials[0];
    assert!(t.final_metric() < t.checkpoints[0].1);
}

#[test]
fn gzip_and_plain_files_load_identically() {
    let dir = tempfile::tempdir().unwrap();
    common::write_fixture(dir.path(), 50, 20, 6);
    let plain = load_split(dir.path(), DatasetName::Mnist, Split::Train).unwrap();

    let gz_dir = tempfile::tempdir().unwrap();
    let (raw, labels) = common::synthetic_raw(50, 6, 1);
    for (name, bytes) in [
        ("train-images-idx3-ubyte.gz", raw.to_idx_bytes()),
        ("train-labels-idx1-ubyte.gz", labels_to_idx_bytes(&labels)),
    ] {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&bytes).unwrap();
        std::fs::write(gz_dir.path().join(name), enc.finish().unwrap()).unwrap();
    }
    let gz = load_split(gz_dir.path(), DatasetName::Mnist, Split::Train).unwrap();
    assert_eq!(plain.labels(), gz.labels());
    assert_eq!(plain.images(), gz.images());
    assert_eq!(plain.dim(), 36);
}
