//! Seeded multi-trial experiments: training loop, aggregation, sweeps and
//! CSV/artifact output.
//!
//! Trial `i` of an experiment uses seed `base_seed + i`. Independent ChaCha
//! streams of that seed drive weight init, mask generation, batch order and
//! training-subset sampling, so trials can run in any order or in parallel
//! without changing results.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::data::{load_split, one_hot, BatchPlan, Dataset, Split, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::masks::SparseMask;
use crate::matrix::Matrix;
use crate::network::{accuracy, nmse, MlpNetwork};
use crate::optimizer::AdamState;
use crate::strategies::{random_dropout, DissipationState, KStartsState, Pruner, StrategyKind};

const STREAM_INIT: u64 = 0;
const STREAM_MASKS: u64 = 1;
const STREAM_BATCHES: u64 = 2;
const STREAM_SUBSET: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Train split plus a pre-built test matrix shared by every trial.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train: Dataset,
    pub test: Dataset,
    test_images: Matrix,
}

impl ExperimentData {
    pub fn new(train: Dataset, test: Dataset) -> Result<Self> {
        if train.dim() != test.dim() {
            return Err(Error::InvalidValue(format!(
                "train dim {} differs from test dim {}",
                train.dim(),
                test.dim()
            )));
        }
        let test_images = test.images();
        Ok(Self {
            train,
            test,
            test_images,
        })
    }

    /// Loads both splits named by `config`, truncating the test split to
    /// `config.test_size` samples when set.
    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        let train = load_split(&config.data_dir, config.dataset, Split::Train)?;
        let mut test = load_split(&config.data_dir, config.dataset, Split::Test)?;
        if let Some(n) = config.test_size {
            let n = n.min(test.len());
            test = test.select(&(0..n).collect::<Vec<_>>());
        }
        Self::new(train, test)
    }

    pub fn test_images(&self) -> &Matrix {
        &self.test_images
    }
}

/// What the test metric measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    /// Fraction of correctly classified test samples.
    Accuracy,
    /// Reconstruction NMSE of the test images.
    Nmse,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::Nmse => "nmse",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub metric: MetricKind,
    /// `(iteration, test metric)` at every checkpoint, ascending.
    pub checkpoints: Vec<(u64, f64)>,
    /// Zero fraction of each layer's effective mask at the end of training.
    pub layer_sparsity: Vec<f64>,
    /// `(iteration, training batch loss)` samples.
    pub loss_curve: Vec<(u64, f64)>,
    pub final_masks: Vec<SparseMask>,
    pub wall_seconds: f64,
}

impl TrialResult {
    pub fn final_metric(&self) -> f64 {
        self.checkpoints.last().map_or(f64::NAN, |c| c.1)
    }

    pub fn metric_at(&self, iteration: u64) -> Option<f64> {
        self.checkpoints
            .iter()
            .find(|c| c.0 == iteration)
            .map(|c| c.1)
    }

    /// Zero fraction over all weights of all layers.
    pub fn overall_sparsity(&self) -> f64 {
        let (zeros, total) = self
            .final_masks
            .iter()
            .fold((0, 0), |(z, t), m| (z + m.zero_count(), t + m.len()));
        if total == 0 {
            0.0
        } else {
            zeros as f64 / total as f64
        }
    }
}

fn build_pruner(
    config: &ExperimentConfig,
    shapes: &[(usize, usize)],
    rng: &mut ChaCha8Rng,
) -> Result<Pruner> {
    Ok(match config.strategy {
        StrategyKind::None => Pruner::None,
        StrategyKind::Random => {
            Pruner::Random(random_dropout(shapes, config.p, config.exact_masks, rng)?)
        }
        StrategyKind::KStarts => Pruner::KStarts(KStartsState::new(shapes, config.kstarts_config(), rng)?),
        StrategyKind::Dissipating => {
            Pruner::Dissipating(DissipationState::new(shapes, config.dissipation_config())?)
        }
        StrategyKind::Combination => Pruner::Combination {
            kstarts: KStartsState::new(shapes, config.kstarts_config(), rng)?,
            dissipation: DissipationState::new(shapes, config.dissipation_config())?,
        },
    })
}

fn evaluate(net: &MlpNetwork, data: &ExperimentData, autoencoder: bool) -> Result<f64> {
    let x = data.test_images();
    let y = net.predict(x)?;
    if autoencoder {
        nmse(&y, x)
    } else {
        accuracy(&y, data.test.labels())
    }
}

/// Hook for observing a trial's network after each step.
pub trait TrainingObserver {
    fn after_step(&mut self, iteration: u64, net: &MlpNetwork, pruner: &Pruner) -> Result<()>;
}

impl TrainingObserver for () {
    fn after_step(&mut self, _: u64, _: &MlpNetwork, _: &Pruner) -> Result<()> {
        Ok(())
    }
}

/// Runs one seeded trial: mask init, training with strategy hooks, evaluation.
pub fn run_trial(config: &ExperimentConfig, trial: usize, data: &ExperimentData) -> Result<TrialResult> {
    run_trial_observed(config, trial, data, &mut ())
}

pub fn run_trial_observed(
    config: &ExperimentConfig,
    trial: usize,
    data: &ExperimentData,
    observer: &mut dyn TrainingObserver,
) -> Result<TrialResult> {
    config.validate()?;
    let start = Instant::now();
    let seed = config.base_seed.wrapping_add(trial as u64);
    let mut init_rng = stream(seed, STREAM_INIT);
    let mut mask_rng = stream(seed, STREAM_MASKS);
    let mut batch_rng = stream(seed, STREAM_BATCHES);
    let mut subset_rng = stream(seed, STREAM_SUBSET);

    let train: Cow<'_, Dataset> = match config.train_size {
        Some(n) => Cow::Owned(data.train.subset(n, &mut subset_rng)?),
        None => Cow::Borrowed(&data.train),
    };
    let autoencoder = config.arch.is_autoencoder();
    let dims = config.arch.dims(train.dim(), NUM_CLASSES);
    let mut net = MlpNetwork::new(&dims, config.lambda, &mut init_rng)?;
    let shapes = net.weight_shapes();
    let mut adam = AdamState::new(net.layers(), config.adam)?;
    let mut pruner = build_pruner(config, &shapes, &mut mask_rng)?;
    pruner.initialize(net.layers_mut(), &mut adam)?;

    let mut plan = BatchPlan::new(train.len(), config.batch_size)?;
    let checkpoints = config.checkpoints();
    let mut next_checkpoint = 0;
    let mut results = Vec::with_capacity(checkpoints.len());
    let mut loss_curve = Vec::new();

    for iteration in 1..=config.iterations {
        let indices = plan.next_batch(&mut batch_rng);
        let x = train.batch(indices);
        let y = if autoencoder {
            x.clone()
        } else {
            one_hot(&train.batch_labels(indices), NUM_CLASSES)?
        };
        let trace = net.forward(&x)?;
        if iteration % config.loss_every == 0 || iteration == 1 {
            loss_curve.push((iteration, nmse(trace.output(), &y)? + net.l1_penalty()));
        }
        let grads = net.backward(&trace, &y)?;
        pruner.observe_gradients(&grads)?;
        adam.step(net.layers_mut(), &grads)?;
        pruner.after_step(net.layers_mut(), &mut adam, iteration, plan.at_epoch_end())?;
        observer.after_step(iteration, &net, &pruner)?;

        if checkpoints.get(next_checkpoint) == Some(&iteration) {
            results.push((iteration, evaluate(&net, data, autoencoder)?));
            next_checkpoint += 1;
        }
    }

    let final_masks = pruner.effective_masks(&shapes);
    Ok(TrialResult {
        trial,
        seed,
        metric: if autoencoder {
            MetricKind::Nmse
        } else {
            MetricKind::Accuracy
        },
        checkpoints: results,
        layer_sparsity: final_masks.iter().map(SparseMask::sparsity).collect(),
        loss_curve,
        final_masks,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Mean and sample standard deviation of one metric over trials.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub config: ExperimentConfig,
    pub iterations: u64,
    pub metric: MetricKind,
    pub trials: usize,
    pub mean: f64,
    /// `n - 1` denominator; 0 when only one trial ran.
    pub std: f64,
    pub single_trial: bool,
    pub min: f64,
    pub max: f64,
    pub mean_sparsity: f64,
}

/// Mean and sample (n−1) standard deviation; std is 0 for one value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

pub fn aggregate(config: &ExperimentConfig, trials: &[TrialResult]) -> Vec<AggregateResult> {
    let Some(first) = trials.first() else {
        return Vec::new();
    };
    let sparsities: Vec<f64> = trials.iter().map(TrialResult::overall_sparsity).collect();
    let (mean_sparsity, _) = mean_std(&sparsities);
    first
        .checkpoints
        .iter()
        .map(|&(iteration, _)| {
            let values: Vec<f64> = trials
                .iter()
                .map(|t| t.metric_at(iteration).unwrap_or(f64::NAN))
                .collect();
            let (mean, std) = mean_std(&values);
            AggregateResult {
                config: config.clone(),
                iterations: iteration,
                metric: first.metric,
                trials: values.len(),
                mean,
                std,
                single_trial: values.len() == 1,
                min: values.iter().copied().fold(f64::INFINITY, f64::min),
                max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean_sparsity,
            }
        })
        .collect()
}

/// All trials of one configuration and their per-checkpoint aggregates.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialResult>,
    pub aggregates: Vec<AggregateResult>,
}

impl ExperimentResult {
    pub fn final_aggregate(&self) -> &AggregateResult {
        self.aggregates.last().expect("at least one checkpoint")
    }

    pub fn aggregate_at(&self, iteration: u64) -> Option<&AggregateResult> {
        self.aggregates.iter().find(|a| a.iterations == iteration)
    }
}

/// Runs `config.trials` trials (in parallel) and aggregates them in trial order.
pub fn run_experiment(config: &ExperimentConfig, data: &ExperimentData) -> Result<ExperimentResult> {
    config.validate()?;
    let outcomes: Vec<Result<TrialResult>> = (0..config.trials)
        .into_par_iter()
        .map(|i| run_trial(config, i, data))
        .collect();
    let mut trials = Vec::with_capacity(outcomes.len());
    for (i, r) in outcomes.into_iter().enumerate() {
        trials.push(r.map_err(|e| Error::Trial {
            trial: i,
            source: Box::new(e),
        })?);
    }
    let aggregates = aggregate(config, &trials);
    Ok(ExperimentResult {
        config: config.clone(),
        trials,
        aggregates,
    })
}

/// One experiment per `(strategy, p)`. For the dissipating strategy `p` is
/// its sparsity floor; `none` ignores `p`.
pub fn sweep_p(
    base: &ExperimentConfig,
    strategies: &[StrategyKind],
    p_list: &[f64],
    data: &ExperimentData,
) -> Result<Vec<ExperimentResult>> {
    let mut out = Vec::with_capacity(strategies.len() * p_list.len());
    for &strategy in strategies {
        for &p in p_list {
            let mut c = base.clone();
            c.strategy = strategy;
            if strategy == StrategyKind::Dissipating {
                c.dissipation_target = p;
            } else {
                c.p = p;
            }
            out.push(run_experiment(&c, data)?);
        }
    }
    Ok(out)
}

/// One kstarts experiment per `k`.
pub fn sweep_k(base: &ExperimentConfig, k_list: &[usize], data: &ExperimentData) -> Result<Vec<ExperimentResult>> {
    k_list
        .iter()
        .map(|&k| {
            let mut c = base.clone();
            c.k = k;
            run_experiment(&c, data)
        })
        .collect()
}

/// Accuracy after a fixed number of iterations on per-trial training subsets
/// of each size in `n_list`, for each `p` in `p_list` (`p = 0` runs unpruned).
pub fn learning_curve(
    base: &ExperimentConfig,
    n_list: &[usize],
    p_list: &[f64],
    data: &ExperimentData,
) -> Result<Vec<(usize, ExperimentResult)>> {
    let mut out = Vec::new();
    for &n in n_list {
        if n > data.train.len() {
            return Err(Error::Config(format!(
                "learning-curve size {n} exceeds {} training samples",
                data.train.len()
            )));
        }
        for &p in p_list {
            let mut c = base.clone();
            c.train_size = if n == data.train.len() { None } else { Some(n) };
            c.p = p;
            if p == 0.0 {
                c.strategy = StrategyKind::None;
            }
            out.push((n, run_experiment(&c, data)?));
        }
    }
    Ok(out)
}

pub const TABLE1_ITERATIONS: [u64; 4] = [10, 100, 1_000, 10_000];
pub const TABLE1_KS: [usize; 4] = [1, 10, 50, 100];

/// Settings applied before the config file for the iterations × k grid:
/// 784-10, ten trials, single-sample Adam updates at lr 0.01.
pub const TABLE1_PRESET: &[(&str, &str)] = &[
    ("arch", "784-10"),
    ("trials", "10"),
    ("lr", "0.01"),
    ("batch-size", "1"),
];

/// Settings applied before the config file for sparsity sweeps: 784-10,
/// ten trials, 2000 steps of batch 64 (a little over two epochs of MNIST,
/// so dissipating gradients gets both of its pruning epochs).
pub const SWEEP_PRESET: &[(&str, &str)] = &[
    ("arch", "784-10"),
    ("trials", "10"),
    ("iterations", "2000"),
    ("batch-size", "64"),
];

/// `ExperimentConfig::default()` with `preset` applied.
pub fn preset_config(preset: &[(&str, &str)]) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig::default();
    for (k, v) in preset {
        c.set(k, v)?;
    }
    Ok(c)
}

/// Configurations of the iterations × (k, p) accuracy grid: an unpruned
/// baseline and kstarts at `p = 0.5` for each `k`. Each configuration is
/// trained once to the largest iteration count and evaluated at every row.
pub fn table1_configs(base: &ExperimentConfig, iterations: &[u64], ks: &[usize]) -> Vec<ExperimentConfig> {
    let max_iter = iterations.iter().copied().max().unwrap_or(base.iterations);
    let mut baseline = base.clone();
    baseline.strategy = StrategyKind::None;
    baseline.p = 0.0;
    baseline.iterations = max_iter;
    baseline.eval_at = iterations.to_vec();
    let mut configs = vec![baseline];
    for &k in ks {
        let mut c = base.clone();
        c.strategy = StrategyKind::KStarts;
        c.p = 0.5;
        c.k = k;
        c.iterations = max_iter;
        c.eval_at = iterations.to_vec();
        configs.push(c);
    }
    configs
}

pub fn table1(
    base: &ExperimentConfig,
    iterations: &[u64],
    ks: &[usize],
    data: &ExperimentData,
) -> Result<Vec<ExperimentResult>> {
    table1_configs(base, iterations, ks)
        .iter()
        .map(|c| run_experiment(c, data))
        .collect()
}

/// Header of the aggregate CSV.
pub const AGGREGATE_HEADER: &str = "dataset,arch,strategy,p,k,fitness,iterations,trials,mean_accuracy,std_accuracy,mean_sparsity,metric,single_trial";

pub fn aggregate_row(a: &AggregateResult) -> String {
    let c = &a.config;
    format!(
        "{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{},{}",
        c.dataset,
        c.arch,
        c.strategy,
        c.reported_p(),
        c.k,
        c.fitness,
        a.iterations,
        a.trials,
        a.mean,
        a.std,
        a.mean_sparsity,
        a.metric.as_str(),
        u8::from(a.single_trial)
    )
}

pub fn aggregate_csv(results: &[ExperimentResult]) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for r in results {
        for a in &r.aggregates {
            out.push_str(&aggregate_row(a));
            out.push('\n');
        }
    }
    out
}

/// Per-trial rows; `layer_sparsity` is `;`-separated, one value per layer.
pub fn trials_csv(results: &[ExperimentResult]) -> String {
    let mut out = String::from("tag,trial,seed,iterations,metric,value,layer_sparsity,wall_seconds\n");
    for r in results {
        let tag = r.config.tag();
        for t in &r.trials {
            let sparsity = t
                .layer_sparsity
                .iter()
                .map(|s| format!("{s:.6}"))
                .collect::<Vec<_>>()
                .join(";");
            for &(it, v) in &t.checkpoints {
                let _ = writeln!(
                    out,
                    "{tag},{},{},{it},{},{v:.6},{sparsity},{:.3}",
                    t.trial,
                    t.seed,
                    t.metric.as_str(),
                    t.wall_seconds
                );
            }
        }
    }
    out
}

pub fn loss_curves_csv(results: &[ExperimentResult]) -> String {
    let mut out = String::from("tag,trial,iteration,loss\n");
    for r in results {
        let tag = r.config.tag();
        for t in &r.trials {
            for &(it, loss) in &t.loss_curve {
                let _ = writeln!(out, "{tag},{},{it},{loss:.8}", t.trial);
            }
        }
    }
    out
}

/// `n,p,strategy,mean,std` rows.
pub fn learning_curve_csv(results: &[(usize, ExperimentResult)]) -> String {
    let mut out = String::from("n,p,strategy,mean,std\n");
    for (n, r) in results {
        let a = r.final_aggregate();
        let _ = writeln!(
            out,
            "{n},{},{},{:.6},{:.6}",
            r.config.reported_p(),
            r.config.strategy,
            a.mean,
            a.std
        );
    }
    out
}

/// Grid with one row per iteration count and one column per configuration,
/// cells as `mean ± std` accuracy in percent.
pub fn table1_csv(results: &[ExperimentResult]) -> String {
    let mut out = String::from("iterations");
    for r in results {
        let c = &r.config;
        if c.strategy == StrategyKind::None {
            out.push_str(",p=0.0");
        } else {
            let _ = write!(out, ",p={} k={}", c.p, c.k);
        }
    }
    out.push('\n');
    let rows: Vec<u64> = results
        .first()
        .map(|r| r.aggregates.iter().map(|a| a.iterations).collect())
        .unwrap_or_default();
    for it in rows {
        let _ = write!(out, "{it}");
        for r in results {
            match r.aggregate_at(it) {
                Some(a) => {
                    let _ = write!(out, ",{:.2} ± {:.2}", 100.0 * a.mean, 100.0 * a.std);
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

/// Writes the run directory: `config.txt`, `aggregate.csv`, `trials.csv`,
/// `loss_curves.csv` and `masks/<tag>/trial<i>_layer<l>.txt`.
pub fn write_artifacts(out: &Path, base: &ExperimentConfig, results: &[ExperimentResult]) -> Result<()> {
    create_dir(out)?;
    write(&out.join("config.txt"), &base.to_text())?;
    write(&out.join("aggregate.csv"), &aggregate_csv(results))?;
    write(&out.join("trials.csv"), &trials_csv(results))?;
    write(&out.join("loss_curves.csv"), &loss_curves_csv(results))?;
    for r in results {
        let dir = out.join("masks").join(r.config.tag());
        create_dir(&dir)?;
        write(&dir.join("config.txt"), &r.config.to_text())?;
        for t in &r.trials {
            for (l, m) in t.final_masks.iter().enumerate() {
                m.save(&dir.join(format!("trial{}_layer{l}.txt", t.trial)))?;
            }
        }
    }
    Ok(())
}
