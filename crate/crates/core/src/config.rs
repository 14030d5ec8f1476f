//! Experiment configuration: defaults, `key=value` files and overrides.
//!
//! Later sources win: defaults, then the config file, then command-line
//! overrides. Keys accept either `-` or `_` as separator.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{DatasetName, DATA_DIR_ENV};
use crate::error::{Error, Result};
use crate::optimizer::AdamConfig;
use crate::strategies::{
    DissipationConfig, FitnessSum, FitnessVariant, KStartsConfig, StrategyKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    /// 784-10
    Single,
    /// 784-128-100-10
    ThreeLayer,
    /// 784-128-64-128-784, trained to reconstruct its input
    Autoencoder,
}

impl Architecture {
    pub fn dims(self, input: usize, classes: usize) -> Vec<usize> {
        match self {
            Architecture::Single => vec![input, classes],
            Architecture::ThreeLayer => vec![input, 128, 100, classes],
            Architecture::Autoencoder => vec![input, 128, 64, 128, input],
        }
    }

    pub fn is_autoencoder(self) -> bool {
        self == Architecture::Autoencoder
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Single => "784-10",
            Architecture::ThreeLayer => "784-128-100-10",
            Architecture::Autoencoder => "784-128-64",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "784-10" | "single" => Ok(Architecture::Single),
            "784-128-100-10" | "three-layer" | "mlp" => Ok(Architecture::ThreeLayer),
            "784-128-64" | "autoencoder" | "ae" => Ok(Architecture::Autoencoder),
            _ => Err(Error::Config(format!(
                "unknown architecture {s:?} (expected 784-10, 784-128-100-10 or 784-128-64)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetName,
    pub data_dir: PathBuf,
    pub arch: Architecture,
    pub strategy: StrategyKind,
    /// Connectivity factor for random, kstarts and combination.
    pub p: f64,
    pub k: usize,
    pub fitness: FitnessVariant,
    pub fitness_sum: FitnessSum,
    /// Exact zero counts instead of Bernoulli masks.
    pub exact_masks: bool,
    pub elimination_interval: u64,
    pub epsilon: f64,
    pub active_epochs: usize,
    /// Sparsity floor for the dissipating strategy (0 = pure threshold rule).
    pub dissipation_target: f64,
    pub lambda: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    /// Optimizer steps per trial.
    pub iterations: u64,
    /// Extra iterations at which the test metric is recorded.
    pub eval_at: Vec<u64>,
    /// Fixed random training subset per trial; `None` uses the full split.
    pub train_size: Option<usize>,
    /// Evaluate on the first `n` test samples only.
    pub test_size: Option<usize>,
    pub trials: usize,
    pub base_seed: u64,
    /// Batch loss is recorded every this many iterations.
    pub loss_every: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let d = DissipationConfig::default();
        let k = KStartsConfig::default();
        Self {
            dataset: DatasetName::Mnist,
            data_dir: std::env::var_os(DATA_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("data")),
            arch: Architecture::Single,
            strategy: StrategyKind::KStarts,
            p: k.p,
            k: k.k,
            fitness: k.fitness,
            fitness_sum: k.fitness_sum,
            exact_masks: false,
            elimination_interval: k.elimination_interval,
            epsilon: d.epsilon,
            active_epochs: d.active_epochs,
            dissipation_target: 0.0,
            lambda: 0.0,
            adam: AdamConfig::default(),
            batch_size: 64,
            iterations: 1000,
            eval_at: Vec::new(),
            train_size: None,
            test_size: None,
            trials: 10,
            base_seed: 0,
            loss_every: 100,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_optional_count(key: &str, value: &str) -> Result<Option<usize>> {
    match value.trim() {
        "" | "all" | "none" | "0" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

/// Parses `a,b,c` into a list.
pub fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl ExperimentConfig {
    /// Sets one key. Unknown keys are a config error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        let v = value.trim();
        match key.as_str() {
            "dataset" => self.dataset = v.parse()?,
            "data-dir" => self.data_dir = PathBuf::from(v),
            "arch" => self.arch = v.parse()?,
            "strategy" => self.strategy = v.parse()?,
            "p" => self.p = parse(&key, v)?,
            "k" => self.k = parse(&key, v)?,
            "fitness" => self.fitness = v.parse()?,
            "fitness-sum" => {
                self.fitness_sum = match v {
                    "abs" | "absolute" => FitnessSum::Absolute,
                    "signed" | "raw" => FitnessSum::Signed,
                    _ => return Err(Error::Config(format!("invalid fitness-sum {v:?}"))),
                }
            }
            "exact-masks" => self.exact_masks = parse(&key, v)?,
            "elimination-interval" => self.elimination_interval = parse(&key, v)?,
            "epsilon" => self.epsilon = parse(&key, v)?,
            "active-epochs" => self.active_epochs = parse(&key, v)?,
            "dissipation-target" => self.dissipation_target = parse(&key, v)?,
            "lambda" => self.lambda = parse(&key, v)?,
            "lr" => self.adam.lr = parse(&key, v)?,
            "beta1" => self.adam.beta1 = parse(&key, v)?,
            "beta2" => self.adam.beta2 = parse(&key, v)?,
            "adam-eps" => self.adam.eps = parse(&key, v)?,
            "batch-size" => self.batch_size = parse(&key, v)?,
            "iterations" => self.iterations = parse(&key, v)?,
            "eval-at" => self.eval_at = parse_list(&key, v)?,
            "train-size" => self.train_size = parse_optional_count(&key, v)?,
            "test-size" => self.test_size = parse_optional_count(&key, v)?,
            "trials" => self.trials = parse(&key, v)?,
            "seed" | "base-seed" => self.base_seed = parse(&key, v)?,
            "loss-every" => self.loss_every = parse(&key, v)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies every `key=value` line of `text`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::Config(format!("p must be in [0,1], got {}", self.p)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if self.loss_every == 0 {
            return Err(Error::Config("loss-every must be >= 1".into()));
        }
        if let Some(&bad) = self.eval_at.iter().find(|&&i| i == 0 || i > self.iterations) {
            return Err(Error::Config(format!(
                "eval-at {bad} outside 1..={}",
                self.iterations
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        self.adam.validate()?;
        self.kstarts_config().validate()?;
        self.dissipation_config().validate()?;
        Ok(())
    }

    pub fn kstarts_config(&self) -> KStartsConfig {
        KStartsConfig {
            k: self.k,
            p: self.p,
            elimination_interval: self.elimination_interval,
            fitness: self.fitness,
            fitness_sum: self.fitness_sum,
            exact_count: self.exact_masks,
        }
    }

    pub fn dissipation_config(&self) -> DissipationConfig {
        DissipationConfig {
            epsilon: self.epsilon,
            active_epochs: self.active_epochs,
            target_sparsity: if self.strategy == StrategyKind::Dissipating {
                self.dissipation_target
            } else {
                0.0
            },
        }
    }

    /// Sorted, de-duplicated evaluation points, always ending at `iterations`.
    pub fn checkpoints(&self) -> Vec<u64> {
        let mut c = self.eval_at.clone();
        c.push(self.iterations);
        c.sort_unstable();
        c.dedup();
        c
    }

    /// The sparsity knob reported in CSV `p` columns.
    pub fn reported_p(&self) -> f64 {
        match self.strategy {
            StrategyKind::None => 0.0,
            StrategyKind::Dissipating => self.dissipation_target,
            _ => self.p,
        }
    }

    /// Short identifier used for artifact sub-directories.
    pub fn tag(&self) -> String {
        match self.strategy {
            StrategyKind::None => "none".into(),
            StrategyKind::Random => format!("random_p{}", self.p),
            StrategyKind::KStarts => format!("kstarts_p{}_k{}_{}", self.p, self.k, self.fitness),
            StrategyKind::Dissipating => format!("dissipating_t{}", self.dissipation_target),
            StrategyKind::Combination => format!("combination_p{}_k{}_{}", self.p, self.k, self.fitness),
        }
    }

    /// Resolved configuration as `key=value` lines, readable by [`apply_text`](Self::apply_text).
    pub fn to_text(&self) -> String {
        let opt = |v: Option<usize>| v.map_or("all".to_string(), |n| n.to_string());
        let eval_at = self
            .eval_at
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let fitness_sum = match self.fitness_sum {
            FitnessSum::Absolute => "absolute",
            FitnessSum::Signed => "signed",
        };
        let lines = [
            ("dataset", self.dataset.to_string()),
            ("data-dir", self.data_dir.display().to_string()),
            ("arch", self.arch.to_string()),
            ("strategy", self.strategy.to_string()),
            ("p", self.p.to_string()),
            ("k", self.k.to_string()),
            ("fitness", self.fitness.to_string()),
            ("fitness-sum", fitness_sum.to_string()),
            ("exact-masks", self.exact_masks.to_string()),
            ("elimination-interval", self.elimination_interval.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("active-epochs", self.active_epochs.to_string()),
            ("dissipation-target", self.dissipation_target.to_string()),
            ("lambda", self.lambda.to_string()),
            ("lr", self.adam.lr.to_string()),
            ("beta1", self.adam.beta1.to_string()),
            ("beta2", self.adam.beta2.to_string()),
            ("adam-eps", self.adam.eps.to_string()),
            ("batch-size", self.batch_size.to_string()),
            ("iterations", self.iterations.to_string()),
            ("eval-at", eval_at),
            ("train-size", opt(self.train_size)),
            ("test-size", opt(self.test_size)),
            ("trials", self.trials.to_string()),
            ("seed", self.base_seed.to_string()),
            ("loss-every", self.loss_every.to_string()),
        ];
        lines
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_override_precedence() {
        let mut c = ExperimentConfig::default();
        c.apply_text("# comment\np = 0.3\nk=4\nstrategy=random\nbatch_size = 32\n")
            .unwrap();
        assert_eq!((c.p, c.k, c.batch_size), (0.3, 4, 32));
        c.set("p", "0.7").unwrap();
        assert_eq!(c.p, 0.7);
        assert_eq!(c.strategy, StrategyKind::Random);
    }

    #[test]
    fn text_round_trip() {
        let mut c = ExperimentConfig::default();
        c.set("eval-at", "10,100").unwrap();
        c.set("train-size", "500").unwrap();
        c.set("fitness", "sumgrad").unwrap();
        let mut back = ExperimentConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn invalid_values() {
        let mut c = ExperimentConfig::default();
        assert!(c.set("nope", "1").is_err());
        assert!(c.set("p", "abc").is_err());
        assert!(c.apply_text("p 0.3").is_err());
        c.p = 1.5;
        assert!(c.validate().unwrap_err().is_config_error());
        let mut c = ExperimentConfig::default();
        c.trials = 0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.k = 0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.eval_at = vec![5000];
        assert!(c.validate().is_err());
    }

    #[test]
    fn checkpoints_include_final() {
        let mut c = ExperimentConfig::default();
        c.iterations = 100;
        c.eval_at = vec![100, 10, 10];
        assert_eq!(c.checkpoints(), vec![10, 100]);
    }

    #[test]
    fn architectures() {
        assert_eq!(Architecture::Single.dims(784, 10), vec![784, 10]);
        assert_eq!(Architecture::ThreeLayer.dims(784, 10), vec![784, 128, 100, 10]);
        assert_eq!(
            Architecture::Autoencoder.dims(784, 10),
            vec![784, 128, 64, 128, 784]
        );
        for a in [Architecture::Single, Architecture::ThreeLayer, Architecture::Autoencoder] {
            assert_eq!(a.as_str().parse::<Architecture>().unwrap(), a);
        }
    }
}
