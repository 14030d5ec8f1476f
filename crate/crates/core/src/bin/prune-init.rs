use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use prune_init::config::parse_list;
use prune_init::experiment::{
    self, aggregate_csv, learning_curve_csv, table1_csv, write_artifacts, ExperimentData,
    SWEEP_PRESET, TABLE1_PRESET,
};
use prune_init::gradcheck::{run_gradcheck, GradcheckConfig};
use prune_init::{Error, ExperimentConfig, Result, StrategyKind};

#[derive(Parser)]
#[command(name = "prune-init", version, about = "Pruning-at-initialization experiments on MNIST-style data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration over several seeded trials.
    Train(Common),
    /// Accuracy against sparsity for several strategies.
    SweepP {
        #[command(flatten)]
        common: Common,
        /// Comma-separated strategies.
        #[arg(long, default_value = "random,kstarts,dissipating,combination")]
        strategies: String,
        /// Comma-separated sparsity values.
        #[arg(long, default_value = "0.1,0.3,0.5,0.7,0.9,0.95")]
        p_list: String,
    },
    /// Accuracy against kstarts population size.
    SweepK {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "1,10,50,100")]
        k_list: String,
    },
    /// Accuracy against training-set size.
    LearningCurve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "100,500,1000,5000,10000,60000")]
        n_list: String,
        /// `0` runs unpruned; other values use the selected strategy.
        #[arg(long, default_value = "0,0.5")]
        p_list: String,
    },
    /// Iterations × (k, p) accuracy grid on 784-10.
    Table1 {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "10,100,1000,10000")]
        iterations_list: String,
        #[arg(long, default_value = "1,10,50,100")]
        k_list: String,
    },
    /// Compare analytic and finite-difference gradients on random nets.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 12)]
        max_dim: usize,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

#[derive(Args)]
struct Common {
    /// Flat `key=value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    fitness: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    iterations: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    /// Any other config key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Artifact directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    /// Defaults, then `preset`, then the config file, then flags.
    fn resolve(&self, preset: &[(&str, &str)]) -> Result<ExperimentConfig> {
        let mut c = experiment::preset_config(preset)?;
        if let Some(path) = &self.config {
            c.apply_file(path)?;
        }
        if let Some(dir) = &self.data_dir {
            c.data_dir = dir.clone();
        }
        let flags = [
            ("dataset", &self.dataset),
            ("arch", &self.arch),
            ("strategy", &self.strategy),
            ("p", &self.p),
            ("k", &self.k),
            ("fitness", &self.fitness),
            ("epsilon", &self.epsilon),
            ("iterations", &self.iterations),
            ("trials", &self.trials),
            ("seed", &self.seed),
            ("lr", &self.lr),
            ("batch-size", &self.batch_size),
            ("lambda", &self.lambda),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                c.set(key, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    fn out_dir(&self, default: &str) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| Path::new("runs").join(default))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(common) => {
            let c = common.resolve(&[])?;
            let data = ExperimentData::load(&c)?;
            let result = experiment::run_experiment(&c, &data)?;
            let results = [result];
            write_artifacts(&common.out_dir("train"), &c, &results)?;
            print!("{}", aggregate_csv(&results));
        }
        Command::SweepP {
            common,
            strategies,
            p_list,
        } => {
            let c = common.resolve(SWEEP_PRESET)?;
            let strategies: Vec<StrategyKind> = parse_list("strategies", &strategies)?;
            let ps: Vec<f64> = parse_list("p-list", &p_list)?;
            let data = ExperimentData::load(&c)?;
            let results = experiment::sweep_p(&c, &strategies, &ps, &data)?;
            write_artifacts(&common.out_dir("sweep-p"), &c, &results)?;
            print!("{}", aggregate_csv(&results));
        }
        Command::SweepK { common, k_list } => {
            let c = common.resolve(&[])?;
            let ks: Vec<usize> = parse_list("k-list", &k_list)?;
            let data = ExperimentData::load(&c)?;
            let results = experiment::sweep_k(&c, &ks, &data)?;
            write_artifacts(&common.out_dir("sweep-k"), &c, &results)?;
            print!("{}", aggregate_csv(&results));
        }
        Command::LearningCurve {
            common,
            n_list,
            p_list,
        } => {
            let c = common.resolve(&[("iterations", "2500")])?;
            let ns: Vec<usize> = parse_list("n-list", &n_list)?;
            let ps: Vec<f64> = parse_list("p-list", &p_list)?;
            let data = ExperimentData::load(&c)?;
            let rows = experiment::learning_curve(&c, &ns, &ps, &data)?;
            let out = common.out_dir("learning-curve");
            let results: Vec<_> = rows.iter().map(|(_, r)| r.clone()).collect();
            write_artifacts(&out, &c, &results)?;
            let csv = learning_curve_csv(&rows);
            write_file(&out.join("learning_curve.csv"), &csv)?;
            print!("{csv}");
        }
        Command::Table1 {
            common,
            iterations_list,
            k_list,
        } => {
            let c = common.resolve(TABLE1_PRESET)?;
            let iterations: Vec<u64> = parse_list("iterations-list", &iterations_list)?;
            let ks: Vec<usize> = parse_list("k-list", &k_list)?;
            if iterations.is_empty() || iterations.contains(&0) {
                return Err(Error::Config("iterations-list needs positive values".into()));
            }
            let data = ExperimentData::load(&c)?;
            let results = experiment::table1(&c, &iterations, &ks, &data)?;
            let out = common.out_dir("table1");
            write_artifacts(&out, &c, &results)?;
            let grid = table1_csv(&results);
            write_file(&out.join("table1.csv"), &grid)?;
            print!("{grid}");
        }
        Command::Gradcheck {
            seeds,
            max_dim,
            tolerance,
        } => {
            if max_dim < 2 {
                return Err(Error::Config("max-dim must be >= 2".into()));
            }
            let report = run_gradcheck(&GradcheckConfig {
                seeds,
                max_dim,
                tolerance,
                ..GradcheckConfig::default()
            })?;
            println!(
                "coordinates={} within_tolerance={} pass_fraction={:.6} max_relative_error={:.3e} elapsed_s={:.3}",
                report.coordinates,
                report.within_tolerance,
                report.pass_fraction(),
                report.max_relative_error,
                report.elapsed.as_secs_f64()
            );
        }
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else if e.is_data_error() {
                ExitCode::from(3)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
