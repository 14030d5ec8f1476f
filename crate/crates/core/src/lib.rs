//! Pruning at initialization for small sigmoid MLPs.
//!
//! The crate provides a dense matrix type, a sigmoid network trained with
//! NMSE plus an L1 penalty, a masked Adam optimizer, binary sparse masks and
//! four pruning strategies (random dropout, kstarts, dissipating gradients
//! and their combination), an IDX loader for MNIST-style data, and a seeded
//! multi-trial experiment harness that writes CSV results.

pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod masks;
pub mod matrix;
pub mod network;
pub mod optimizer;
pub mod strategies;

pub use config::{Architecture, ExperimentConfig};
pub use data::{BatchPlan, Dataset, DatasetName, Split};
pub use error::{Error, Result};
pub use experiment::{
    run_experiment, run_trial, AggregateResult, ExperimentData, ExperimentResult, TrialResult,
};
pub use masks::SparseMask;
pub use matrix::Matrix;
pub use network::MlpNetwork;
pub use optimizer::{AdamConfig, AdamState};
pub use strategies::{
    DissipationConfig, DissipationState, FitnessSum, FitnessVariant, KStartsConfig, KStartsState,
    Pruner, StrategyKind,
};
