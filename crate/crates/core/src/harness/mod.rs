//! Experiment configuration, training loop, progress metrics and the
//! reproduction commands.

pub mod config;
pub mod metrics;
pub mod reproduce;
pub mod svg;
pub mod train;

pub use config::{AgentConfig, ExperimentConfig, PortfolioSpec};
pub use metrics::{hitting_ratio, ruggedness, EvalRecord, OptimalStats};
pub use train::{
    derive_seed, load_agent, resume, save_agent, train, train_seed, ExperimentLog, FinalEvaluation, Trainer,
};
