//! Ground-truth benchmark for dynamic parameter control of the (1+1)-RLS on
//! LeadingOnes.
//!
//! The crate computes optimal fitness-dependent radius policies and optimal
//! radius portfolios in closed form, simulates the algorithm exactly, exposes
//! the run as a reset/step environment, and trains tabular Q-learning and
//! double-DQN controllers whose greedy policies are scored against the exact
//! optimum.

pub mod agents;
pub mod env;
pub mod error;
pub mod harness;
pub mod policy;
pub mod portfolio;
pub mod problem;
pub mod sim;
pub mod stats;

pub use agents::{AnyAgent, DdqnAgent, DdqnConfig, QTable, QTableConfig, Transition};
pub use env::{EnvSpec, LeadingOnesEnv, Observation, StepResult};
pub use error::{Error, Result};
pub use harness::{hitting_ratio, ruggedness, ExperimentConfig, ExperimentLog, Trainer};
pub use policy::{
    breaking_points_bisect, breaking_points_linear, expected_runtime, optimal_restricted_policy, runtime_variance,
    Policy, Portfolio, Representation, RuntimeMoments,
};
pub use portfolio::{make_portfolio, search_optimal_portfolio, sweep_all_portfolios, FamilyKind, SweepRecord};
pub use problem::{
    flip_radius, improvement_probability, leading_ones, leading_ones_general, optimal_radius_full, prefers_larger,
    BitString, Instance,
};
pub use sim::{estimate_runtime, run_rls, run_surrogate, Backend, EpisodeTrace, RunStats, Terminal};
