use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::stats::population_std;

/// Reference point for the hit rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalStats {
    pub policy: Policy,
    pub expectation: f64,
    pub std: f64,
}

/// One periodic evaluation of the frozen greedy policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub train_step: u64,
    pub mean: f64,
    pub std: f64,
    pub censored: usize,
    /// Exact expected runtime of the evaluated policy, if finite.
    pub exact: Option<f64>,
    pub hit: bool,
}

/// One-sided hit rule: `mean <= E_opt + tau * std_opt`.
pub fn is_hit(mean: f64, optimal: &OptimalStats, tau: f64) -> bool {
    mean <= optimal.expectation + tau * optimal.std
}

/// Fraction of evaluations that hit the optimum within `tau` standard deviations.
pub fn hitting_ratio(records: &[EvalRecord], optimal: &OptimalStats, tau: f64) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::UndefinedMetric("hitting ratio of an empty log".into()));
    }
    let hits = records.iter().filter(|r| is_hit(r.mean, optimal, tau)).count();
    Ok(hits as f64 / records.len() as f64)
}

/// Standard deviation of the differences between consecutive evaluation means.
pub fn ruggedness(records: &[EvalRecord]) -> Result<f64> {
    if records.len() < 3 {
        return Err(Error::UndefinedMetric(format!(
            "ruggedness needs at least 3 evaluations, got {}",
            records.len()
        )));
    }
    let diffs: Vec<f64> = records.windows(2).map(|w| w[1].mean - w[0].mean).collect();
    Ok(population_std(&diffs))
}

/// First evaluation step that hits under `tau`.
pub fn first_hit(records: &[EvalRecord], optimal: &OptimalStats, tau: f64) -> Option<u64> {
    records
        .iter()
        .find(|r| is_hit(r.mean, optimal, tau))
        .map(|r| r.train_step)
}
