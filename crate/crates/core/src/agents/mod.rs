//! Value-based agents acting on the portfolio-index action space.

mod ddqn;
pub mod mlp;
mod replay;
mod tabular;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::policy::{Policy, Portfolio};

pub use ddqn::{DdqnAgent, DdqnConfig};
pub use mlp::{Adam, Mlp};
pub use replay::ReplayBuffer;
pub use tabular::{QTable, QTableConfig};

/// One environment transition. `terminal` marks the optimum (no bootstrap);
/// `truncated` marks the step cutoff.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub terminal: bool,
    pub truncated: bool,
}

impl Transition {
    pub(crate) fn bootstraps(&self, bootstrap_on_cutoff: bool) -> bool {
        !self.terminal && (bootstrap_on_cutoff || !self.truncated)
    }
}

/// Index of the largest value, ties to the smallest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = j;
        }
    }
    best
}

pub(crate) fn epsilon_greedy<R: Rng + ?Sized>(q: &[f64], epsilon: f64, greedy: bool, rng: &mut R) -> usize {
    if !greedy && epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q.len())
    } else {
        argmax(q)
    }
}

/// Table policy choosing `portfolio[action(i)]` at every fitness `i < n`.
pub(crate) fn policy_from_actions(portfolio: &Portfolio, action: impl Fn(usize) -> usize) -> Result<Policy> {
    let table = (0..portfolio.n()).map(|i| portfolio.radii()[action(i)]).collect();
    Policy::from_table(portfolio.clone(), table)
}

/// Either agent kind, for checkpointing and the training loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnyAgent {
    Tabular(QTable),
    Ddqn(Box<DdqnAgent>),
}

impl AnyAgent {
    pub fn select_action<R: Rng + ?Sized>(&self, state: usize, rng: &mut R, greedy: bool) -> usize {
        match self {
            AnyAgent::Tabular(a) => a.select_action(state, rng, greedy),
            AnyAgent::Ddqn(a) => a.select_action(state, rng, greedy),
        }
    }

    /// Feeds one transition; returns the training loss if a gradient step ran.
    pub fn observe<R: Rng + ?Sized>(&mut self, t: Transition, rng: &mut R) -> Result<Option<f64>> {
        match self {
            AnyAgent::Tabular(a) => {
                a.update(&t);
                Ok(None)
            }
            AnyAgent::Ddqn(a) => a.observe(t, rng),
        }
    }

    pub fn greedy_action(&self, state: usize) -> usize {
        match self {
            AnyAgent::Tabular(a) => a.greedy_action(state),
            AnyAgent::Ddqn(a) => a.greedy_action(state),
        }
    }

    pub fn extract_greedy_policy(&self, portfolio: &Portfolio) -> Result<Policy> {
        policy_from_actions(portfolio, |i| self.greedy_action(i))
    }
}
