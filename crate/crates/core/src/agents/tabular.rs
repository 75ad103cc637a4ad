use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, epsilon_greedy, policy_from_actions, Transition};
use crate::error::{Error, Result};
use crate::policy::{Policy, Portfolio};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QTableConfig {
    /// Initial learning rate.
    pub alpha: f64,
    /// Per-pair decay exponent: the `v`-th update of a pair uses `alpha / (1 + v)^alpha_decay`.
    pub alpha_decay: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub initial_value: f64,
    /// Start each state at the return of the constant radius-1 policy
    /// instead of `initial_value`.
    pub baseline_init: bool,
    pub bootstrap_on_cutoff: bool,
}

impl Default for QTableConfig {
    fn default() -> Self {
        QTableConfig {
            alpha: 0.5,
            alpha_decay: 0.6,
            gamma: 1.0,
            epsilon: 0.2,
            initial_value: 0.0,
            baseline_init: true,
            bootstrap_on_cutoff: true,
        }
    }
}

impl QTableConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.alpha_decay >= 0.0 && self.alpha_decay.is_finite()) {
            return Err(Error::invalid("alpha_decay must be a finite non-negative number"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::invalid(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        if !self.initial_value.is_finite() {
            return Err(Error::invalid("initial_value must be finite"));
        }
        Ok(())
    }
}

/// Action values indexed by fitness `0..=n` and portfolio index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    config: QTableConfig,
    n: usize,
    k: usize,
    values: Vec<f64>,
    visits: Vec<u64>,
}

impl QTable {
    pub fn new(config: QTableConfig, n: usize, k: usize) -> Result<Self> {
        config.validate()?;
        if n == 0 || k == 0 {
            return Err(Error::invalid("table needs n >= 1 and k >= 1"));
        }
        let cells = (n + 1) * k;
        Ok(QTable {
            values: vec![config.initial_value; cells],
            visits: vec![0; cells],
            config,
            n,
            k,
        })
    }

    pub fn config(&self) -> &QTableConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn values(&self, state: usize) -> &[f64] {
        &self.values[state * self.k..(state + 1) * self.k]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.k + action] = value;
    }

    /// Sets every action value of each state to `values[state]`.
    pub fn set_state_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.n + 1 || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("expected {} finite state values", self.n + 1)));
        }
        for (cells, &v) in self.values.chunks_mut(self.k).zip(values) {
            cells.fill(v);
        }
        Ok(())
    }

    pub fn select_action<R: Rng + ?Sized>(&self, state: usize, rng: &mut R, greedy: bool) -> usize {
        epsilon_greedy(self.values(state), self.config.epsilon, greedy, rng)
    }

    pub fn greedy_action(&self, state: usize) -> usize {
        argmax(self.values(state))
    }

    /// `Q(s,a) += alpha_v * (r + gamma * max Q(s',.) - Q(s,a))`, no bootstrap on terminal transitions.
    pub fn update(&mut self, t: &Transition) {
        let cell = t.state * self.k + t.action;
        let mut target = t.reward;
        if t.bootstraps(self.config.bootstrap_on_cutoff) {
            let next = self.values(t.next_state);
            target += self.config.gamma * next[argmax(next)];
        }
        let v = self.visits[cell];
        let alpha = self.config.alpha / (1.0 + v as f64).powf(self.config.alpha_decay);
        self.values[cell] += alpha * (target - self.values[cell]);
        self.visits[cell] = v + 1;
    }

    pub fn extract_greedy_policy(&self, portfolio: &Portfolio) -> Result<Policy> {
        policy_from_actions(portfolio, |i| self.greedy_action(i))
    }
}
