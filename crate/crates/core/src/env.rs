//! Reset/step environment around the RLS: the observation is the current
//! fitness, an action indexes the portfolio, and each step is rewarded with
//! the fitness gain minus one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::Portfolio;
use crate::problem::{q_unchecked, Instance};
use crate::sim::{surrogate_initial, surrogate_step, Backend, RlsState, Terminal};

/// `ceil(0.8 * n^2)`.
pub fn default_cutoff(n: usize) -> u64 {
    let n = n as u64;
    (4 * n * n).div_ceil(5)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub portfolio: Portfolio,
    pub cutoff: u64,
    pub backend: Backend,
    /// Fixed context; only the bit-string backend reads it.
    pub instance: Instance,
}

impl EnvSpec {
    /// Canonical instance, bit-string backend, cutoff `ceil(0.8 n^2)`.
    pub fn new(portfolio: Portfolio) -> Self {
        let n = portfolio.n();
        EnvSpec {
            cutoff: default_cutoff(n),
            backend: Backend::Bitstring,
            instance: Instance::canonical(n),
            portfolio,
        }
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_cutoff(mut self, cutoff: u64) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn with_instance(mut self, instance: Instance) -> Self {
        self.instance = instance;
        self
    }

    pub fn n(&self) -> usize {
        self.portfolio.n()
    }

    pub fn k(&self) -> usize {
        self.portfolio.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.cutoff < 1 {
            return Err(Error::invalid("cutoff must be at least 1"));
        }
        if self.instance.n() != self.n() {
            return Err(Error::invalid(format!(
                "instance has n = {} but portfolio has n = {}",
                self.instance.n(),
                self.n()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub fitness: usize,
    pub n: usize,
}

impl Observation {
    /// Fitness scaled to `[0, 1]`.
    pub fn normalized(&self) -> f64 {
        self.fitness as f64 / self.n as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: Option<Terminal>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
enum Solution {
    Bits(RlsState),
    Level(usize),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LeadingOnesEnv {
    spec: EnvSpec,
    rng: ChaCha8Rng,
    solution: Solution,
    initial_fitness: usize,
    steps: u64,
    total_reward: f64,
    terminal: Option<Terminal>,
}

impl LeadingOnesEnv {
    /// A new environment; call [`reset`](Self::reset) before stepping.
    pub fn new(spec: EnvSpec) -> Result<Self> {
        spec.validate()?;
        Ok(LeadingOnesEnv {
            spec,
            rng: ChaCha8Rng::seed_from_u64(0),
            solution: Solution::Level(0),
            initial_fitness: 0,
            steps: 0,
            total_reward: 0.0,
            terminal: Some(Terminal::Cutoff),
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// Starts a new episode from a fresh uniform solution.
    pub fn reset(&mut self, seed: u64) -> Observation {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.spec.n();
        self.solution = match self.spec.backend {
            Backend::Bitstring => Solution::Bits(RlsState::init(&self.spec.instance, &mut self.rng)),
            Backend::Surrogate => Solution::Level(surrogate_initial(n, &mut self.rng)),
        };
        let f = self.fitness();
        self.initial_fitness = f;
        self.steps = 0;
        self.total_reward = 0.0;
        self.terminal = (f == n).then_some(Terminal::OptimumFound);
        self.observation()
    }

    pub fn fitness(&self) -> usize {
        match &self.solution {
            Solution::Bits(s) => s.fitness,
            Solution::Level(f) => *f,
        }
    }

    pub fn observation(&self) -> Observation {
        Observation {
            fitness: self.fitness(),
            n: self.spec.n(),
        }
    }

    pub fn is_done(&self) -> bool {
        self.terminal.is_some()
    }

    pub fn terminal(&self) -> Option<Terminal> {
        self.terminal
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn initial_fitness(&self) -> usize {
        self.initial_fitness
    }

    pub fn total_reward(&self) -> f64 {
        self.total_reward
    }

    /// One RLS iteration with radius `portfolio[action_index]`.
    pub fn step(&mut self, action_index: usize) -> Result<StepResult> {
        if self.is_done() {
            return Err(Error::EpisodeFinished);
        }
        let k = self.spec.k();
        if action_index >= k {
            return Err(Error::InvalidAction { index: action_index, k });
        }
        let n = self.spec.n();
        let r = self.spec.portfolio.radii()[action_index];
        let before = self.fitness();
        let after = match &mut self.solution {
            Solution::Bits(s) => s.step(&self.spec.instance, r, &mut self.rng),
            Solution::Level(f) => {
                *f = surrogate_step(before, q_unchecked(r, before, n), n, &mut self.rng);
                *f
            }
        };
        self.steps += 1;
        let reward = after as f64 - before as f64 - 1.0;
        self.total_reward += reward;
        self.terminal = if after == n {
            Some(Terminal::OptimumFound)
        } else if self.steps >= self.spec.cutoff {
            Some(Terminal::Cutoff)
        } else {
            None
        };
        Ok(StepResult {
            observation: self.observation(),
            reward,
            done: self.terminal.is_some(),
            info: self.terminal,
        })
    }

    /// Checks that the accumulated reward telescopes to
    /// `(final - initial) - steps`.
    pub fn episode_return_identity(&self) -> Result<()> {
        let expected = (self.fitness() as f64 - self.initial_fitness as f64) - self.steps as f64;
        if self.total_reward == expected {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "return {} differs from (final - initial) - steps = {expected}",
                self.total_reward
            )))
        }
    }
}
