use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Adam, Mlp};
use super::replay::ReplayBuffer;
use super::{argmax, epsilon_greedy, policy_from_actions, Transition};
use crate::error::{Error, Result};
use crate::policy::{Policy, Portfolio};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DdqnConfig {
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub replay_capacity: usize,
    /// Copy online weights into the target network every this many train steps.
    pub target_sync: u64,
    /// Train only once the buffer holds at least this many entries (and a full batch).
    pub learning_starts: usize,
    pub bootstrap_on_cutoff: bool,
    /// Feed `fitness / n` instead of the raw fitness.
    pub normalize_input: bool,
}

impl Default for DdqnConfig {
    fn default() -> Self {
        DdqnConfig {
            hidden: vec![50, 50],
            batch_size: 2048,
            epsilon: 0.2,
            gamma: 0.9998,
            learning_rate: 1e-3,
            replay_capacity: 100_000,
            target_sync: 500,
            learning_starts: 2048,
            bootstrap_on_cutoff: true,
            normalize_input: true,
        }
    }
}

impl DdqnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if self.replay_capacity < self.batch_size {
            return Err(Error::invalid("replay_capacity must be at least batch_size"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden layer widths must be positive"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::invalid(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.target_sync == 0 {
            return Err(Error::invalid("target_sync must be positive"));
        }
        Ok(())
    }
}

/// Double DQN: the online network picks the next action, the target network
/// values it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DdqnAgent {
    config: DdqnConfig,
    n: usize,
    online: Mlp,
    target: Mlp,
    optimizer: Adam,
    buffer: ReplayBuffer,
    train_steps: u64,
    /// Target-network values of every state, refreshed at each sync.
    #[serde(skip)]
    target_table: Vec<f64>,
}

impl PartialEq for DdqnAgent {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.n == other.n
            && self.online == other.online
            && self.target == other.target
            && self.optimizer == other.optimizer
            && self.buffer == other.buffer
            && self.train_steps == other.train_steps
    }
}

impl DdqnAgent {
    pub fn new<R: Rng + ?Sized>(config: DdqnConfig, n: usize, k: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if n == 0 || k == 0 {
            return Err(Error::invalid("agent needs n >= 1 and k >= 1"));
        }
        let mut sizes = vec![1];
        sizes.extend(&config.hidden);
        sizes.push(k);
        let online = Mlp::new(&sizes, rng);
        Ok(DdqnAgent {
            target: online.clone(),
            optimizer: Adam::new(&online, config.learning_rate),
            buffer: ReplayBuffer::new(config.replay_capacity),
            online,
            config,
            n,
            train_steps: 0,
            target_table: Vec::new(),
        })
    }

    pub fn config(&self) -> &DdqnConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.online.output_dim()
    }

    pub fn online(&self) -> &Mlp {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut Mlp {
        &mut self.online
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    fn encode(&self, state: usize) -> f64 {
        if self.config.normalize_input {
            state as f64 / self.n as f64
        } else {
            state as f64
        }
    }

    pub fn q_values(&self, state: usize) -> Vec<f64> {
        self.online.forward(&[self.encode(state)])
    }

    pub fn select_action<R: Rng + ?Sized>(&self, state: usize, rng: &mut R, greedy: bool) -> usize {
        epsilon_greedy(&self.q_values(state), self.config.epsilon, greedy, rng)
    }

    pub fn greedy_action(&self, state: usize) -> usize {
        argmax(&self.q_values(state))
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
        self.target_table.clear();
    }

    fn refresh_target_table(&mut self) {
        if self.target_table.is_empty() {
            let inputs: Vec<f64> = (0..=self.n).map(|s| self.encode(s)).collect();
            self.target_table = self.target.forward_batch(&inputs, self.n + 1).output().to_vec();
        }
    }

    /// Stores the transition and runs one train step once enough data is buffered.
    pub fn observe<R: Rng + ?Sized>(&mut self, t: Transition, rng: &mut R) -> Result<Option<f64>> {
        self.buffer.push(t);
        if self.buffer.len() < self.config.batch_size.max(self.config.learning_starts) {
            return Ok(None);
        }
        self.train_step(rng).map(Some)
    }

    /// Samples a batch without replacement and trains on it.
    pub fn train_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        if self.buffer.len() < self.config.batch_size {
            return Err(Error::invalid(format!(
                "buffer holds {} transitions, batch needs {}",
                self.buffer.len(),
                self.config.batch_size
            )));
        }
        let batch = self.buffer.sample(self.config.batch_size, rng);
        self.train_on_batch(&batch)
    }

    /// One Adam step on the mean squared double-Q TD error of `batch`.
    ///
    /// The state space is tiny, so the networks are evaluated once per
    /// distinct state and the per-sample output gradients are summed per
    /// state before backpropagation; the result equals the per-sample
    /// computation.
    pub fn train_on_batch(&mut self, batch: &[Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let k = self.k();
        let mut slot = vec![usize::MAX; self.n + 1];
        let mut inputs = Vec::new();
        let mut visit = |s: usize, inputs: &mut Vec<f64>| {
            if slot[s] == usize::MAX {
                slot[s] = inputs.len();
                inputs.push(self.encode(s));
            }
        };
        let boot = self.config.bootstrap_on_cutoff;
        for t in batch {
            if t.state > self.n || t.next_state > self.n || t.action >= k {
                return Err(Error::invalid(format!("transition out of range: {t:?}")));
            }
            visit(t.state, &mut inputs);
            if t.bootstraps(boot) {
                visit(t.next_state, &mut inputs);
            }
        }
        let m = inputs.len();
        let acts = self.online.forward_batch(&inputs, m);
        let online_q = acts.output();
        self.refresh_target_table();
        let target_q = &self.target_table;

        let scale = 2.0 / batch.len() as f64;
        let mut d_out = vec![0.0; m * k];
        let mut loss = 0.0;
        for t in batch {
            let mut y = t.reward;
            if t.bootstraps(boot) {
                let row = slot[t.next_state] * k;
                let a_star = argmax(&online_q[row..row + k]);
                y += self.config.gamma * target_q[t.next_state * k + a_star];
            }
            let cell = slot[t.state] * k + t.action;
            let err = online_q[cell] - y;
            loss += err * err;
            d_out[cell] += scale * err;
        }
        loss /= batch.len() as f64;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged {
                step: self.train_steps,
                last_checkpoint: None,
            });
        }
        let grads = self.online.backward(&acts, &d_out);
        self.optimizer.step(&mut self.online, &grads);
        if !self.online.is_finite() {
            return Err(Error::TrainingDiverged {
                step: self.train_steps,
                last_checkpoint: None,
            });
        }
        self.train_steps += 1;
        if self.train_steps.is_multiple_of(self.config.target_sync) {
            self.sync_target();
        }
        Ok(loss)
    }

    pub fn extract_greedy_policy(&self, portfolio: &Portfolio) -> Result<Policy> {
        policy_from_actions(portfolio, |i| self.greedy_action(i))
    }
}
