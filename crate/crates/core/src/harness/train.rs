use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AgentConfig, ExperimentConfig};
use super::metrics::{first_hit, hitting_ratio, is_hit, ruggedness, EvalRecord, OptimalStats};
use crate::agents::{AnyAgent, DdqnAgent, QTable, Transition};
use crate::env::{EnvSpec, LeadingOnesEnv};
use crate::error::{Error, Result};
use crate::policy::{expected_runtime, optimal_restricted_policy, Policy, Portfolio, RuntimeMoments};
use crate::portfolio::thread_pool;
use crate::sim::{sample_runtimes, stream_rng, RunStats, Terminal};

/// Deterministic child seed (SplitMix64 finalizer of `seed` and `tag`).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TAG_FINAL_BEST: u64 = u64::MAX;
const TAG_FINAL_LAST: u64 = u64::MAX - 1;
const TAG_FINAL_OPTIMAL: u64 = u64::MAX - 2;
const TAG_OPTIMAL_STD: u64 = u64::MAX - 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalEvaluation {
    pub best_step: u64,
    pub best_policy: Policy,
    pub best: RunStats,
    pub last_policy: Policy,
    pub last: RunStats,
    /// The optimal restricted policy under the same protocol.
    pub optimal: RunStats,
}

impl FinalEvaluation {
    /// `|best - optimal|` in units of the combined standard error.
    pub fn best_gap_in_standard_errors(&self) -> f64 {
        let se = (self.best.sem().powi(2) + self.optimal.sem().powi(2)).sqrt();
        (self.best.mean - self.optimal.mean).abs() / se
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentLog {
    pub seed: u64,
    pub n: usize,
    pub portfolio: Portfolio,
    pub tau: f64,
    pub optimal: OptimalStats,
    pub evaluations: Vec<EvalRecord>,
    pub episodes: u64,
    pub train_steps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_eval: Option<FinalEvaluation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hitting_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ruggedness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_hit: Option<u64>,
}

impl ExperimentLog {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn hitting_ratio(&self, tau: f64) -> Result<f64> {
        hitting_ratio(&self.evaluations, &self.optimal, tau)
    }

    pub fn ruggedness(&self) -> Result<f64> {
        ruggedness(&self.evaluations)
    }

    pub fn first_hit(&self, tau: f64) -> Option<u64> {
        first_hit(&self.evaluations, &self.optimal, tau)
    }

    /// `train_step;mean;std;censored;exact;hit`.
    pub fn write_evaluations_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().delimiter(b';').from_writer(out);
        w.write_record(["train_step", "mean", "std", "censored", "exact", "hit"])?;
        for r in &self.evaluations {
            let exact = r.exact.map_or_else(|| "inf".to_string(), |e| e.to_string());
            w.write_record([
                r.train_step.to_string(),
                r.mean.to_string(),
                r.std.to_string(),
                r.censored.to_string(),
                exact,
                u8::from(r.hit).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Best {
    mean: f64,
    step: u64,
    policy: Policy,
}

/// Resumable training run for one seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trainer {
    config: ExperimentConfig,
    seed: u64,
    spec: EnvSpec,
    env: LeadingOnesEnv,
    agent: AnyAgent,
    rng: ChaCha8Rng,
    episode_rng: ChaCha8Rng,
    step: u64,
    log: ExperimentLog,
    best: Best,
    #[serde(skip)]
    checkpoint_dir: Option<PathBuf>,
    #[serde(skip)]
    last_checkpoint: Option<PathBuf>,
}

impl Trainer {
    /// Builds the agent and environment and records the step-0 evaluation.
    pub fn new(config: ExperimentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let n = config.n;
        let portfolio = config.portfolio.resolve(n, 1)?;
        let k = portfolio.len();
        let mut spec = EnvSpec::new(portfolio.clone()).with_backend(config.backend);
        if let Some(c) = config.cutoff {
            spec = spec.with_cutoff(c);
        }
        let env = LeadingOnesEnv::new(spec.clone())?;
        let mut init_rng = stream_rng(seed, 0);
        let agent = match &config.agent {
            AgentConfig::Tabular(c) => {
                let mut table = QTable::new(c.clone(), n, k)?;
                if c.baseline_init {
                    table.set_state_values(&radius_one_returns(n))?;
                }
                AnyAgent::Tabular(table)
            }
            AgentConfig::Ddqn(c) => AnyAgent::Ddqn(Box::new(DdqnAgent::new(c.clone(), n, k, &mut init_rng)?)),
        };

        let opt_policy = optimal_restricted_policy(&portfolio)?;
        let moments = RuntimeMoments::of(&opt_policy);
        let std = if config.empirical_optimal_std {
            let samples = sample_runtimes(
                &opt_policy,
                &spec.instance,
                config.final_runs,
                derive_seed(seed, TAG_OPTIMAL_STD),
                None,
                spec.backend,
            )?;
            RunStats::from_samples(&samples).std
        } else {
            moments.std()
        };
        let optimal = OptimalStats {
            policy: opt_policy,
            expectation: moments.expectation,
            std,
        };
        let log = ExperimentLog {
            seed,
            n,
            portfolio: portfolio.clone(),
            tau: config.hit_tau,
            optimal,
            evaluations: Vec::new(),
            episodes: 0,
            train_steps: 0,
            final_eval: None,
            hitting_ratio: None,
            ruggedness: None,
            first_hit: None,
        };
        let placeholder = Best {
            mean: f64::INFINITY,
            step: 0,
            policy: agent.extract_greedy_policy(&portfolio)?,
        };
        let mut trainer = Trainer {
            config,
            seed,
            spec,
            env,
            agent,
            rng: stream_rng(seed, 1),
            episode_rng: stream_rng(seed, 2),
            step: 0,
            log,
            best: placeholder,
            checkpoint_dir: None,
            last_checkpoint: None,
        };
        trainer.evaluate()?;
        Ok(trainer)
    }

    /// Periodic checkpoints go to `dir/checkpoint.json`.
    pub fn with_checkpoint_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.checkpoint_dir = Some(dir.into());
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn agent(&self) -> &AnyAgent {
        &self.agent
    }

    pub fn log(&self) -> &ExperimentLog {
        &self.log
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.config.budget()
    }

    fn evaluate_policy(&self, policy: &Policy, runs: usize, seed: u64, cutoff: Option<u64>) -> Result<RunStats> {
        let samples = sample_runtimes(policy, &self.spec.instance, runs, seed, cutoff, self.spec.backend)?;
        Ok(RunStats::from_samples(&samples))
    }

    fn evaluate(&mut self) -> Result<()> {
        let policy = self.agent.extract_greedy_policy(&self.log.portfolio)?;
        let index = self.log.evaluations.len() as u64;
        let stats = self.evaluate_policy(
            &policy,
            self.config.eval_runs,
            derive_seed(self.seed, index),
            Some(self.spec.cutoff),
        )?;
        let exact = expected_runtime(&policy);
        let hit = is_hit(stats.mean, &self.log.optimal, self.config.hit_tau);
        if stats.mean < self.best.mean {
            self.best = Best {
                mean: stats.mean,
                step: self.step,
                policy,
            };
        }
        self.log.evaluations.push(EvalRecord {
            train_step: self.step,
            mean: stats.mean,
            std: stats.std,
            censored: stats.censored,
            exact: exact.is_finite().then_some(exact),
            hit,
        });
        Ok(())
    }

    fn reset_env(&mut self) {
        loop {
            let seed = self.episode_rng.gen::<u64>();
            self.env.reset(seed);
            if !self.env.is_done() {
                break;
            }
            self.log.episodes += 1;
        }
    }

    fn step_once(&mut self) -> Result<()> {
        if self.env.is_done() {
            self.reset_env();
        }
        let state = self.env.fitness();
        let action = self.agent.select_action(state, &mut self.rng, false);
        let res = self.env.step(action)?;
        let t = Transition {
            state,
            action,
            reward: res.reward,
            next_state: res.observation.fitness,
            terminal: res.info == Some(Terminal::OptimumFound),
            truncated: res.info == Some(Terminal::Cutoff),
        };
        self.agent.observe(t, &mut self.rng).map_err(|e| match e {
            Error::TrainingDiverged { .. } => Error::TrainingDiverged {
                step: self.step,
                last_checkpoint: self.last_checkpoint.clone(),
            },
            other => other,
        })?;
        self.step += 1;
        self.log.train_steps = self.step;
        if res.done {
            self.log.episodes += 1;
        }
        Ok(())
    }

    /// Trains for up to `count` more steps, stopping at the budget.
    pub fn run_steps(&mut self, count: u64) -> Result<()> {
        let stop = self.config.budget().min(self.step.saturating_add(count));
        while self.step < stop {
            self.step_once()?;
            if self.step.is_multiple_of(self.config.eval_period) {
                self.evaluate()?;
            }
            if self.config.checkpoint_period > 0 && self.step.is_multiple_of(self.config.checkpoint_period) {
                if let Some(dir) = self.checkpoint_dir.clone() {
                    let path = dir.join("checkpoint.json");
                    self.save(&path)?;
                    self.last_checkpoint = Some(path);
                }
            }
        }
        Ok(())
    }

    pub fn run(&mut self) -> Result<()> {
        self.run_steps(u64::MAX)
    }

    /// Final evaluation of the best and the last greedy policy, and of the
    /// optimal policy under the same protocol, all with the episode cutoff.
    pub fn finish(mut self) -> Result<ExperimentLog> {
        let runs = self.config.final_runs;
        let last_policy = self.agent.extract_greedy_policy(&self.log.portfolio)?;
        let cutoff = Some(self.spec.cutoff);
        let best = self.evaluate_policy(&self.best.policy, runs, derive_seed(self.seed, TAG_FINAL_BEST), cutoff)?;
        let last = self.evaluate_policy(&last_policy, runs, derive_seed(self.seed, TAG_FINAL_LAST), cutoff)?;
        let optimal = self.evaluate_policy(
            &self.log.optimal.policy,
            runs,
            derive_seed(self.seed, TAG_FINAL_OPTIMAL),
            cutoff,
        )?;
        let tau = self.config.hit_tau;
        self.log.hitting_ratio = Some(self.log.hitting_ratio(tau)?);
        self.log.ruggedness = self.log.ruggedness().ok();
        self.log.first_hit = self.log.first_hit(tau);
        self.log.final_eval = Some(FinalEvaluation {
            best_step: self.best.step,
            best_policy: self.best.policy.clone(),
            best,
            last_policy,
            last,
            optimal,
        });
        Ok(self.log)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_string(self)?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut t: Trainer = serde_json::from_str(&fs::read_to_string(path)?)?;
        t.last_checkpoint = Some(path.to_path_buf());
        t.checkpoint_dir = path.parent().map(Path::to_path_buf);
        Ok(t)
    }
}

/// Expected return from each fitness under the constant radius-1 policy.
///
/// Each level above the start is visited with probability 1/2 and takes `n`
/// steps in expectation; the return is the fitness gained minus the steps.
fn radius_one_returns(n: usize) -> Vec<f64> {
    let nf = n as f64;
    (0..=n)
        .map(|i| {
            if i == n {
                0.0
            } else {
                let steps = nf + (n - i - 1) as f64 * nf / 2.0;
                (n - i) as f64 - steps
            }
        })
        .collect()
}

/// Trains one seed to its budget; with `out`, writes checkpoints, the log
/// and the final agent there.
pub fn train_seed(config: &ExperimentConfig, seed: u64, out: Option<&Path>) -> Result<ExperimentLog> {
    let mut trainer = Trainer::new(config.clone(), seed)?;
    if let Some(dir) = out {
        let dir = dir.join(format!("seed_{seed}"));
        fs::create_dir_all(&dir)?;
        trainer = trainer.with_checkpoint_dir(dir);
    }
    trainer.run()?;
    finish_and_write(trainer, out)
}

/// Continues a checkpointed run to its budget.
pub fn resume(checkpoint: &Path, out: Option<&Path>) -> Result<ExperimentLog> {
    let mut trainer = Trainer::load(checkpoint)?;
    trainer.run()?;
    finish_and_write(trainer, out)
}

fn finish_and_write(trainer: Trainer, out: Option<&Path>) -> Result<ExperimentLog> {
    let seed = trainer.seed;
    let agent = trainer.agent.clone();
    let log = trainer.finish()?;
    if let Some(dir) = out {
        let dir = dir.join(format!("seed_{seed}"));
        fs::create_dir_all(&dir)?;
        log.save(&dir.join("log.json"))?;
        save_agent(&agent, &dir.join("agent.json"))?;
        log.write_evaluations_csv(fs::File::create(dir.join("evaluations.csv"))?)?;
    }
    Ok(log)
}

pub fn save_agent(agent: &AnyAgent, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string(agent)?)?;
    Ok(())
}

pub fn load_agent(path: &Path) -> Result<AnyAgent> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Trains every configured seed, `jobs` at a time; echoes the config into `out`.
pub fn train(config: &ExperimentConfig, jobs: usize, out: Option<&Path>) -> Result<Vec<ExperimentLog>> {
    config.validate()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        config.save(&dir.join("config.toml"))?;
    }
    let pool = thread_pool(jobs)?;
    pool.install(|| config.seeds.par_iter().map(|&s| train_seed(config, s, out)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::QTableConfig;
    use crate::harness::config::PortfolioSpec;

    #[test]
    fn radius_one_returns_average_to_exact_runtime() {
        for n in [1usize, 2, 7, 50] {
            let returns = radius_one_returns(n);
            // initial fitness is i with probability 2^-(i+1), and n with 2^-n
            let mut steps = 0.0;
            for (i, r) in returns.iter().enumerate() {
                let p = if i < n {
                    0.5f64.powi(i as i32 + 1)
                } else {
                    0.5f64.powi(n as i32)
                };
                steps += p * ((n - i) as f64 - r);
            }
            let exact = crate::policy::expected_runtime(&Policy::constant(n, 1).unwrap());
            assert!(
                (steps - exact).abs() <= 1e-9 * exact.max(1.0),
                "n={n}: {steps} vs {exact}"
            );
        }
    }

    #[test]
    fn baseline_init_sets_radius_one_returns() {
        let t = Trainer::new(tabular_config(1000), 0).unwrap();
        let AnyAgent::Tabular(q) = t.agent() else { panic!() };
        assert_eq!(q.values(0), &[-45.0; 3]);
        assert_eq!(q.values(10), &[0.0; 3]);

        let mut c = tabular_config(1000);
        c.agent = AgentConfig::Tabular(QTableConfig {
            baseline_init: false,
            ..Default::default()
        });
        let t = Trainer::new(c, 0).unwrap();
        let AnyAgent::Tabular(q) = t.agent() else { panic!() };
        assert_eq!(q.values(0), &[0.0; 3]);
    }

    fn tabular_config(budget: u64) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(
            10,
            PortfolioSpec::explicit(vec![1, 2, 4]),
            AgentConfig::Tabular(QTableConfig::default()),
        );
        c.budget = Some(budget);
        c.eval_period = 200;
        c.eval_runs = 10;
        c.final_runs = 50;
        c
    }

    #[test]
    fn zero_budget_has_only_initial_evaluation() {
        let log = train_seed(&tabular_config(0), 3, None).unwrap();
        assert_eq!(log.evaluations.len(), 1);
        assert_eq!(log.evaluations[0].train_step, 0);
        assert_eq!(log.train_steps, 0);
        assert!(log.final_eval.is_some());
    }

    #[test]
    fn evaluations_are_periodic() {
        let log = train_seed(&tabular_config(1000), 1, None).unwrap();
        let steps: Vec<u64> = log.evaluations.iter().map(|r| r.train_step).collect();
        assert_eq!(steps, vec![0, 200, 400, 600, 800, 1000]);
        for r in &log.evaluations {
            assert_eq!(r.hit, is_hit(r.mean, &log.optimal, log.tau));
        }
        assert!(log.ruggedness.unwrap() >= 0.0);
    }

    #[test]
    fn seeded_runs_repeat() {
        let a = train_seed(&tabular_config(600), 5, None).unwrap();
        let b = train_seed(&tabular_config(600), 5, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(0, 0), derive_seed(0, 1));
        assert_ne!(derive_seed(0, 1), derive_seed(1, 0));
    }
}
