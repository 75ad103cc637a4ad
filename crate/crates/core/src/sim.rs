//! Execution of the (1+1)-RLS under a fitness-dependent policy.
//!
//! Two backends share the step semantics: the bit-string simulator runs the
//! algorithm literally; the surrogate tracks only the fitness and samples an
//! improvement with probability `q(r, i)` followed by free riders, each
//! further position joining the prefix independently with probability 1/2.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{expected_runtime, Policy};
use crate::problem::{sample_positions, BitString, Instance};
use crate::stats;

/// Independent random stream number `index` under `base_seed`.
pub fn stream_rng(base_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Bitstring,
    Surrogate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    OptimumFound,
    Cutoff,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based iteration index.
    pub step: u64,
    pub fitness_before: usize,
    pub action_radius: usize,
    pub fitness_after: usize,
    pub reward: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMode {
    Full,
    /// Only steps that changed the fitness are kept.
    ImprovementsOnly,
}

impl TraceMode {
    pub fn default_for(n: usize) -> Self {
        if n < 256 {
            TraceMode::Full
        } else {
            TraceMode::ImprovementsOnly
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub n: usize,
    pub initial_fitness: usize,
    pub final_fitness: usize,
    pub steps: Vec<StepRecord>,
    pub terminal: Terminal,
    pub total_steps: u64,
    pub mode: TraceMode,
}

impl EpisodeTrace {
    /// Sum of rewards; valid for compressed traces too.
    pub fn total_reward(&self) -> f64 {
        (self.final_fitness as f64 - self.initial_fitness as f64) - self.total_steps as f64
    }

    /// Writes `step;fitness_before;action;fitness_after;reward`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().delimiter(b';').from_writer(out);
        w.write_record(["step", "fitness_before", "action", "fitness_after", "reward"])?;
        for s in &self.steps {
            w.write_record([
                s.step.to_string(),
                s.fitness_before.to_string(),
                s.action_radius.to_string(),
                s.fitness_after.to_string(),
                s.reward.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mutable state of a bit-string run: the current solution, its fitness and
/// a reusable permutation for sampling flip positions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct RlsState {
    pub x: BitString,
    pub fitness: usize,
    scratch: Vec<usize>,
}

impl RlsState {
    pub fn init<R: Rng + ?Sized>(inst: &Instance, rng: &mut R) -> Self {
        let n = inst.n();
        let x = BitString::random(n, rng);
        let fitness = inst.extend_prefix(&x, 0);
        RlsState {
            x,
            fitness,
            scratch: (0..n).collect(),
        }
    }

    /// One iteration: flip exactly `r` bits and keep the offspring if it is
    /// not worse. Returns the fitness afterwards.
    ///
    /// The offspring is worse iff some flipped bit lies inside the agreeing
    /// prefix; it is better iff additionally the first disagreeing bit is
    /// flipped, after which the prefix is re-extended.
    pub fn step<R: Rng + ?Sized>(&mut self, inst: &Instance, r: usize, rng: &mut R) -> usize {
        sample_positions(&mut self.scratch, r, rng);
        let flipped = &self.scratch[..r];
        let f = self.fitness;
        if flipped.iter().any(|&p| inst.rank_of(p) < f) {
            return f;
        }
        let mut hits_frontier = false;
        for &p in flipped {
            self.x.flip(p);
            hits_frontier |= inst.rank_of(p) == f;
        }
        if hits_frontier {
            self.fitness = inst.extend_prefix(&self.x, f + 1);
        }
        self.fitness
    }
}

/// Initial fitness under uniform initialization, sampled directly:
/// `P[f = i] = 2^-(i+1)` for `i < n`, `P[f = n] = 2^-n`.
pub fn surrogate_initial<R: Rng + ?Sized>(n: usize, rng: &mut R) -> usize {
    extend_free_riders(0, n, rng)
}

/// Counts additional leading agreements, each with probability 1/2.
fn extend_free_riders<R: Rng + ?Sized>(mut f: usize, n: usize, rng: &mut R) -> usize {
    while f < n && rng.gen::<bool>() {
        f += 1;
    }
    f
}

/// One surrogate iteration from fitness `f` with improvement probability `q`.
pub fn surrogate_step<R: Rng + ?Sized>(f: usize, q: f64, n: usize, rng: &mut R) -> usize {
    if q > 0.0 && rng.gen::<f64>() < q {
        extend_free_riders(f + 1, n, rng)
    } else {
        f
    }
}

fn check_dims(policy: &Policy, n: usize) -> Result<()> {
    if policy.n() != n {
        return Err(Error::invalid(format!(
            "policy is for n = {} but the instance has n = {n}",
            policy.n()
        )));
    }
    Ok(())
}

struct Recorder {
    mode: TraceMode,
    steps: Vec<StepRecord>,
}

impl Recorder {
    fn record(&mut self, step: u64, before: usize, r: usize, after: usize) {
        if self.mode == TraceMode::Full || after != before {
            self.steps.push(StepRecord {
                step,
                fitness_before: before,
                action_radius: r,
                fitness_after: after,
                reward: after as f64 - before as f64 - 1.0,
            });
        }
    }
}

fn within(cutoff: Option<u64>, t: u64) -> bool {
    cutoff.is_none_or(|c| t < c)
}

/// Runs the bit-string (1+1)-RLS until the optimum is the current solution
/// or `cutoff` iterations have elapsed.
pub fn run_rls<R: Rng + ?Sized>(
    policy: &Policy,
    inst: &Instance,
    rng: &mut R,
    cutoff: Option<u64>,
) -> Result<EpisodeTrace> {
    run_rls_with_mode(policy, inst, rng, cutoff, TraceMode::default_for(inst.n()))
}

pub fn run_rls_with_mode<R: Rng + ?Sized>(
    policy: &Policy,
    inst: &Instance,
    rng: &mut R,
    cutoff: Option<u64>,
    mode: TraceMode,
) -> Result<EpisodeTrace> {
    let n = inst.n();
    check_dims(policy, n)?;
    let table = policy.to_table();
    let mut state = RlsState::init(inst, rng);
    let initial_fitness = state.fitness;
    let mut rec = Recorder {
        mode,
        steps: Vec::new(),
    };
    let mut t = 0u64;
    while state.fitness < n && within(cutoff, t) {
        let before = state.fitness;
        let r = table[before];
        let after = state.step(inst, r, rng);
        t += 1;
        rec.record(t, before, r, after);
    }
    Ok(EpisodeTrace {
        n,
        initial_fitness,
        final_fitness: state.fitness,
        steps: rec.steps,
        terminal: if state.fitness == n {
            Terminal::OptimumFound
        } else {
            Terminal::Cutoff
        },
        total_steps: t,
        mode,
    })
}

/// Runs the fitness-level surrogate with the same contract as [`run_rls`].
pub fn run_surrogate<R: Rng + ?Sized>(
    policy: &Policy,
    n: usize,
    rng: &mut R,
    cutoff: Option<u64>,
) -> Result<EpisodeTrace> {
    check_dims(policy, n)?;
    let table = policy.to_table();
    let qs = policy.level_probabilities();
    let mode = TraceMode::default_for(n);
    let mut f = surrogate_initial(n, rng);
    let initial_fitness = f;
    let mut rec = Recorder {
        mode,
        steps: Vec::new(),
    };
    let mut t = 0u64;
    while f < n && within(cutoff, t) {
        let after = surrogate_step(f, qs[f], n, rng);
        t += 1;
        rec.record(t, f, table[f], after);
        f = after;
    }
    Ok(EpisodeTrace {
        n,
        initial_fitness,
        final_fitness: f,
        steps: rec.steps,
        terminal: if f == n {
            Terminal::OptimumFound
        } else {
            Terminal::Cutoff
        },
        total_steps: t,
        mode,
    })
}

/// Runtime of one run without recording a trace.
pub fn sample_runtime<R: Rng + ?Sized>(
    table: &[usize],
    inst: &Instance,
    rng: &mut R,
    cutoff: Option<u64>,
) -> (u64, Terminal) {
    let n = inst.n();
    let mut state = RlsState::init(inst, rng);
    let mut t = 0u64;
    while state.fitness < n && within(cutoff, t) {
        state.step(inst, table[state.fitness], rng);
        t += 1;
    }
    let terminal = if state.fitness == n {
        Terminal::OptimumFound
    } else {
        Terminal::Cutoff
    };
    (t, terminal)
}

/// Surrogate counterpart of [`sample_runtime`]; `qs[i]` is the improvement
/// probability used at fitness `i`.
pub fn sample_runtime_surrogate<R: Rng + ?Sized>(qs: &[f64], rng: &mut R, cutoff: Option<u64>) -> (u64, Terminal) {
    let n = qs.len();
    let mut f = surrogate_initial(n, rng);
    let mut t = 0u64;
    while f < n && within(cutoff, t) {
        f = surrogate_step(f, qs[f], n, rng);
        t += 1;
    }
    (
        t,
        if f == n {
            Terminal::OptimumFound
        } else {
            Terminal::Cutoff
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
    pub min: u64,
    pub max: u64,
    /// Runs stopped by the cutoff; their runtime counts as the cutoff.
    pub censored: usize,
}

impl RunStats {
    pub fn from_samples(samples: &[(u64, Terminal)]) -> Self {
        let xs: Vec<f64> = samples.iter().map(|&(t, _)| t as f64).collect();
        RunStats {
            runs: samples.len(),
            mean: stats::mean(&xs),
            std: stats::sample_std(&xs),
            min: samples.iter().map(|s| s.0).min().unwrap_or(0),
            max: samples.iter().map(|s| s.0).max().unwrap_or(0),
            censored: samples.iter().filter(|s| s.1 == Terminal::Cutoff).count(),
        }
    }

    /// Standard error of the mean.
    pub fn sem(&self) -> f64 {
        self.std / (self.runs as f64).sqrt()
    }
}

fn require_termination(policy: &Policy, runs: usize, cutoff: Option<u64>) -> Result<()> {
    if runs == 0 {
        return Err(Error::invalid("runs must be at least 1"));
    }
    if cutoff.is_none() && expected_runtime(policy).is_infinite() {
        return Err(Error::invalid(
            "policy cannot reach the optimum from every fitness level; a cutoff is required",
        ));
    }
    Ok(())
}

/// Runtimes of `runs` independent runs; run `j` uses stream `j` of `base_seed`.
pub fn sample_runtimes(
    policy: &Policy,
    inst: &Instance,
    runs: usize,
    base_seed: u64,
    cutoff: Option<u64>,
    backend: Backend,
) -> Result<Vec<(u64, Terminal)>> {
    check_dims(policy, inst.n())?;
    require_termination(policy, runs, cutoff)?;
    let table = policy.to_table();
    let qs = policy.level_probabilities();
    Ok((0..runs as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(base_seed, j);
            match backend {
                Backend::Bitstring => sample_runtime(&table, inst, &mut rng, cutoff),
                Backend::Surrogate => sample_runtime_surrogate(&qs, &mut rng, cutoff),
            }
        })
        .collect())
}

/// Monte-Carlo runtime statistics of `runs` bit-string runs, reproducible in
/// `base_seed` regardless of thread count.
pub fn estimate_runtime(
    policy: &Policy,
    inst: &Instance,
    runs: usize,
    base_seed: u64,
    cutoff: Option<u64>,
) -> Result<RunStats> {
    let samples = sample_runtimes(policy, inst, runs, base_seed, cutoff, Backend::Bitstring)?;
    Ok(RunStats::from_samples(&samples))
}
