//! Named portfolio families and exhaustive portfolio search.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{beats, optimal_restricted_policy, Portfolio, RuntimeMoments};
use crate::problem::ImprovementTable;

/// Default cap on the number of portfolios a sweep may enumerate.
pub const DEFAULT_SWEEP_CAP: u128 = 5_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    #[serde(rename = "powers_of_2")]
    PowersOf2,
    InitialSegment,
    EvenlySpread,
    Optimal,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 4] = [
        FamilyKind::Optimal,
        FamilyKind::PowersOf2,
        FamilyKind::InitialSegment,
        FamilyKind::EvenlySpread,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::PowersOf2 => "powers_of_2",
            FamilyKind::InitialSegment => "initial_segment",
            FamilyKind::EvenlySpread => "evenly_spread",
            FamilyKind::Optimal => "optimal",
        }
    }

    /// Whether the family is defined for `(k, n)`.
    pub fn defined(self, k: usize, n: usize) -> bool {
        if k < 2 || k > n {
            return false;
        }
        match self {
            // all k powers 1, 2, ..., 2^(k-1) must fit below n
            FamilyKind::PowersOf2 => k <= floor_log2(n) + 1,
            _ => true,
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "powers_of_2" => Ok(FamilyKind::PowersOf2),
            "initial_segment" => Ok(FamilyKind::InitialSegment),
            "evenly_spread" => Ok(FamilyKind::EvenlySpread),
            "optimal" => Ok(FamilyKind::Optimal),
            other => Err(Error::Parse(format!(
                "unknown portfolio family {other:?} (expected powers_of_2, initial_segment, evenly_spread or optimal)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortfolioFamily {
    pub kind: FamilyKind,
    pub k: usize,
    pub n: usize,
}

fn floor_log2(n: usize) -> usize {
    (usize::BITS - 1 - n.leading_zeros()) as usize
}

/// Generates a `powers_of_2`, `initial_segment` or `evenly_spread` portfolio.
/// `optimal` is searched for, not generated; see [`search_optimal_portfolio`].
pub fn make_portfolio(kind: FamilyKind, k: usize, n: usize) -> Result<Portfolio> {
    let undefined = || Error::FamilyUndefined {
        family: kind.name().to_string(),
        k,
        n,
    };
    if kind == FamilyKind::Optimal || !kind.defined(k, n) {
        return Err(undefined());
    }
    let radii: Vec<usize> = match kind {
        FamilyKind::PowersOf2 => (0..k).map(|i| 1usize << i).collect(),
        FamilyKind::InitialSegment => (1..=k).collect(),
        FamilyKind::EvenlySpread => (0..k).map(|i| i * (n / k) + 1).collect(),
        FamilyKind::Optimal => unreachable!(),
    };
    Portfolio::new(n, radii)
}

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = match acc.checked_mul((n - j) as u128) {
            Some(v) => v / (j + 1) as u128,
            None => return u128::MAX,
        };
    }
    acc
}

/// Lexicographic `size`-combinations of `lo..=hi`, starting at a given rank.
struct Combinations {
    current: Vec<usize>,
    lo: usize,
    hi: usize,
    remaining: u64,
}

impl Combinations {
    fn starting_at(lo: usize, hi: usize, size: usize, rank: u64, count: u64) -> Self {
        let current = unrank(lo, hi, size, rank);
        Combinations {
            current,
            lo,
            hi,
            remaining: count,
        }
    }

    fn advance(&mut self) -> bool {
        let size = self.current.len();
        let span = self.hi - self.lo + 1;
        let mut j = size;
        while j > 0 {
            j -= 1;
            if self.current[j] < self.lo + span - size + j {
                self.current[j] += 1;
                for t in j + 1..size {
                    self.current[t] = self.current[t - 1] + 1;
                }
                return true;
            }
        }
        false
    }

    /// Calls `f` on each combination in order.
    fn for_each(mut self, mut f: impl FnMut(&[usize])) {
        while self.remaining > 0 {
            f(&self.current);
            self.remaining -= 1;
            if self.remaining > 0 && !self.advance() {
                break;
            }
        }
    }
}

/// The `rank`-th (0-based) lexicographic `size`-combination of `lo..=hi`.
fn unrank(lo: usize, hi: usize, size: usize, mut rank: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(size);
    let mut next = lo;
    for slot in 0..size {
        loop {
            let rest = (hi - next) as u64;
            let with_next = binomial(rest, (size - slot - 1) as u64) as u64;
            if rank < with_next {
                out.push(next);
                next += 1;
                break;
            }
            rank -= with_next;
            next += 1;
        }
    }
    out
}

/// Evaluates `0.5 * sum_i 1 / max_{r in K} q(r, i)` against a cached
/// `q` table. `radii` must be ascending.
struct FastEvaluator {
    n: usize,
    table: ImprovementTable,
}

impl FastEvaluator {
    fn new(n: usize) -> Self {
        FastEvaluator {
            n,
            table: ImprovementTable::new(n),
        }
    }

    fn expected_runtime(&self, radii: &[usize]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n {
            let mut best_q = self.table.q(radii[0], i);
            for &r in &radii[1..] {
                let q = self.table.q(r, i);
                if beats(q, best_q) {
                    best_q = q;
                }
            }
            if best_q <= 0.0 {
                return f64::INFINITY;
            }
            total += 1.0 / best_q;
        }
        0.5 * total
    }
}

/// Running minimum that keeps the lexicographically smallest portfolio on ties.
#[derive(Clone, Debug)]
struct Best {
    value: f64,
    radii: Vec<usize>,
}

impl Best {
    fn none() -> Self {
        Best {
            value: f64::INFINITY,
            radii: Vec::new(),
        }
    }

    fn offer(&mut self, value: f64, radii: &[usize]) {
        if self.radii.is_empty() || value < self.value || (value == self.value && radii < self.radii.as_slice()) {
            self.value = value;
            self.radii.clear();
            self.radii.extend_from_slice(radii);
        }
    }

    fn merge(mut self, other: Best) -> Best {
        if !other.radii.is_empty() {
            self.offer(other.value, &other.radii);
        }
        self
    }
}

pub fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot build thread pool: {e}")))
}

const CHUNK: u64 = 1 << 16;

/// Brute-force search over all `k`-subsets of `[1..n]` containing 1.
///
/// The result does not depend on `jobs`: combinations are split into fixed
/// rank ranges and reduced by (runtime, lexicographic order).
pub fn search_optimal_portfolio(k: usize, n: usize, jobs: usize) -> Result<(Portfolio, RuntimeMoments)> {
    if k < 2 || k > n {
        return Err(Error::invalid(format!("need 2 <= k <= n, got k = {k}, n = {n}")));
    }
    let total = binomial((n - 1) as u64, (k - 1) as u64);
    let total = u64::try_from(total).map_err(|_| Error::EnumerationTooLarge {
        count: total,
        cap: u64::MAX as u128,
    })?;
    let eval = FastEvaluator::new(n);
    let chunks = total.div_ceil(CHUNK);
    let pool = thread_pool(jobs)?;
    let best = pool.install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let start = c * CHUNK;
                let count = CHUNK.min(total - start);
                let mut best = Best::none();
                let mut radii = vec![1usize; k];
                Combinations::starting_at(2, n, k - 1, start, count).for_each(|combo| {
                    radii[1..].copy_from_slice(combo);
                    best.offer(eval.expected_runtime(&radii), &radii);
                });
                best
            })
            .reduce(Best::none, Best::merge)
    });
    let portfolio = Portfolio::new(n, best.radii)?;
    let moments = RuntimeMoments::of(&optimal_restricted_policy(&portfolio)?);
    Ok((portfolio, moments))
}

/// One evaluated portfolio of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub portfolio: Portfolio,
    pub expected_runtime: f64,
    pub normalized: f64,
}

/// Evaluates every size-`k` portfolio (optionally only those containing 1)
/// under its optimal policy, sorted by expected runtime, ties lexicographic.
pub fn sweep_all_portfolios(k: usize, n: usize, require_radius_one: bool, cap: u128) -> Result<Vec<SweepRecord>> {
    if k < 1 || k > n {
        return Err(Error::invalid(format!("need 1 <= k <= n, got k = {k}, n = {n}")));
    }
    let count = if require_radius_one {
        binomial((n - 1) as u64, (k - 1) as u64)
    } else {
        binomial(n as u64, k as u64)
    };
    if count > cap {
        return Err(Error::EnumerationTooLarge { count, cap });
    }
    let eval = FastEvaluator::new(n);
    let n2 = (n * n) as f64;
    let mut records = Vec::with_capacity(count as usize);
    let mut push = |radii: &[usize]| {
        let expected_runtime = eval.expected_runtime(radii);
        records.push(SweepRecord {
            portfolio: Portfolio::new(n, radii.to_vec()).expect("combination is a valid portfolio"),
            expected_runtime,
            normalized: expected_runtime / n2,
        });
    };
    if require_radius_one {
        let mut radii = vec![1usize; k];
        Combinations::starting_at(2, n, k - 1, 0, count as u64).for_each(|combo| {
            radii[1..].copy_from_slice(combo);
            push(&radii);
        });
    } else {
        Combinations::starting_at(1, n, k, 0, count as u64).for_each(|combo| push(combo));
    }
    records.sort_by(|a, b| {
        a.expected_runtime
            .total_cmp(&b.expected_runtime)
            .then_with(|| a.portfolio.radii().cmp(b.portfolio.radii()))
    });
    Ok(records)
}

/// Cumulative fraction of portfolios at or below each sorted normalized runtime.
pub fn cumulative_curve(records: &[SweepRecord]) -> Vec<(f64, f64)> {
    let total = records.len() as f64;
    records
        .iter()
        .enumerate()
        .map(|(j, r)| (r.normalized, (j + 1) as f64 / total))
        .collect()
}

/// Writes `portfolio;expected_runtime;normalized`, radii space-separated.
pub fn write_sweep_csv<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(b';').from_writer(out);
    w.write_record(["portfolio", "expected_runtime", "normalized"])?;
    for r in records {
        let radii = r
            .portfolio
            .radii()
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(" ");
        w.write_record([radii, r.expected_runtime.to_string(), r.normalized.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
