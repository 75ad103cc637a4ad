//! Portfolios, fitness-dependent policies and their exact runtime moments.
//!
//! A policy maps each fitness `i in 0..n` to a search radius from its
//! portfolio. Monotone (non-increasing) policies are stored compactly as
//! breaking points over the portfolio sorted in descending order: with the
//! sentinels `b_0 = -1` and `b_k = n - 1`, fitness values in
//! `b_{m-1}+1 ..= b_m` use the `m`-th largest radius.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{optimal_radius_full, q_unchecked};

/// Relative slack under which two improvement probabilities count as tied.
pub(crate) const TIE_TOLERANCE: f64 = 1e-12;

/// A strictly increasing set of allowed search radii in `[0..n]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "PortfolioRepr")]
pub struct Portfolio {
    n: usize,
    radii: Vec<usize>,
}

#[derive(Deserialize)]
struct PortfolioRepr {
    n: usize,
    radii: Vec<usize>,
}

impl TryFrom<PortfolioRepr> for Portfolio {
    type Error = Error;

    fn try_from(repr: PortfolioRepr) -> Result<Self> {
        Portfolio::new(repr.n, repr.radii)
    }
}

impl Portfolio {
    /// Builds a portfolio from radii in any order. Duplicates are rejected.
    pub fn new(n: usize, mut radii: Vec<usize>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if radii.is_empty() {
            return Err(Error::invalid("portfolio must be nonempty"));
        }
        radii.sort_unstable();
        if radii.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("duplicate radius in portfolio {radii:?}")));
        }
        if let Some(&r) = radii.last().filter(|&&r| r > n) {
            return Err(Error::InvalidRadius { radius: r, n });
        }
        Ok(Portfolio { n, radii })
    }

    /// Every radius `0..=n`.
    pub fn full(n: usize) -> Self {
        Portfolio::new(n, (0..=n).collect()).expect("full portfolio is valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Radii in ascending order.
    pub fn radii(&self) -> &[usize] {
        &self.radii
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn contains(&self, r: usize) -> bool {
        self.radii.binary_search(&r).is_ok()
    }

    /// Finite expected runtime is guaranteed iff radius 1 is available.
    pub fn solvable(&self) -> bool {
        self.contains(1)
    }

    /// Radii in descending order.
    pub fn descending(&self) -> Vec<usize> {
        self.radii.iter().rev().copied().collect()
    }

    pub fn index_of(&self, r: usize) -> Option<usize> {
        self.radii.binary_search(&r).ok()
    }

    fn require_solvable(&self) -> Result<()> {
        if self.solvable() {
            Ok(())
        } else {
            Err(Error::UnsolvablePortfolio(self.radii.clone()))
        }
    }
}

impl fmt::Display for Portfolio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_list(f, &self.radii)
    }
}

/// How a policy stores its radius choices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// `table[i]` is the radius used at fitness `i`.
    Table(Vec<usize>),
    /// `b_1, ..., b_{k-1}` over the descending portfolio.
    Breakpoints(Vec<i64>),
}

/// A fitness-dependent parameter selection policy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PolicyRepr")]
pub struct Policy {
    portfolio: Portfolio,
    representation: Representation,
}

#[derive(Deserialize)]
struct PolicyRepr {
    portfolio: Portfolio,
    representation: Representation,
}

impl TryFrom<PolicyRepr> for Policy {
    type Error = Error;

    fn try_from(repr: PolicyRepr) -> Result<Self> {
        match repr.representation {
            Representation::Table(t) => Policy::from_table(repr.portfolio, t),
            Representation::Breakpoints(b) => Policy::from_breakpoints(repr.portfolio, b),
        }
    }
}

impl Policy {
    pub fn from_table(portfolio: Portfolio, table: Vec<usize>) -> Result<Self> {
        let n = portfolio.n();
        if table.len() != n {
            return Err(Error::Representation(format!(
                "table has {} entries, expected n = {n}",
                table.len()
            )));
        }
        if let Some((i, r)) = table.iter().enumerate().find(|(_, r)| !portfolio.contains(**r)) {
            return Err(Error::Representation(format!(
                "table entry {r} at fitness {i} is not in portfolio {portfolio}"
            )));
        }
        Ok(Policy {
            portfolio,
            representation: Representation::Table(table),
        })
    }

    pub fn from_breakpoints(portfolio: Portfolio, breakpoints: Vec<i64>) -> Result<Self> {
        let n = portfolio.n() as i64;
        if breakpoints.len() + 1 != portfolio.len() {
            return Err(Error::Representation(format!(
                "{} breakpoints given for a portfolio of size {}",
                breakpoints.len(),
                portfolio.len()
            )));
        }
        if breakpoints.iter().any(|&b| b < -1 || b > n - 1) {
            return Err(Error::Representation(format!(
                "breakpoints {breakpoints:?} leave [-1, {}]",
                n - 1
            )));
        }
        if breakpoints.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Representation(format!(
                "breakpoints {breakpoints:?} are not non-decreasing"
            )));
        }
        Ok(Policy {
            portfolio,
            representation: Representation::Breakpoints(breakpoints),
        })
    }

    /// The policy that always uses `radius`.
    pub fn constant(n: usize, radius: usize) -> Result<Self> {
        let portfolio = Portfolio::new(n, vec![radius])?;
        Policy::from_breakpoints(portfolio, Vec::new())
    }

    pub fn n(&self) -> usize {
        self.portfolio.n()
    }

    pub fn portfolio(&self) -> &Portfolio {
        &self.portfolio
    }

    pub fn representation(&self) -> &Representation {
        &self.representation
    }

    /// Radius used at fitness `i`.
    pub fn lookup(&self, i: usize) -> Result<usize> {
        let n = self.n();
        if i >= n {
            return Err(Error::invalid(format!("fitness {i} outside [0, {}]", n - 1)));
        }
        Ok(match &self.representation {
            Representation::Table(t) => t[i],
            Representation::Breakpoints(b) => {
                let below = b.iter().take_while(|&&bp| bp < i as i64).count();
                self.portfolio.radii()[self.portfolio.len() - 1 - below]
            }
        })
    }

    /// Explicit radius per fitness value.
    pub fn to_table(&self) -> Vec<usize> {
        match &self.representation {
            Representation::Table(t) => t.clone(),
            Representation::Breakpoints(_) => (0..self.n()).map(|i| self.lookup(i).expect("in range")).collect(),
        }
    }

    /// Same policy in table form.
    pub fn as_table(&self) -> Policy {
        Policy {
            portfolio: self.portfolio.clone(),
            representation: Representation::Table(self.to_table()),
        }
    }

    /// Breakpoint encoding; fails for tables that are not non-increasing.
    pub fn to_breakpoints(&self) -> Result<Vec<i64>> {
        let table = match &self.representation {
            Representation::Breakpoints(b) => return Ok(b.clone()),
            Representation::Table(t) => t,
        };
        if let Some(w) = table.windows(2).find(|w| w[0] < w[1]) {
            return Err(Error::Representation(format!(
                "table is not monotone (radius {} followed by {})",
                w[0], w[1]
            )));
        }
        let desc = self.portfolio.descending();
        // b_m = last fitness that uses a radius >= desc[m-1]
        Ok((1..desc.len())
            .map(|m| {
                let bound = desc[m - 1];
                table.iter().take_while(|&&r| r >= bound).count() as i64 - 1
            })
            .collect())
    }

    pub fn as_breakpoints(&self) -> Result<Policy> {
        let b = self.to_breakpoints()?;
        Policy::from_breakpoints(self.portfolio.clone(), b)
    }

    /// Improvement probability used at each fitness level.
    pub fn level_probabilities(&self) -> Vec<f64> {
        let n = self.n();
        self.to_table()
            .iter()
            .enumerate()
            .map(|(i, &r)| q_unchecked(r, i, n))
            .collect()
    }
}

fn write_list<T: fmt::Display>(f: &mut fmt::Formatter<'_>, items: &[T]) -> fmt::Result {
    for (j, v) in items.iter().enumerate() {
        if j > 0 {
            f.write_str(",")?;
        }
        write!(f, "{v}")?;
    }
    Ok(())
}

/// Line-oriented text form:
///
/// ```text
/// n: 50
/// portfolio: 1,2,6
/// breakpoints: 11,24
/// ```
///
/// or `table: r_0,...,r_{n-1}` as the third line.
impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n: {}", self.n())?;
        writeln!(f, "portfolio: {}", self.portfolio)?;
        match &self.representation {
            Representation::Table(t) => {
                f.write_str("table: ")?;
                write_list(f, t)?;
            }
            Representation::Breakpoints(b) => {
                f.write_str("breakpoints: ")?;
                write_list(f, b)?;
            }
        }
        writeln!(f)
    }
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad list element {v:?}")))
        })
        .collect()
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut n = None;
        let mut radii = None;
        let mut body = None;
        for line in s.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("expected `key: value`, got {line:?}")))?;
            match key.trim() {
                "n" => {
                    n = Some(
                        value
                            .trim()
                            .parse::<usize>()
                            .map_err(|e| Error::Parse(format!("bad n: {e}")))?,
                    )
                }
                "portfolio" => radii = Some(parse_list::<usize>(value)?),
                "table" => body = Some(Representation::Table(parse_list(value)?)),
                "breakpoints" => body = Some(Representation::Breakpoints(parse_list(value)?)),
                other => return Err(Error::Parse(format!("unknown key {other:?}"))),
            }
        }
        let n = n.ok_or_else(|| Error::Parse("missing `n:` line".into()))?;
        let radii = radii.ok_or_else(|| Error::Parse("missing `portfolio:` line".into()))?;
        let portfolio = Portfolio::new(n, radii)?;
        match body.ok_or_else(|| Error::Parse("missing `table:` or `breakpoints:` line".into()))? {
            Representation::Table(t) => Policy::from_table(portfolio, t),
            Representation::Breakpoints(b) => Policy::from_breakpoints(portfolio, b),
        }
    }
}

/// Breaking points by the linear scan: for each consecutive descending pair,
/// remember the last fitness where the larger radius is at least as good and
/// stop at the first where it is strictly worse.
pub fn breaking_points_linear(portfolio: &Portfolio) -> Result<Vec<i64>> {
    portfolio.require_solvable()?;
    let n = portfolio.n();
    let desc = portfolio.descending();
    let mut c = 0i64;
    let mut out = Vec::with_capacity(desc.len().saturating_sub(1));
    for pair in desc.windows(2) {
        let (larger, smaller) = (pair[0], pair[1]);
        for j in 1..=n {
            if q_unchecked(larger, j, n) < q_unchecked(smaller, j, n) {
                break;
            }
            c = j as i64;
        }
        out.push(c);
    }
    Ok(out)
}

/// Same contract as [`breaking_points_linear`], locating the first fitness
/// where the larger radius loses by binary search. While the smaller radius
/// can still improve, the loss predicate is monotone in the fitness because
/// `q(a, j) / q(b, j)` decreases in `j` for `a > b`.
pub fn breaking_points_bisect(portfolio: &Portfolio) -> Result<Vec<i64>> {
    portfolio.require_solvable()?;
    let n = portfolio.n();
    let desc = portfolio.descending();
    let mut c = 0i64;
    let mut out = Vec::with_capacity(desc.len().saturating_sub(1));
    for pair in desc.windows(2) {
        let (larger, smaller) = (pair[0], pair[1]);
        let loses = |j: usize| q_unchecked(larger, j, n) < q_unchecked(smaller, j, n);
        // past the last j where the smaller radius can improve both are 0 and
        // the predicate turns false again, so only search up to there
        let live = first_true(1, n + 1, |j| q_unchecked(smaller, j, n) <= 0.0) - 1;
        let mut lo = first_true(1, live + 1, loses);
        if lo == live + 1 {
            lo = n + 1;
        }
        if lo > 1 {
            c = lo as i64 - 1;
        }
        out.push(c);
    }
    Ok(out)
}

/// Smallest `j` in `[lo, hi)` with `pred(j)`, or `hi` if none; `pred` must be
/// monotone on the range.
fn first_true(mut lo: usize, mut hi: usize, pred: impl Fn(usize) -> bool) -> usize {
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// The breakpoint-form optimal policy of a solvable portfolio.
pub fn optimal_breakpoint_policy(portfolio: &Portfolio) -> Result<Policy> {
    let b = breaking_points_linear(portfolio)?;
    Policy::from_breakpoints(portfolio.clone(), b)
}

/// Optimal table policy over a restricted portfolio.
///
/// At each fitness the unrestricted optimum `floor(n/(i+1))` is used when
/// available; otherwise the better of its nearest portfolio neighbours below
/// and above. Ties go to the smaller radius.
pub fn optimal_restricted_policy(portfolio: &Portfolio) -> Result<Policy> {
    portfolio.require_solvable()?;
    let n = portfolio.n();
    let radii = portfolio.radii();
    let table = (0..n)
        .map(|i| {
            let best = optimal_radius_full(i, n).expect("i < n");
            match radii.binary_search(&best) {
                Ok(_) => best,
                Err(pos) => {
                    let below = pos.checked_sub(1).map(|p| radii[p]);
                    let above = radii.get(pos).copied();
                    match (below, above) {
                        (Some(lo), Some(hi)) => {
                            if beats(q_unchecked(hi, i, n), q_unchecked(lo, i, n)) {
                                hi
                            } else {
                                lo
                            }
                        }
                        (Some(lo), None) => lo,
                        (None, Some(hi)) => hi,
                        (None, None) => unreachable!("portfolio is nonempty"),
                    }
                }
            }
        })
        .collect();
    Policy::from_table(portfolio.clone(), table)
}

/// `a` strictly better than `b` beyond the tie tolerance.
#[inline]
pub(crate) fn beats(a: f64, b: f64) -> bool {
    a > b * (1.0 + TIE_TOLERANCE)
}

/// Expected runtime and variance of a policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeMoments {
    pub expectation: f64,
    pub variance: f64,
}

impl RuntimeMoments {
    pub fn of(policy: &Policy) -> Self {
        RuntimeMoments {
            expectation: expected_runtime(policy),
            variance: runtime_variance(policy),
        }
    }

    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.expectation.is_finite()
    }
}

/// `(1/2) * sum_i 1/q(pi(i), i)`: each level is visited with probability 1/2
/// and then left after a geometric number of iterations. Infinite if some
/// level cannot be left.
pub fn expected_runtime(policy: &Policy) -> f64 {
    expectation_from_levels(&policy.level_probabilities())
}

/// `sum_i (3 - 2 q_i) / (4 q_i^2)`, the variance of `sum_i A_i G_i` with
/// `A_i ~ Bernoulli(1/2)` and `G_i ~ Geometric(q_i)` independent.
pub fn runtime_variance(policy: &Policy) -> f64 {
    variance_from_levels(&policy.level_probabilities())
}

pub(crate) fn expectation_from_levels(q: &[f64]) -> f64 {
    if q.iter().any(|&p| p <= 0.0) {
        return f64::INFINITY;
    }
    0.5 * q.iter().map(|p| 1.0 / p).sum::<f64>()
}

pub(crate) fn variance_from_levels(q: &[f64]) -> f64 {
    if q.iter().any(|&p| p <= 0.0) {
        return f64::INFINITY;
    }
    q.iter().map(|p| (3.0 - 2.0 * p) / (4.0 * p * p)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pf(n: usize, r: &[usize]) -> Portfolio {
        Portfolio::new(n, r.to_vec()).unwrap()
    }

    #[test]
    fn portfolio_validation() {
        assert!(Portfolio::new(10, vec![]).is_err());
        assert!(Portfolio::new(10, vec![1, 1]).is_err());
        assert!(Portfolio::new(10, vec![1, 11]).is_err());
        let p = pf(10, &[6, 1, 2]);
        assert_eq!(p.radii(), &[1, 2, 6]);
        assert!(p.solvable());
        assert!(!pf(10, &[2, 3]).solvable());
    }

    #[test]
    fn lookup_breakpoint_examples() {
        let p = Policy::from_breakpoints(pf(50, &[1, 2, 6]), vec![11, 24]).unwrap();
        let got: Vec<_> = [0, 11, 12, 24, 25].iter().map(|&i| p.lookup(i).unwrap()).collect();
        assert_eq!(got, vec![6, 6, 2, 2, 1]);
        assert!(p.lookup(50).is_err());
        let one = Policy::constant(50, 1).unwrap();
        assert!((0..50).all(|i| one.lookup(i).unwrap() == 1));
        let t = Policy::from_table(pf(3, &[1, 2]), vec![2, 1, 1]).unwrap();
        assert_eq!(t.lookup(0).unwrap(), 2);
    }

    #[test]
    fn breakpoints_of_reference_portfolios() {
        assert_eq!(breaking_points_linear(&pf(50, &[1, 2, 6])).unwrap(), vec![11, 24]);
        assert_eq!(breaking_points_linear(&pf(100, &[1, 2, 4])).unwrap(), vec![28, 49]);
        assert_eq!(breaking_points_bisect(&pf(50, &[1, 2, 6])).unwrap(), vec![11, 24]);
        assert_eq!(breaking_points_bisect(&pf(17, &[1])).unwrap(), Vec::<i64>::new());
    }

    #[test]
    fn breakpoints_two_radius_closed_form() {
        for n in 2..=120 {
            let expected = ((n - 1) / 2) as i64;
            assert_eq!(breaking_points_linear(&pf(n, &[1, 2])).unwrap(), vec![expected]);
        }
    }

    #[test]
    fn unsolvable_rejected() {
        let p = pf(50, &[2, 6]);
        assert!(matches!(breaking_points_linear(&p), Err(Error::UnsolvablePortfolio(_))));
        assert!(matches!(breaking_points_bisect(&p), Err(Error::UnsolvablePortfolio(_))));
        assert!(matches!(
            optimal_restricted_policy(&p),
            Err(Error::UnsolvablePortfolio(_))
        ));
    }

    #[test]
    fn restricted_policy_examples() {
        let n = 50;
        let full = optimal_restricted_policy(&Portfolio::full(n)).unwrap();
        assert_eq!(full.to_table(), (0..n).map(|i| n / (i + 1)).collect::<Vec<_>>());

        let p = optimal_restricted_policy(&pf(50, &[1, 2, 6])).unwrap();
        let t = p.to_table();
        assert!(t[..=11].iter().all(|&r| r == 6));
        assert!(t[12..=24].iter().all(|&r| r == 2));
        assert!(t[25..].iter().all(|&r| r == 1));

        let es = optimal_restricted_policy(&pf(50, &[1, 17, 33])).unwrap().to_table();
        assert!(es[7..].iter().all(|&r| r == 1));
        // exact tie q(33,1) = q(17,1) resolves to the smaller radius
        assert_eq!(es[0], 33);
        assert_eq!(es[1], 17);
    }

    #[test]
    fn constant_one_runtime() {
        let p = Policy::constant(50, 1).unwrap();
        assert_eq!(expected_runtime(&p), 1250.0);
        assert_eq!(expected_runtime(&Policy::constant(100, 1).unwrap()), 5000.0);
        let var = runtime_variance(&p);
        let expected = 50.0 * (3.0 - 2.0 / 50.0) / (4.0 / 2500.0);
        assert!((var - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn single_level_variance() {
        let p = Policy::constant(1, 1).unwrap();
        assert_eq!(runtime_variance(&p), 0.25);
        assert_eq!(expected_runtime(&p), 0.5);
    }

    #[test]
    fn unreachable_level_is_infinite() {
        let p = Policy::constant(10, 2).unwrap();
        assert_eq!(expected_runtime(&p), f64::INFINITY);
        assert_eq!(runtime_variance(&p), f64::INFINITY);
        let z = Policy::constant(10, 0).unwrap();
        assert_eq!(expected_runtime(&z), f64::INFINITY);
    }

    #[test]
    fn optimal_two_radius_value() {
        // closed-form evaluation, computed independently (rational arithmetic) in tests/policy_oracles.rs
        let p = optimal_restricted_policy(&pf(50, &[1, 4])).unwrap();
        let v = expected_runtime(&p) / 2500.0;
        assert!((v - 0.409_830_645_161_290_4).abs() < 1e-13, "{v}");
    }

    #[test]
    fn conversions() {
        let k = pf(50, &[1, 2, 6]);
        let p = Policy::from_breakpoints(k.clone(), vec![11, 24]).unwrap();
        let back = p.as_table().as_breakpoints().unwrap();
        assert_eq!(back, p);

        let c = Policy::from_table(pf(5, &[1]), vec![1; 5]).unwrap();
        assert_eq!(c.to_breakpoints().unwrap(), Vec::<i64>::new());

        let bad = Policy::from_table(pf(5, &[1, 2]), vec![1, 3, 1, 1, 1]);
        assert!(bad.is_err(), "radius 3 is not in the portfolio");
        let nm = Policy::from_table(pf(6, &[1, 6]), vec![1, 6, 1, 1, 1, 1]).unwrap();
        assert!(matches!(nm.to_breakpoints(), Err(Error::Representation(_))));
    }

    #[test]
    fn breakpoint_validation() {
        let k = pf(50, &[1, 2, 6]);
        assert!(Policy::from_breakpoints(k.clone(), vec![24, 11]).is_err());
        assert!(Policy::from_breakpoints(k.clone(), vec![-2, 11]).is_err());
        assert!(Policy::from_breakpoints(k.clone(), vec![11, 50]).is_err());
        assert!(Policy::from_breakpoints(k.clone(), vec![11]).is_err());
        assert!(Policy::from_breakpoints(k, vec![-1, 49]).is_ok());
    }

    #[test]
    fn text_form() {
        let p = Policy::from_breakpoints(pf(50, &[1, 2, 6]), vec![11, 24]).unwrap();
        let text = p.to_string();
        assert_eq!(text, "n: 50\nportfolio: 1,2,6\nbreakpoints: 11,24\n");
        assert_eq!(text.parse::<Policy>().unwrap(), p);

        let c = Policy::constant(3, 1).unwrap();
        assert_eq!(c.to_string(), "n: 3\nportfolio: 1\nbreakpoints: \n");
        assert_eq!(c.to_string().parse::<Policy>().unwrap(), c);

        let t = p.as_table();
        assert_eq!(t.to_string().parse::<Policy>().unwrap().to_string(), t.to_string());
        assert!("n: 3\nportfolio: 1\n".parse::<Policy>().is_err());
        assert!("n: 3\nportfolio: 1\ncolour: 1\n".parse::<Policy>().is_err());
    }
}
