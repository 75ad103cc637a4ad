//! LeadingOnes fitness, the exact-radius mutation operator and the
//! closed-form improvement probability of the (1+1)-RLS.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fixed-length bit string.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitString(Vec<bool>);

impl BitString {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::invalid("bit string must have length n >= 1"));
        }
        Ok(BitString(bits))
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "dimension must be positive");
        BitString(vec![false; n])
    }

    pub fn ones(n: usize) -> Self {
        assert!(n >= 1, "dimension must be positive");
        BitString(vec![true; n])
    }

    /// Uniform sample from `{0,1}^n`.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        assert!(n >= 1, "dimension must be positive");
        BitString((0..n).map(|_| rng.gen::<bool>()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn get(&self, index: usize) -> bool {
        self.0[index]
    }

    pub fn flip(&mut self, index: usize) {
        self.0[index] = !self.0[index];
    }

    pub fn hamming(&self, other: &BitString) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

impl std::str::FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Parse(format!("unexpected character {other:?} in bit string"))),
            })
            .collect::<Result<Vec<_>>>()?;
        BitString::new(bits)
    }
}

impl std::fmt::Display for BitString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// A generalized LeadingOnes instance: prefix agreement with a hidden target
/// under a hidden permutation of the positions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "InstanceRepr")]
pub struct Instance {
    target: BitString,
    /// `order[j]` is the position inspected j-th (0-based).
    order: Vec<usize>,
    /// Inverse of `order`: `rank[order[j]] == j`.
    #[serde(skip_serializing)]
    rank: Vec<usize>,
}

#[derive(Deserialize)]
struct InstanceRepr {
    target: BitString,
    order: Vec<usize>,
}

impl TryFrom<InstanceRepr> for Instance {
    type Error = Error;

    fn try_from(repr: InstanceRepr) -> Result<Self> {
        Instance::new(repr.target, repr.order)
    }
}

impl Instance {
    pub fn new(target: BitString, order: Vec<usize>) -> Result<Self> {
        let n = target.len();
        if order.len() != n {
            return Err(Error::invalid(format!(
                "permutation has length {} but target has length {n}",
                order.len()
            )));
        }
        let mut rank = vec![usize::MAX; n];
        for (j, &pos) in order.iter().enumerate() {
            if pos >= n || rank[pos] != usize::MAX {
                return Err(Error::invalid("order is not a permutation of 0..n"));
            }
            rank[pos] = j;
        }
        Ok(Instance { target, order, rank })
    }

    /// The classic instance: all-ones target, identity permutation.
    pub fn canonical(n: usize) -> Self {
        Instance::new(BitString::ones(n), (0..n).collect()).expect("identity is a permutation")
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let target = BitString::random(n, rng);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Instance::new(target, order).expect("shuffle yields a permutation")
    }

    pub fn n(&self) -> usize {
        self.target.len()
    }

    pub fn target(&self) -> &BitString {
        &self.target
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Position in inspection order of bit `pos`.
    pub fn rank_of(&self, pos: usize) -> usize {
        self.rank[pos]
    }

    pub fn is_canonical(&self) -> bool {
        self.target.bits().iter().all(|&b| b) && self.order.iter().enumerate().all(|(j, &p)| j == p)
    }

    /// Extends an agreement prefix of length `from` as far as it goes.
    pub(crate) fn extend_prefix(&self, x: &BitString, from: usize) -> usize {
        let mut f = from;
        let n = self.n();
        while f < n && x.get(self.order[f]) == self.target.get(self.order[f]) {
            f += 1;
        }
        f
    }
}

/// Length of the maximal all-ones prefix of `x`.
pub fn leading_ones(x: &BitString) -> usize {
    x.bits().iter().take_while(|&&b| b).count()
}

/// Prefix agreement of `x` with the instance target, read in permuted order.
pub fn leading_ones_general(x: &BitString, inst: &Instance) -> Result<usize> {
    if x.len() != inst.n() {
        return Err(Error::invalid(format!(
            "bit string has length {} but instance has dimension {}",
            x.len(),
            inst.n()
        )));
    }
    Ok(inst.extend_prefix(x, 0))
}

/// Draws a uniformly random `r`-subset of `0..n` by a partial Fisher-Yates
/// shuffle of `scratch`. Any permutation of `0..n` is a valid `scratch`;
/// the first `r` entries hold the subset afterwards.
pub(crate) fn sample_positions<R: Rng + ?Sized>(scratch: &mut [usize], r: usize, rng: &mut R) {
    let n = scratch.len();
    for j in 0..r {
        let pick = rng.gen_range(j..n);
        scratch.swap(j, pick);
    }
}

/// Returns a copy of `x` with exactly `r` distinct, uniformly chosen bits inverted.
pub fn flip_radius<R: Rng + ?Sized>(x: &BitString, r: usize, rng: &mut R) -> Result<BitString> {
    let n = x.len();
    if r > n {
        return Err(Error::InvalidRadius { radius: r, n });
    }
    let mut positions: Vec<usize> = (0..n).collect();
    sample_positions(&mut positions, r, rng);
    let mut y = x.clone();
    for &p in &positions[..r] {
        y.flip(p);
    }
    Ok(y)
}

/// Unchecked improvement probability `q(r, i)` for dimension `n`.
///
/// Multiplies the `r - 1` ratios `(n-i-j)/(n-j)` and returns exactly 0 as soon
/// as a ratio is non-positive.
#[inline]
pub(crate) fn q_unchecked(r: usize, i: usize, n: usize) -> f64 {
    if r == 0 || r + i > n {
        return 0.0;
    }
    let nf = n as f64;
    let mut p = r as f64 / nf;
    for j in 1..r {
        p *= (n - i - j) as f64 / (n - j) as f64;
    }
    p
}

/// Probability that flipping exactly `r` bits of a solution with fitness `i`
/// strictly improves its LeadingOnes value.
pub fn improvement_probability(r: usize, i: usize, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    if r > n {
        return Err(Error::InvalidRadius { radius: r, n });
    }
    if i >= n {
        return Err(Error::invalid(format!("fitness {i} outside [0, {}]", n - 1)));
    }
    Ok(q_unchecked(r, i, n))
}

/// Whether radius `r + 1` is at least as good as radius `r` at fitness `i`,
/// i.e. `i <= (n - r) / (r + 1)`. When `r > n - i` both radii fail with
/// certainty and the tie counts as preferring the larger one.
pub fn prefers_larger(r: usize, i: usize, n: usize) -> Result<bool> {
    if n == 0 || r >= n || i >= n {
        return Err(Error::invalid(format!(
            "need r in [0, n-1] and i in [0, n-1]; got r = {r}, i = {i}, n = {n}"
        )));
    }
    Ok(r + i > n || i * (r + 1) <= n - r)
}

/// Optimal radius over the full portfolio `[0..n]`: `floor(n / (i + 1))`.
pub fn optimal_radius_full(i: usize, n: usize) -> Result<usize> {
    if n == 0 || i >= n {
        return Err(Error::invalid(format!("fitness {i} outside [0, n-1] for n = {n}")));
    }
    Ok(n / (i + 1))
}

/// Dense cache of `q(r, i)` for one dimension, `r` in `0..=n`, `i` in `0..n`.
#[derive(Clone, Debug)]
pub struct ImprovementTable {
    n: usize,
    values: Vec<f64>,
}

impl ImprovementTable {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "dimension must be positive");
        let mut values = vec![0.0; (n + 1) * n];
        for r in 0..=n {
            for i in 0..n {
                values[r * n + i] = q_unchecked(r, i, n);
            }
        }
        ImprovementTable { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn q(&self, r: usize, i: usize) -> f64 {
        self.values[r * self.n + i]
    }

    /// Row of `q(r, ·)` over all fitness values.
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.n..(r + 1) * self.n]
    }
}

impl<'de> Deserialize<'de> for ImprovementTable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let n = usize::deserialize(d)?;
        Ok(ImprovementTable::new(n))
    }
}

impl Serialize for ImprovementTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.n.serialize(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn leading_ones_examples() {
        let mut x = BitString::zeros(50);
        for j in 0..4 {
            x.flip(j);
        }
        assert_eq!(leading_ones(&x), 4);
        assert_eq!(leading_ones(&BitString::ones(8)), 8);
        let y: BitString = "0111111".parse().unwrap();
        assert_eq!(leading_ones(&y), 0);
    }

    #[test]
    fn general_instance_hand_example() {
        let inst = Instance::new("010".parse().unwrap(), vec![0, 1, 2]).unwrap();
        let x: BitString = "011".parse().unwrap();
        assert_eq!(leading_ones_general(&x, &inst).unwrap(), 2);
        assert_eq!(leading_ones_general(inst.target(), &inst).unwrap(), 3);
    }

    #[test]
    fn general_equals_plain_on_canonical_exhaustive() {
        for n in 1..=12usize {
            let inst = Instance::canonical(n);
            assert!(inst.is_canonical());
            for mask in 0u32..(1 << n) {
                let x = BitString::new((0..n).map(|j| mask >> j & 1 == 1).collect()).unwrap();
                assert_eq!(leading_ones_general(&x, &inst).unwrap(), leading_ones(&x));
            }
        }
    }

    #[test]
    fn instance_rejects_bad_permutation() {
        assert!(Instance::new(BitString::ones(3), vec![0, 0, 2]).is_err());
        assert!(Instance::new(BitString::ones(3), vec![0, 1]).is_err());
        assert!(Instance::new(BitString::ones(3), vec![0, 1, 3]).is_err());
    }

    #[test]
    fn length_mismatch_rejected() {
        let inst = Instance::canonical(4);
        assert!(leading_ones_general(&BitString::ones(5), &inst).is_err());
    }

    #[test]
    fn flip_radius_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = BitString::random(20, &mut rng);
        assert_eq!(flip_radius(&x, 0, &mut rng).unwrap(), x);
        let c = flip_radius(&x, 20, &mut rng).unwrap();
        assert!(c.bits().iter().zip(x.bits()).all(|(a, b)| a != b));
        for r in 0..=20 {
            let y = flip_radius(&x, r, &mut rng).unwrap();
            assert_eq!(y.hamming(&x), r);
        }
        assert!(matches!(
            flip_radius(&x, 21, &mut rng),
            Err(Error::InvalidRadius { radius: 21, n: 20 })
        ));
    }

    #[test]
    fn flip_radius_positions_uniform() {
        let n = 10;
        let r = 3;
        let samples = 200_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = BitString::zeros(n);
        let mut counts = vec![0u64; n];
        for _ in 0..samples {
            let y = flip_radius(&x, r, &mut rng).unwrap();
            for (j, &b) in y.bits().iter().enumerate() {
                if b {
                    counts[j] += 1;
                }
            }
        }
        let p = r as f64 / n as f64;
        let sigma = (samples as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - samples as f64 * p).abs() < 4.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn q_trivial_values() {
        let n = 37;
        for i in 0..n {
            assert_eq!(improvement_probability(1, i, n).unwrap(), 1.0 / n as f64);
            assert_eq!(improvement_probability(0, i, n).unwrap(), 0.0);
        }
        for r in 1..=n {
            let q = improvement_probability(r, 0, n).unwrap();
            assert!((q - r as f64 / n as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn q_zero_exactly_beyond_reach() {
        let n = 20;
        for i in 0..n {
            for r in 0..=n {
                let q = improvement_probability(r, i, n).unwrap();
                assert!((0.0..=1.0).contains(&q));
                assert_eq!(q == 0.0, r == 0 || r > n - i, "r = {r}, i = {i}");
            }
        }
    }

    #[test]
    fn argument_errors() {
        assert!(improvement_probability(11, 0, 10).is_err());
        assert!(improvement_probability(1, 10, 10).is_err());
        assert!(prefers_larger(10, 0, 10).is_err());
        assert!(optimal_radius_full(10, 10).is_err());
    }

    #[test]
    fn prefers_larger_examples() {
        assert!(prefers_larger(1, 24, 50).unwrap());
        assert!(!prefers_larger(1, 25, 50).unwrap());
        assert!(prefers_larger(0, 0, 50).unwrap());
    }

    #[test]
    fn optimal_radius_full_examples() {
        assert_eq!(optimal_radius_full(0, 50).unwrap(), 50);
        assert_eq!(optimal_radius_full(1, 50).unwrap(), 25);
    }

    #[test]
    fn table_matches_direct() {
        let t = ImprovementTable::new(30);
        for r in 0..=30 {
            for i in 0..30 {
                assert_eq!(t.q(r, i), q_unchecked(r, i, 30));
            }
        }
    }
}
