//! Closed-form quantities checked against independent computations:
//! exhaustive subset counting, exact rational arithmetic, brute-force argmax
//! policies and a Markov-chain recursion over fitness levels.

use lodac::portfolio::search_optimal_portfolio;
use lodac::sim::stream_rng;
use lodac::*;
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn pascal(n: usize) -> Vec<Vec<BigInt>> {
    let mut rows = vec![vec![BigInt::from(1u32)]];
    for m in 1..=n {
        let prev = &rows[m - 1];
        let mut row = vec![BigInt::from(1u32); m + 1];
        for j in 1..m {
            row[j] = &prev[j - 1] + &prev[j];
        }
        rows.push(row);
    }
    rows
}

fn choose(p: &[Vec<BigInt>], n: i64, k: i64) -> BigInt {
    if n < 0 || k < 0 || k > n {
        BigInt::from(0u32)
    } else {
        p[n as usize][k as usize].clone()
    }
}

/// Exact `q(r, i)` from the hypergeometric form `C(n-i-1, r-1) / C(n, r)`.
fn q_exact(p: &[Vec<BigInt>], r: usize, i: usize, n: usize) -> BigRational {
    if r == 0 {
        return BigRational::from_integer(BigInt::from(0u32));
    }
    BigRational::new(
        choose(p, (n - i - 1) as i64, r as i64 - 1),
        choose(p, n as i64, r as i64),
    )
}

fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

fn assert_rel_close(got: f64, exact: &BigRational, rel: f64, what: &str) {
    let zero = BigRational::from_integer(BigInt::from(0u32));
    if *exact == zero {
        assert_eq!(got, 0.0, "{what}: expected exactly 0");
        return;
    }
    let diff = rat(got) - exact;
    let diff = if diff < zero { -diff } else { diff };
    let mag = if *exact < zero { -exact.clone() } else { exact.clone() };
    assert!(diff <= mag * rat(rel), "{what}: {got} not within {rel} of exact value");
}

#[test]
fn improvement_probability_matches_subset_count() {
    // canonical instance: fitness i means bits 0..i are one and bit i is zero
    for n in 1..=12usize {
        for i in 0..n {
            let mut hits = vec![0u64; n + 1];
            let mut total = vec![0u64; n + 1];
            for mask in 0u32..(1 << n) {
                let r = mask.count_ones() as usize;
                total[r] += 1;
                let prefix_clear = mask & ((1u32 << i) - 1) == 0;
                if prefix_clear && mask & (1 << i) != 0 {
                    hits[r] += 1;
                }
            }
            for r in 0..=n {
                let exact = BigRational::new(BigInt::from(hits[r]), BigInt::from(total[r]));
                let got = improvement_probability(r, i, n).unwrap();
                assert_rel_close(got, &exact, 1e-12, &format!("q({r},{i}) n={n}"));
            }
        }
    }
}

#[test]
fn improvement_probability_matches_hypergeometric_form() {
    let p = pascal(200);
    for n in [13usize, 20, 37, 50, 64, 100, 150, 200] {
        for i in 0..n {
            for r in 0..=n {
                let got = improvement_probability(r, i, n).unwrap();
                assert_rel_close(got, &q_exact(&p, r, i, n), 1e-12, &format!("q({r},{i}) n={n}"));
            }
        }
    }
}

#[test]
fn improvement_probability_rejects_bad_arguments() {
    assert!(improvement_probability(1, 0, 0).is_err());
    assert!(improvement_probability(11, 0, 10).is_err());
    assert!(improvement_probability(1, 10, 10).is_err());
}

#[test]
fn prefers_larger_matches_exact_comparison() {
    let p = pascal(200);
    let mut ties = 0;
    for n in 5..=200usize {
        for r in 0..n {
            for i in 0..n {
                // q(r, i) <= q(r + 1, i), cross-multiplied
                let lhs = choose(&p, (n - i - 1) as i64, r as i64 - 1) * choose(&p, n as i64, r as i64 + 1);
                let rhs = choose(&p, (n - i - 1) as i64, r as i64) * choose(&p, n as i64, r as i64);
                if r > 0 && lhs == rhs {
                    ties += 1;
                }
                let expected = r == 0 || lhs <= rhs;
                assert_eq!(prefers_larger(r, i, n).unwrap(), expected, "n={n} r={r} i={i}");
            }
        }
    }
    // the boundary case i (r + 1) = n - r occurs and counts as preferring the larger radius
    assert!(ties > 0);
}

#[test]
fn prefers_larger_on_float_values() {
    // direct comparison of the computed probabilities away from exact ties
    for n in 5..=200usize {
        for r in 0..n {
            for i in 0..n {
                if i * (r + 1) == n - r {
                    continue;
                }
                let a = improvement_probability(r, i, n).unwrap();
                let b = improvement_probability(r + 1, i, n).unwrap();
                assert_eq!(prefers_larger(r, i, n).unwrap(), a <= b, "n={n} r={r} i={i}");
            }
        }
    }
}

#[test]
fn full_optimal_radius_maximizes_probability() {
    let p = pascal(200);
    for n in 1..=200usize {
        for i in 0..n {
            let best = optimal_radius_full(i, n).unwrap();
            let qb = q_exact(&p, best, i, n);
            for r in 0..=n {
                assert!(q_exact(&p, r, i, n) <= qb, "n={n} i={i}: radius {r} beats {best}");
            }
        }
    }
}

fn random_portfolio<R: Rng>(n: usize, k: usize, rng: &mut R) -> Portfolio {
    let mut others: Vec<usize> = (2..=n).collect();
    others.shuffle(rng);
    let mut radii = vec![1];
    radii.extend(others.into_iter().take(k - 1));
    Portfolio::new(n, radii).unwrap()
}

fn argmax_table(portfolio: &Portfolio) -> Vec<usize> {
    let n = portfolio.n();
    (0..n)
        .map(|i| {
            let mut best = portfolio.radii()[0];
            for &r in portfolio.radii() {
                if improvement_probability(r, i, n).unwrap() > improvement_probability(best, i, n).unwrap() {
                    best = r;
                }
            }
            best
        })
        .collect()
}

#[test]
fn bisection_equals_linear_scan() {
    let mut rng = stream_rng(11, 0);
    for _ in 0..10_000 {
        let n = rng.gen_range(2..=200);
        let k = rng.gen_range(1..=n.min(8));
        let pf = random_portfolio(n, k, &mut rng);
        assert_eq!(
            breaking_points_bisect(&pf).unwrap(),
            breaking_points_linear(&pf).unwrap(),
            "{pf}"
        );
    }
    for a in 2..=50 {
        for b in a + 1..=50 {
            let pf = Portfolio::new(50, vec![1, a, b]).unwrap();
            assert_eq!(
                breaking_points_bisect(&pf).unwrap(),
                breaking_points_linear(&pf).unwrap()
            );
        }
    }
}

#[test]
fn breakpoint_policy_attains_argmax_runtime() {
    let mut rng = stream_rng(12, 0);
    for _ in 0..10_000 {
        let n = rng.gen_range(2..=100);
        let k = rng.gen_range(1..=n.min(8));
        let pf = random_portfolio(n, k, &mut rng);
        let b = breaking_points_linear(&pf).unwrap();
        assert!(b.windows(2).all(|w| w[0] <= w[1]), "{pf}: {b:?}");
        let bp = Policy::from_breakpoints(pf.clone(), b).unwrap();
        let brute = Policy::from_table(pf.clone(), argmax_table(&pf)).unwrap();
        let restricted = optimal_restricted_policy(&pf).unwrap();
        let e = expected_runtime(&brute);
        assert!((expected_runtime(&bp) - e).abs() <= 1e-12 * e, "{pf}");
        assert!((expected_runtime(&restricted) - e).abs() <= 1e-12 * e, "{pf}");
    }
}

#[test]
fn known_breakpoints() {
    let pf = Portfolio::new(50, vec![1, 2, 6]).unwrap();
    assert_eq!(breaking_points_linear(&pf).unwrap(), vec![11, 24]);
    let es = lodac::make_portfolio(FamilyKind::EvenlySpread, 3, 50).unwrap();
    assert_eq!(es.radii(), &[1, 17, 33]);
    assert_eq!(breaking_points_linear(&es).unwrap(), vec![0, 6]);
}

/// Exact expectation and variance by backward recursion over fitness levels:
/// from level `i` the run waits a geometric time and then jumps to `i + 1 + M`
/// with `M` the number of free-riding ones, `P(M = m) = 2^-(m+1)`.
fn chain_moments(q: &[BigRational]) -> (BigRational, BigRational) {
    let n = q.len();
    let one = BigRational::from_integer(BigInt::from(1u32));
    let half = BigRational::new(BigInt::from(1u32), BigInt::from(2u32));
    let zero = one.clone() - one.clone();
    let mut t1 = vec![zero.clone(); n + 1];
    let mut t2 = vec![zero.clone(); n + 1];
    for i in (0..n).rev() {
        let g1 = one.clone() / &q[i];
        let g2 = (one.clone() + one.clone() - &q[i]) / (&q[i] * &q[i]);
        let (mut e1, mut e2) = (zero.clone(), zero.clone());
        let mut pj = half.clone();
        for j in i + 1..=n {
            let p = if j == n {
                pj.clone() * (one.clone() + one.clone())
            } else {
                pj.clone()
            };
            e1 += &p * &t1[j];
            e2 += &p * &t2[j];
            pj *= &half;
        }
        t2[i] = g2 + (one.clone() + one.clone()) * &g1 * &e1 + e2;
        t1[i] = g1 + e1;
    }
    // initial fitness i with probability 2^-(i+1), fitness n with 2^-n
    let (mut m1, mut m2) = (zero.clone(), zero.clone());
    let mut pi = half.clone();
    for i in 0..=n {
        let p = if i == n {
            pi.clone() * (one.clone() + one.clone())
        } else {
            pi.clone()
        };
        m1 += &p * &t1[i];
        m2 += &p * &t2[i];
        pi *= &half;
    }
    let var = m2 - &m1 * &m1;
    (m1, var)
}

#[test]
fn runtime_moments_match_markov_chain() {
    let p = pascal(12);
    let mut rng = stream_rng(13, 0);
    for _ in 0..200 {
        let n = rng.gen_range(1..=10);
        let table: Vec<usize> = (0..n).map(|i| rng.gen_range(1..=n - i)).collect();
        let mut radii = table.clone();
        radii.push(1);
        radii.sort_unstable();
        radii.dedup();
        let policy = Policy::from_table(Portfolio::new(n, radii).unwrap(), table.clone()).unwrap();
        let q: Vec<BigRational> = table.iter().enumerate().map(|(i, &r)| q_exact(&p, r, i, n)).collect();
        let (e, v) = chain_moments(&q);
        assert_rel_close(expected_runtime(&policy), &e, 1e-12, &format!("E {table:?}"));
        assert_rel_close(runtime_variance(&policy), &v, 1e-12, &format!("Var {table:?}"));
    }
}

#[test]
fn runtime_bounds_and_constant_one() {
    let one = Policy::constant(50, 1).unwrap();
    assert_eq!(expected_runtime(&one), 1250.0);
    let mut rng = stream_rng(14, 0);
    for n in [50usize, 100] {
        let n2 = (n * n) as f64;
        let full = optimal_restricted_policy(&Portfolio::full(n)).unwrap();
        let lower = expected_runtime(&full);
        assert!(lower >= 0.387 * n2 && lower <= 0.39 * n2, "n={n}: {}", lower / n2);
        for _ in 0..1000 {
            let k = rng.gen_range(1..=10);
            let pf = random_portfolio(n, k, &mut rng);
            let e = expected_runtime(&optimal_restricted_policy(&pf).unwrap());
            assert!(
                e >= lower * (1.0 - 1e-12) && e <= 0.5 * n2 * (1.0 + 1e-12),
                "{pf}: {}",
                e / n2
            );
        }
    }
}

#[test]
fn larger_portfolios_never_hurt() {
    let mut rng = stream_rng(15, 0);
    for _ in 0..2000 {
        let n = rng.gen_range(3..=120);
        let k = rng.gen_range(1..n.min(8));
        let small = random_portfolio(n, k, &mut rng);
        let extra = rng.gen_range(2..=n);
        let mut radii = small.radii().to_vec();
        radii.push(extra);
        radii.sort_unstable();
        radii.dedup();
        let big = Portfolio::new(n, radii).unwrap();
        let es = expected_runtime(&optimal_restricted_policy(&small).unwrap());
        let eb = expected_runtime(&optimal_restricted_policy(&big).unwrap());
        assert!(eb <= es * (1.0 + 1e-12), "{small} vs {big}");
    }
}

#[test]
fn optimal_family_is_best_and_stable_across_dimensions() {
    let expected = [(2, vec![1, 4]), (3, vec![1, 2, 6]), (4, vec![1, 2, 4, 11])];
    for n in [50usize, 100] {
        for (k, radii) in &expected {
            let (opt, moments) = search_optimal_portfolio(*k, n, 1).unwrap();
            assert_eq!(opt.radii(), radii.as_slice(), "n={n} k={k}");
            for kind in [
                FamilyKind::PowersOf2,
                FamilyKind::InitialSegment,
                FamilyKind::EvenlySpread,
            ] {
                if !kind.defined(*k, n) {
                    continue;
                }
                let pf = make_portfolio(kind, *k, n).unwrap();
                let e = expected_runtime(&optimal_restricted_policy(&pf).unwrap());
                assert!(moments.expectation <= e, "n={n} k={k} {kind}");
            }
        }
    }
}

#[test]
fn family_ordering_at_fifty() {
    let n = 50;
    let mut previous = f64::INFINITY;
    for k in 2..=5 {
        let (_, opt) = search_optimal_portfolio(k, n, 1).unwrap();
        assert!(opt.expectation <= previous, "k={k}");
        previous = opt.expectation;
        if k < 3 {
            continue;
        }
        let e = |kind| expected_runtime(&optimal_restricted_policy(&make_portfolio(kind, k, n).unwrap()).unwrap());
        let p2 = e(FamilyKind::PowersOf2);
        let is = e(FamilyKind::InitialSegment);
        let es = e(FamilyKind::EvenlySpread);
        assert!(
            opt.expectation <= p2 && p2 <= is && is <= es,
            "k={k}: {} {p2} {is} {es}",
            opt.expectation
        );
    }
}

#[test]
fn sweep_is_sorted_and_headed_by_search_result() {
    let sweep = sweep_all_portfolios(3, 50, true, 10_000).unwrap();
    assert_eq!(sweep.len(), 49 * 48 / 2);
    assert!(sweep.windows(2).all(|w| w[0].expected_runtime <= w[1].expected_runtime));
    assert_eq!(sweep[0].portfolio.radii(), &[1, 2, 6]);
    for rec in sweep.iter().step_by(97) {
        let e = expected_runtime(&optimal_restricted_policy(&rec.portfolio).unwrap());
        assert!((rec.expected_runtime - e).abs() <= 1e-12 * e);
        assert_eq!(rec.normalized, rec.expected_runtime / 2500.0);
    }
}

fn arb_monotone_policy() -> impl Strategy<Value = Policy> {
    (2usize..80)
        .prop_flat_map(|n| (Just(n), proptest::collection::btree_set(2..=n, 0..6)))
        .prop_flat_map(|(n, extra)| {
            let mut radii = vec![1];
            radii.extend(extra);
            let k = radii.len();
            (Just(n), Just(radii), proptest::collection::vec(-1i64..n as i64, k - 1))
        })
        .prop_map(|(n, radii, mut b)| {
            b.sort_unstable();
            Policy::from_breakpoints(Portfolio::new(n, radii).unwrap(), b).unwrap()
        })
}

proptest! {
    #[test]
    fn probability_range_and_support(n in 1usize..150, r in 0usize..150, i in 0usize..150) {
        prop_assume!(r <= n && i < n);
        let q = improvement_probability(r, i, n).unwrap();
        prop_assert!((0.0..=1.0).contains(&q));
        prop_assert_eq!(q == 0.0, r == 0 || r > n - i);
    }

    #[test]
    fn flip_changes_exactly_r_bits(n in 1usize..120, seed in any::<u64>(), frac in 0.0f64..=1.0) {
        let mut rng = stream_rng(seed, 0);
        let r = (frac * n as f64) as usize;
        let x = BitString::random(n, &mut rng);
        let y = flip_radius(&x, r, &mut rng).unwrap();
        prop_assert_eq!(x.hamming(&y), r);
    }

    #[test]
    fn general_fitness_of_target_is_n(n in 1usize..100, seed in any::<u64>()) {
        let mut rng = stream_rng(seed, 0);
        let inst = Instance::random(n, &mut rng);
        prop_assert_eq!(leading_ones_general(inst.target(), &inst).unwrap(), n);
        let x = BitString::random(n, &mut rng);
        let canon = Instance::canonical(n);
        prop_assert_eq!(leading_ones_general(&x, &canon).unwrap(), leading_ones(&x));
    }

    #[test]
    fn policy_text_round_trip(p in arb_monotone_policy()) {
        let back: Policy = p.to_string().parse().unwrap();
        prop_assert_eq!(&back, &p);
        let table = p.as_table();
        let back: Policy = table.to_string().parse().unwrap();
        prop_assert_eq!(&back, &table);
    }

    #[test]
    fn table_breakpoint_round_trip(p in arb_monotone_policy()) {
        let table = p.as_table();
        prop_assert_eq!(table.to_table(), p.to_table());
        prop_assert_eq!(table.as_breakpoints().unwrap().to_table(), p.to_table());
        prop_assert_eq!(expected_runtime(&table), expected_runtime(&p));
    }

    #[test]
    fn restricted_optimum_beats_any_policy(p in arb_monotone_policy(), seed in any::<u64>()) {
        let pf = p.portfolio().clone();
        let opt = expected_runtime(&optimal_restricted_policy(&pf).unwrap());
        prop_assert!(opt <= expected_runtime(&p) * (1.0 + 1e-12));
        let mut rng = stream_rng(seed, 0);
        let table: Vec<usize> = (0..pf.n()).map(|_| *pf.radii().choose(&mut rng).unwrap()).collect();
        let any = Policy::from_table(pf, table).unwrap();
        prop_assert!(opt <= expected_runtime(&any) * (1.0 + 1e-12));
    }

    #[test]
    fn variance_is_positive_and_finite_iff_expectation_is(p in arb_monotone_policy()) {
        let e = expected_runtime(&p);
        let v = runtime_variance(&p);
        prop_assert_eq!(e.is_finite(), v.is_finite());
        if e.is_finite() {
            prop_assert!(v > 0.0 && e > 0.0);
        }
    }
}
