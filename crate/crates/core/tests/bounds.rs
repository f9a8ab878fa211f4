use lamc_core::planner::bounds::{hypergeom_cdf_below, hypergeom_pmf, margin, tail_bound};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Zero};

fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

fn exact_cdf_below(population: u64, successes: u64, draws: u64, threshold: u64) -> BigRational {
    let denom = binomial(population, draws);
    let num: BigInt = (0..threshold.min(draws + 1))
        .map(|a| binomial(successes, a) * binomial(population - successes, draws - a))
        .sum();
    BigRational::new(num, denom)
}

#[test]
fn float_pmf_matches_exact_rationals() {
    for (m, k, phi) in [(20u64, 8u64, 5u64), (100, 40, 20), (200, 120, 100), (50, 0, 10), (50, 50, 10)] {
        let mut total = 0.0f64;
        for a in 0..=phi {
            let exact = BigRational::new(binomial(k, a) * binomial(m - k, phi - a), binomial(m, phi));
            let float = hypergeom_pmf(m, k, phi, a).unwrap();
            let exact_f = exact.numer().to_string().parse::<f64>().unwrap() / exact.denom().to_string().parse::<f64>().unwrap();
            assert!((float - exact_f).abs() <= 1e-12 * exact_f.max(1e-300) + 1e-300, "{m} {k} {phi} {a}");
            total += float;
        }
        assert!((total - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn tail_bound_dominates_exact_cdf_on_dense_grid() {
    let mut checked = 0;
    for m in [10u64, 30, 60, 150] {
        for k in (1..=m).step_by((m / 10) as usize) {
            for phi in (1..=m).step_by((m / 8) as usize) {
                for t in 1..=phi.min(10) {
                    let share = k as f64 / m as f64;
                    if margin(share, t, phi) <= 0.0 {
                        continue;
                    }
                    let exact = exact_cdf_below(m, k, phi, t);
                    let bound = BigRational::from_f64(tail_bound(share, t, phi)).unwrap();
                    assert!(exact <= bound, "M={m} K={k} phi={phi} T={t}");
                    let float = hypergeom_cdf_below(m, k, phi, t).unwrap();
                    assert!(float <= tail_bound(share, t, phi) + 1e-12);
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 500);
}
