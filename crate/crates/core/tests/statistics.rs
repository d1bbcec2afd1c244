//! Binomial tests against exact rational arithmetic, and Holm properties.

use intonation::stats::{
    binomial_ci, binomial_test_one_sided, binomial_test_two_sided, holm_bonferroni, per_pair_report, JudgmentRecord,
    ReportOptions, System,
};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use proptest::prelude::*;

fn choose(n: u64, k: u64) -> BigInt {
    (0..k).fold(BigInt::one(), |acc, i| acc * BigInt::from(n - i) / BigInt::from(i + 1))
}

fn pmf(i: u64, n: u64, p: &BigRational) -> BigRational {
    BigRational::from_integer(choose(n, i))
        * num_traits::pow(p.clone(), i as usize)
        * num_traits::pow(BigRational::one() - p, (n - i) as usize)
}

#[test]
fn one_sided_matches_rationals_up_to_twenty() {
    for (num, den) in [(1, 2), (1, 3), (2, 5), (9, 10)] {
        let p = BigRational::new(BigInt::from(num), BigInt::from(den));
        let pf = num as f64 / den as f64;
        for n in 0..=20u64 {
            for k in 0..=n {
                let exact = (k..=n).fold(BigRational::zero(), |acc, i| acc + pmf(i, n, &p)).to_f64().unwrap();
                let got = binomial_test_one_sided(k, n, pf).unwrap();
                assert!((got - exact).abs() <= 1e-12 * exact, "k={k} n={n} p={pf}: {got} vs {exact}");
            }
        }
    }
}

#[test]
fn two_sided_matches_rationals_up_to_twenty() {
    for (num, den) in [(1, 2), (1, 3), (3, 4)] {
        let p = BigRational::new(BigInt::from(num), BigInt::from(den));
        let pf = num as f64 / den as f64;
        for n in 1..=20u64 {
            let all: Vec<BigRational> = (0..=n).map(|i| pmf(i, n, &p)).collect();
            for k in 0..=n {
                let exact = all
                    .iter()
                    .filter(|m| **m <= all[k as usize])
                    .fold(BigRational::zero(), |acc, m| acc + m)
                    .to_f64()
                    .unwrap()
                    .min(1.0);
                let got = binomial_test_two_sided(k, n, pf).unwrap();
                assert!((got - exact).abs() <= 1e-12 * exact, "k={k} n={n} p={pf}: {got} vs {exact}");
            }
        }
    }
}

#[test]
fn worked_values() {
    assert!((binomial_test_one_sided(5, 10, 0.5).unwrap() - 638.0 / 1024.0).abs() < 1e-15);
    assert_eq!(binomial_test_one_sided(0, 0, 0.5).unwrap(), 1.0);
    assert!((binomial_test_one_sided(7, 7, 0.3).unwrap() - 0.3f64.powi(7)).abs() < 1e-18);

    let r = holm_bonferroni(&[0.01, 0.04, 0.03], 0.05).unwrap();
    assert_eq!(r.reject, [true, false, false]);
    assert!(holm_bonferroni(&[1.0; 6], 0.05).unwrap().reject.iter().all(|r| !r));

    let (lo, hi) = binomial_ci(100, 100, 0.95).unwrap();
    assert_eq!(hi, 1.0);
    assert!(lo > 0.95);
    assert_eq!(binomial_ci(0, 12, 0.95).unwrap().0, 0.0);
}

#[test]
fn planted_pair_is_the_only_rejection() {
    let mut records = Vec::new();
    for pair in 0..38 {
        for system in [System::AeKmeans, System::VaeVamp] {
            for l in 0..16 {
                let planted = system == System::VaeVamp && pair == 7;
                records.push(JudgmentRecord {
                    system,
                    pair_id: format!("p{pair}"),
                    listener_id: format!("l{l}"),
                    judged_different: planted || l % 2 == 0,
                });
            }
        }
    }
    let rows = per_pair_report(&records, &ReportOptions::default()).unwrap();
    assert_eq!(rows.len(), 76);
    let hits: Vec<(System, &str)> = rows.iter().filter(|r| r.significant).map(|r| (r.system, r.pair_id.as_str())).collect();
    assert_eq!(hits, [(System::VaeVamp, "p7")]);
}

proptest! {
    #[test]
    fn holm_is_a_subset_of_uncorrected(p in prop::collection::vec(0.0f64..=1.0, 1..40), alpha in 0.0001f64..0.5) {
        let r = holm_bonferroni(&p, alpha).unwrap();
        for (pi, rej) in p.iter().zip(&r.reject) {
            prop_assert!(!rej || *pi <= alpha);
        }
        for (pi, adj) in p.iter().zip(&r.adjusted) {
            prop_assert!(*adj >= *pi && *adj <= 1.0);
        }
    }

    #[test]
    fn holm_is_monotone_in_alpha(p in prop::collection::vec(0.0f64..=1.0, 1..40), a in 0.0001f64..0.5, b in 0.0001f64..0.5) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let small = holm_bonferroni(&p, lo).unwrap();
        let large = holm_bonferroni(&p, hi).unwrap();
        for (s, l) in small.reject.iter().zip(&large.reject) {
            prop_assert!(!s || *l);
        }
    }

    #[test]
    fn single_test_reduces_to_threshold(p in 0.0f64..=1.0, alpha in 0.0001f64..0.5) {
        prop_assert_eq!(holm_bonferroni(&[p], alpha).unwrap().reject[0], p <= alpha);
    }

    #[test]
    fn tail_is_nonincreasing_in_k(n in 1u64..200, p0 in 0.01f64..0.99) {
        let tails: Vec<f64> = (0..=n).map(|k| binomial_test_one_sided(k, n, p0).unwrap()).collect();
        for w in tails.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn wilson_interval_contains_the_proportion(n in 1u64..500, frac in 0.0f64..=1.0, conf in 0.5f64..0.999) {
        let k = ((n as f64) * frac).round() as u64;
        let (lo, hi) = binomial_ci(k, n, conf).unwrap();
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
    }
}
