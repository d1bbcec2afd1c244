//! Mixture prior densities and the single-sample KL estimate.

use intonation::model::{kl_mc_estimate, reparameterize, LatentPosterior, VampPrior};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

fn gauss(mu: &[f64], sigma: &[f64]) -> LatentPosterior {
    LatentPosterior {
        mu: mu.to_vec(),
        sigma: sigma.to_vec(),
    }
}

fn normal_pdf(z: f64, m: f64, s: f64) -> f64 {
    (-0.5 * ((z - m) / s).powi(2)).exp() / (s * (2.0 * PI).sqrt())
}

#[test]
fn kl_against_itself_is_zero() {
    let q = gauss(&[0.3, -1.2, 2.0], &[0.5, 1.5, 0.1]);
    let prior = VampPrior::new(vec![q.clone()]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let eps: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
        let z = reparameterize(&q, &eps);
        assert!(kl_mc_estimate(&q, &z, &prior).abs() < 1e-12);
    }
}

#[test]
fn kl_of_unit_shift_averages_one_half() {
    let q = gauss(&[0.0], &[1.0]);
    let prior = VampPrior::new(vec![gauss(&[1.0], &[1.0])]);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 20_000;
    let draws: Vec<f64> = (0..n)
        .map(|_| {
            let z = reparameterize(&q, &[StandardNormal.sample(&mut rng)]);
            kl_mc_estimate(&q, &z, &prior)
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    assert!((mean - 0.5).abs() < 4.0 * se, "mean {mean}, se {se}");
}

#[test]
fn two_component_density_matches_closed_form() {
    let prior = VampPrior::new(vec![gauss(&[-1.0, 0.5], &[0.7, 1.3]), gauss(&[2.0, -0.5], &[1.1, 0.4])]);
    for z in [[0.0, 0.0], [-1.0, 0.5], [3.0, -2.0], [0.4, 1.7]] {
        let a = normal_pdf(z[0], -1.0, 0.7) * normal_pdf(z[1], 0.5, 1.3);
        let b = normal_pdf(z[0], 2.0, 1.1) * normal_pdf(z[1], -0.5, 0.4);
        let expected = (0.5 * a + 0.5 * b).ln();
        assert!((prior.log_density(&z) - expected).abs() < 1e-12);
    }
}

#[test]
fn far_tails_stay_finite() {
    let prior = VampPrior::new(vec![gauss(&[0.0], &[0.01]), gauss(&[1.0], &[0.01])]);
    let lp = prior.log_density(&[500.0]);
    assert!(lp.is_finite());
    let single = VampPrior::new(vec![gauss(&[1.0], &[0.01])]).log_density(&[500.0]);
    assert!((lp - (single - 2f64.ln())).abs() < 1e-9 * single.abs());
}

fn arb_components() -> impl Strategy<Value = Vec<(Vec<f64>, Vec<f64>)>> {
    (1usize..4).prop_flat_map(|d| {
        prop::collection::vec((prop::collection::vec(-3.0f64..3.0, d), prop::collection::vec(0.1f64..3.0, d)), 1..8)
    })
}

proptest! {
    #[test]
    fn density_ignores_component_order(comps in arb_components(), shift in 0usize..8, zs in prop::collection::vec(-4.0f64..4.0, 3)) {
        let d = comps[0].0.len();
        let z = &zs[..d.min(3)];
        prop_assume!(z.len() == d);
        let posts: Vec<LatentPosterior> = comps.iter().map(|(m, s)| gauss(m, s)).collect();
        let mut rotated = posts.clone();
        rotated.rotate_left(shift % posts.len());
        rotated.reverse();
        let a = VampPrior::new(posts).log_density(z);
        let b = VampPrior::new(rotated).log_density(z);
        prop_assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn mixture_lies_between_its_components(comps in arb_components(), z0 in -4.0f64..4.0) {
        let d = comps[0].0.len();
        let z = vec![z0; d];
        let posts: Vec<LatentPosterior> = comps.iter().map(|(m, s)| gauss(m, s)).collect();
        let each: Vec<f64> = posts.iter().map(|p| p.log_density(&z)).collect();
        let lp = VampPrior::new(posts).log_density(&z);
        let lo = each.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = each.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lp >= lo - 1e-9 && lp <= hi + 1e-9);
    }

    #[test]
    fn prior_gradient_matches_finite_differences(comps in arb_components(), z0 in -2.0f64..2.0) {
        let d = comps[0].0.len();
        let z: Vec<f64> = (0..d).map(|j| z0 + 0.3 * j as f64).collect();
        let prior = VampPrior::new(comps.iter().map(|(m, s)| gauss(m, s)).collect());
        let g = prior.log_density_with_grads(&z);
        prop_assert!((g.log_p - prior.log_density(&z)).abs() < 1e-12 * g.log_p.abs().max(1.0));
        for j in 0..d {
            let h = 1e-6;
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[j] += h;
            zm[j] -= h;
            let numeric = (prior.log_density(&zp) - prior.log_density(&zm)) / (2.0 * h);
            prop_assert!((g.dz[j] - numeric).abs() < 1e-5 * numeric.abs().max(1.0));
        }
    }
}
