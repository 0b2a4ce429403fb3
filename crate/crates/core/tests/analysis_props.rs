use pfsmooth_core::analysis::{
    estimator_variance, j_opt, mean, recommended_j, tavc, tavc_with_diagnostics, within_cloud_variance,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn ar1(phi: f64, len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = 0.0;
    (0..len)
        .map(|_| {
            let e: f64 = StandardNormal.sample(&mut rng);
            x = phi * x + e;
            x
        })
        .collect()
}

#[test]
fn ar1_tavc_matches_analytic_value() {
    // innovation variance 1: TAVC = 1 / (1 - phi)^2 = 4
    let t = tavc(&ar1(0.5, 100_000, 3)).unwrap();
    assert!((t / 4.0 - 1.0).abs() < 0.15, "{t}");
}

#[test]
fn within_variance_recovers_known_conditional_variance() {
    // per sweep: a random centre, J draws with variance v around it
    let (r, j, v) = (10_000, 5, 2.5f64);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut sweeps = Vec::with_capacity(r);
    let mut per_sweep = Vec::with_capacity(r);
    for _ in 0..r {
        let centre: f64 = rng.random_range(-10.0..10.0);
        let draws: Vec<Vec<f64>> = (0..j)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                vec![centre + v.sqrt() * z]
            })
            .collect();
        let m = draws.iter().map(|d| d[0]).sum::<f64>() / j as f64;
        per_sweep.push(draws.iter().map(|d| (d[0] - m).powi(2)).sum::<f64>() / (j - 1) as f64);
        sweeps.push(draws);
    }
    let est = within_cloud_variance(&sweeps, 0).unwrap();
    let sd = (per_sweep.iter().map(|s| (s - est).powi(2)).sum::<f64>() / (r - 1) as f64).sqrt();
    assert!((est - v).abs() < 3.0 * sd / (r as f64).sqrt(), "{est}");
}

#[test]
fn trajectory_averages_follow_the_variance_decomposition() {
    // per sweep a correlated smoothing value plus J conditionally independent draws
    let (r, j, sigma_sq) = (200_000, 4, 2.0f64);
    let base = ar1(0.5, r, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut averages = Vec::with_capacity(r);
    let mut within = 0.0;
    for b in &base {
        let draws: Vec<f64> = (0..j)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                b + sigma_sq.sqrt() * z
            })
            .collect();
        let m = mean(&draws);
        within += draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (j - 1) as f64;
        averages.push(m);
    }
    let sigma_hat = within / r as f64;
    let predicted = sigma_hat / j as f64 + tavc(&base).unwrap();
    let observed = tavc(&averages).unwrap();
    assert!((observed / predicted - 1.0).abs() < 0.25, "{observed} vs {predicted}");
}

#[test]
fn trend_is_flagged_as_nonstationary() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let series: Vec<f64> = (0..2000)
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.01 * i as f64 + z
        })
        .collect();
    assert!(tavc_with_diagnostics(&series).unwrap().nonstationary);
    assert!(!tavc_with_diagnostics(&ar1(0.3, 2000, 4)).unwrap().nonstationary);
}

#[test]
fn j_recommendation_rounds_geometric_mean() {
    // geometric mean of (0.74, 18.9, 25.0) is about 7.04
    assert_eq!(recommended_j(&[0.74, 18.9, 25.0]), Some(7));
    assert_eq!(recommended_j(&[]), None);
}

proptest! {
    #[test]
    fn j_opt_is_scale_invariant(
        s in 1e-3f64..1e3, t in 1e-3f64..1e3, a in 1e-3f64..1e3, b in 1e-3f64..1e3, c in 1e-3f64..1e3, d in 1e-3f64..1e3
    ) {
        let base = j_opt(s, t, a, b).unwrap();
        let scaled = j_opt(c * s, c * t, d * a, d * b).unwrap();
        prop_assert!((base - scaled).abs() <= 1e-9 * base);
    }

    #[test]
    fn estimator_variance_decreases_in_j_and_r(
        sigma in 1e-6f64..1e3, tav in 0f64..1e3, j in 1usize..1000, r in 1usize..100_000
    ) {
        let v = estimator_variance(sigma, tav, j, r).unwrap();
        prop_assert!(estimator_variance(sigma, tav, j + 1, r).unwrap() < v);
        prop_assert!(estimator_variance(sigma, tav, j, r + 1).unwrap() < v);
        prop_assert!(v >= tav / r as f64);
    }

    #[test]
    fn tavc_is_non_negative(values in prop::collection::vec(-1e3f64..1e3, 4..200)) {
        prop_assert!(tavc(&values).unwrap() >= 0.0);
    }
}
