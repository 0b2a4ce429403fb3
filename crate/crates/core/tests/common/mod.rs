//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pfsmooth_core::filter::FilterTrace;
use pfsmooth_core::model::{DiscreteHmmParams, LinearGaussianParams, ObservationRecord};
use pfsmooth_core::smoother::SmoothingMarginals;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_distribution(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| 0.05 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

/// Random HMM with strictly positive entries and `n_symbols` symbols.
pub fn random_hmm(n_states: usize, n_symbols: usize, seed: u64) -> DiscreteHmmParams {
    let mut r = rng(seed);
    DiscreteHmmParams {
        initial: random_distribution(n_states, &mut r),
        transition: (0..n_states).map(|_| random_distribution(n_states, &mut r)).collect(),
        emission: (0..n_states).map(|_| random_distribution(n_symbols, &mut r)).collect(),
    }
}

pub fn random_symbols(len: usize, n_symbols: usize, seed: u64) -> ObservationRecord {
    let mut r = rng(seed);
    let ys: Vec<f64> = (0..len).map(|_| r.random_range(0..n_symbols) as f64).collect();
    ObservationRecord::from_scalars(&ys).unwrap()
}

/// The 3-state, 3-symbol HMM used by several exactness checks.
pub fn three_state_hmm() -> (DiscreteHmmParams, ObservationRecord) {
    let params = DiscreteHmmParams {
        initial: vec![0.5, 0.3, 0.2],
        transition: vec![vec![0.7, 0.2, 0.1], vec![0.15, 0.7, 0.15], vec![0.1, 0.3, 0.6]],
        emission: vec![vec![0.7, 0.2, 0.1], vec![0.2, 0.6, 0.2], vec![0.1, 0.2, 0.7]],
    };
    let obs = ObservationRecord::from_scalars(&[0.0, 1.0, 2.0, 2.0, 1.0, 0.0]).unwrap();
    (params, obs)
}

/// Exact smoothing by summing over every state path.
pub struct Enumerated {
    pub marginals: Vec<Vec<f64>>,
    pub pairwise: Vec<Vec<Vec<f64>>>,
    pub log_likelihood: f64,
}

pub fn enumerate_hmm(params: &DiscreteHmmParams, obs: &ObservationRecord) -> Enumerated {
    let s = params.initial.len();
    let len = obs.len();
    let mut marginals = vec![vec![0.0; s]; len];
    let mut pairwise = vec![vec![vec![0.0; s]; s]; len.saturating_sub(1)];
    let mut total = 0.0;
    let mut path = vec![0usize; len];
    let paths = s.pow(len as u32);
    for code in 0..paths {
        let mut c = code;
        for slot in path.iter_mut() {
            *slot = c % s;
            c /= s;
        }
        let mut p = params.initial[path[0]] * params.emission[path[0]][obs.get(0)[0] as usize];
        for k in 1..len {
            p *= params.transition[path[k - 1]][path[k]] * params.emission[path[k]][obs.get(k)[0] as usize];
        }
        total += p;
        for k in 0..len {
            marginals[k][path[k]] += p;
            if k + 1 < len {
                pairwise[k][path[k]][path[k + 1]] += p;
            }
        }
    }
    marginals.iter_mut().flatten().for_each(|v| *v /= total);
    pairwise.iter_mut().flatten().flatten().for_each(|v| *v /= total);
    Enumerated {
        marginals,
        pairwise,
        log_likelihood: total.ln(),
    }
}

/// Smoothing means, variances and log-likelihood from the dense joint
/// Gaussian of `(X_{0:n}, Y_{0:n})`.
pub struct DenseGaussian {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub log_likelihood: f64,
}

pub fn dense_gaussian(p: &LinearGaussianParams, obs: &ObservationRecord) -> DenseGaussian {
    let len = obs.len();
    let mut mean_x = DVector::zeros(len);
    let mut var_x = vec![0.0; len];
    mean_x[0] = p.init_mean;
    var_x[0] = p.init_var;
    for k in 1..len {
        mean_x[k] = p.phi * mean_x[k - 1];
        var_x[k] = p.phi * p.phi * var_x[k - 1] + p.state_noise_var;
    }
    let cov_xx = DMatrix::from_fn(len, len, |i, j| {
        let (lo, hi) = (i.min(j), i.max(j));
        p.phi.powi((hi - lo) as i32) * var_x[lo]
    });
    let cov_xy = &cov_xx * p.obs_coeff;
    let cov_yy = &cov_xx * (p.obs_coeff * p.obs_coeff) + DMatrix::identity(len, len) * p.obs_noise_var;
    let mean_y = &mean_x * p.obs_coeff;
    let y = DVector::from_iterator(len, obs.iter().map(|v| v[0]));
    let chol = cov_yy.clone().cholesky().expect("positive definite");
    let resid = &y - &mean_y;
    let solved = chol.solve(&resid);
    let post_mean = &mean_x + &cov_xy * &solved;
    let post_cov = &cov_xx - &cov_xy * chol.solve(&cov_xy.transpose());
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let log_likelihood =
        -0.5 * (len as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + resid.dot(&solved));
    DenseGaussian {
        means: post_mean.iter().copied().collect(),
        variances: (0..len).map(|k| post_cov[(k, k)]).collect(),
        log_likelihood,
    }
}

/// Marginal weights of a discrete-state trace collapsed onto state values.
pub fn state_probabilities(
    marginals: &SmoothingMarginals,
    trace: &FilterTrace<usize>,
    n_states: usize,
) -> Vec<Vec<f64>> {
    marginals
        .weights
        .iter()
        .zip(&trace.clouds)
        .map(|(w, cloud)| {
            let mut p = vec![0.0; n_states];
            for (v, &s) in w.iter().zip(&cloud.positions) {
                p[s] += v;
            }
            p
        })
        .collect()
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Pearson statistic of `counts` against `probabilities`.
pub fn chi_square(counts: &[u64], probabilities: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    counts
        .iter()
        .zip(probabilities)
        .filter(|(_, p)| **p > 0.0)
        .map(|(&c, &p)| {
            let e = p * total as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum()
}

/// Upper 0.001 quantile of the chi-square distribution with `dof` degrees
/// of freedom.
pub fn chi_square_critical_001(dof: usize) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    ChiSquared::new(dof as f64).unwrap().inverse_cdf(0.999)
}
