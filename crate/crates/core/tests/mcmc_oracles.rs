mod common;

use common::*;
use pfsmooth_core::analysis::{mean, tavc};
use pfsmooth_core::mcmc::{
    inverse_gamma_logpdf, mh_accept, run_imh, run_pmmh, ChainConfig, ExtractionMode, LogRandomWalk,
};
use pfsmooth_core::model::{
    hmm_forward_backward, kalman_smoother, simulate_data, DiscreteHmm, GrowthModel, GrowthParams, LinearGaussianModel,
    LinearGaussianParams, ObservationRecord,
};
use pfsmooth_core::rng::{stream_rng, ACCEPT_STREAM};
use rand::Rng;

const ALL_MODES: [ExtractionMode; 4] = [
    ExtractionMode::Genealogy,
    ExtractionMode::GenealogyRb,
    ExtractionMode::Backward { trajectories: 5 },
    ExtractionMode::BackwardSmoothing,
];

#[test]
fn bsm_chain_marginals_match_forward_backward() {
    let (params, _) = three_state_hmm();
    let obs = ObservationRecord::from_scalars(&[2.0, 0.0, 1.0, 2.0]).unwrap();
    let exact = hmm_forward_backward(&params, &obs).unwrap();
    let model = DiscreteHmm::new(params).unwrap();
    let mut config = ChainConfig::new(10, 50_000, 21, vec![ExtractionMode::BackwardSmoothing]);
    config.extraction.keep_marginals = true;
    config.record_timing = false;
    let mut sums = vec![vec![0.0; 3]; 4];
    run_imh(&model, &obs, &config, |state, record| {
        let m = record.outputs[0].marginals.as_ref().unwrap();
        for (k, p) in state_probabilities(m, &state.trace, 3).iter().enumerate() {
            for s in 0..3 {
                sums[k][s] += p[s];
            }
        }
    })
    .unwrap();
    for k in 0..4 {
        let avg: Vec<f64> = sums[k].iter().map(|s| s / 50_000.0).collect();
        let tv = total_variation(&avg, &exact.marginals[k]);
        assert!(tv < 0.02, "k={k}: tv {tv}");
    }
}

#[test]
fn every_mode_is_exact_at_five_particles() {
    let p = LinearGaussianParams::default();
    let model = LinearGaussianModel::new(p.clone()).unwrap();
    let (_, obs) = simulate_data(&model, 6, 31).unwrap();
    let exact = kalman_smoother(&p, &obs).unwrap();
    let mut config = ChainConfig::new(5, 40_000, 32, ALL_MODES.to_vec());
    config.record_timing = false;
    let out = run_imh(&model, &obs, &config, |_, _| {}).unwrap();
    for mode in ALL_MODES {
        for k in 0..6 {
            let series = out.series(mode, k);
            let se = (tavc(&series).unwrap() / series.len() as f64).sqrt();
            let m = mean(&series);
            assert!((m - exact.means[k]).abs() < 3.0 * se, "{mode} k={k}: {m} vs {} (se {se})", exact.means[k]);
        }
    }
}

#[test]
fn decisions_depend_only_on_likelihood_estimates() {
    let model = GrowthModel::new(GrowthParams::default()).unwrap();
    let (_, obs) = simulate_data(&model, 15, 3).unwrap();
    let mut config = ChainConfig::new(30, 300, 44, vec![ExtractionMode::Genealogy]);
    config.record_timing = false;
    let out = run_imh(&model, &obs, &config, |_, _| {}).unwrap();
    assert!(out.summary.accepted > 0 && out.summary.accepted < 300);
    // replay from the first rejected sweep onwards using only log_z values and uniforms
    let mut u_rng = stream_rng(44, ACCEPT_STREAM);
    let uniforms: Vec<f64> = (0..300).map(|_| u_rng.random()).collect();
    let first_rejection = out.records.iter().position(|r| !r.accepted).unwrap();
    let mut current = out.records[first_rejection].log_z;
    for (r, u) in out.records.iter().zip(&uniforms).skip(first_rejection + 1) {
        let decision = mh_accept(r.log_z_proposed - current, *u);
        assert_eq!(decision, r.accepted);
        if decision {
            current = r.log_z_proposed;
        }
        assert_eq!(current, r.log_z);
    }
}

#[test]
fn rejected_sweeps_extract_from_the_retained_trace() {
    let model = GrowthModel::new(GrowthParams::default()).unwrap();
    let (_, obs) = simulate_data(&model, 10, 6).unwrap();
    let mut config = ChainConfig::new(20, 100, 7, vec![ExtractionMode::Genealogy, ExtractionMode::Backward { trajectories: 2 }]);
    config.extraction.keep_trajectories = true;
    let mut previous = None;
    let mut fresh_draws = 0;
    let mut rejections = 0;
    run_imh(&model, &obs, &config, |state, record| {
        if let Some((trace, paths)) = &previous {
            if !record.accepted {
                rejections += 1;
                assert_eq!(trace, &state.trace);
                if paths != record.outputs[1].trajectories.as_ref().unwrap() {
                    fresh_draws += 1;
                }
            }
        }
        previous = Some((state.trace.clone(), record.outputs[1].trajectories.clone().unwrap()));
    })
    .unwrap();
    assert!(rejections > 10);
    assert!(fresh_draws > rejections / 2);
}

#[test]
fn pmmh_matches_quadrature_posterior_mean() {
    let truth = LinearGaussianParams {
        phi: 0.8,
        obs_noise_var: 1.5,
        ..LinearGaussianParams::default()
    };
    let (_, obs) = simulate_data(&LinearGaussianModel::new(truth.clone()).unwrap(), 15, 50).unwrap();
    let (shape, scale) = (3.0, 2.0);
    let log_post = |theta: f64| {
        let p = LinearGaussianParams { obs_noise_var: theta, ..truth.clone() };
        inverse_gamma_logpdf(theta, shape, scale) + kalman_smoother(&p, &obs).unwrap().log_likelihood
    };
    let grid: Vec<f64> = (1..=30_000).map(|i| i as f64 * 1e-3).collect();
    let logs: Vec<f64> = grid.iter().map(|&t| log_post(t)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let posterior_mean = grid.iter().zip(&weights).map(|(t, w)| t * w).sum::<f64>() / weights.iter().sum::<f64>();

    let factory = |theta: &[f64]| {
        LinearGaussianModel::new(LinearGaussianParams { obs_noise_var: theta[0], ..truth.clone() })
    };
    let params = LogRandomWalk::new(vec![0.5], |t: &[f64]| inverse_gamma_logpdf(t[0], shape, scale));
    let mut config = ChainConfig::new(100, 50_000, 51, vec![ExtractionMode::Genealogy]);
    config.record_timing = false;
    let out = run_pmmh(&factory, &params, vec![1.0], &obs, &config, |_, _| {}).unwrap();
    let thetas: Vec<f64> = out.records.iter().map(|r| r.theta.as_ref().unwrap()[0]).collect();
    let m = mean(&thetas);
    let se = (tavc(&thetas).unwrap() / thetas.len() as f64).sqrt();
    assert!((m - posterior_mean).abs() < 3.0 * se, "{m} vs {posterior_mean} (se {se})");
    assert!(out.summary.acceptance_rate > 0.1);
}

#[test]
fn bounded_weights_raise_no_warning() {
    let model = GrowthModel::new(GrowthParams::default()).unwrap();
    let (_, obs) = simulate_data(&model, 20, 60).unwrap();
    let config = ChainConfig::new(50, 400, 61, vec![ExtractionMode::Genealogy]);
    let out = run_imh(&model, &obs, &config, |_, _| {}).unwrap();
    assert!(!out.summary.unbounded_weights_suspected);
    assert!(out.records.iter().all(|r| r.tau_pf >= 0.0 && r.tau_bs >= 0.0));
}
