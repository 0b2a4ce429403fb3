mod common;

use common::*;
use pfsmooth_core::filter::{init_particles, run_filter, FilterTrace, ParticleCloud};
use pfsmooth_core::model::{
    hmm_forward_backward, simulate_data, DiscreteHmm, GrowthModel, GrowthParams, ObservationRecord,
};
use pfsmooth_core::rng::stream_rng;
use pfsmooth_core::smoother::{
    backward_smoothing_marginals, backward_weights, extract_genealogy, genealogy_marginals, genealogy_path,
    sample_backward_ar, sample_backward_exact, smoothed_expectation, BackwardSampler, BackwardSamplerStats,
};
use proptest::prelude::*;

/// Two-particle, two-step trace on a 2-state HMM whose transition
/// probabilities differ enough that every path has distinct mass.
fn enumerable_trace() -> (DiscreteHmm, FilterTrace<usize>) {
    let params = pfsmooth_core::model::DiscreteHmmParams {
        initial: vec![0.5, 0.5],
        transition: vec![vec![0.8, 0.2], vec![0.35, 0.65]],
        emission: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
    };
    let trace = FilterTrace::from_clouds(vec![
        ParticleCloud {
            time: 0,
            positions: vec![0, 1],
            log_weights: vec![0.3f64.ln(), 0.9f64.ln()],
            log_adjustments: vec![0.0, 0.0],
            ancestors: None,
        },
        ParticleCloud {
            time: 1,
            positions: vec![0, 1],
            log_weights: vec![0.6f64.ln(), 0.25f64.ln()],
            log_adjustments: vec![0.0, 0.0],
            ancestors: Some(vec![1, 1]),
        },
    ])
    .unwrap();
    (DiscreteHmm::new(params).unwrap(), trace)
}

/// Path probabilities `P(J_0 = i, J_1 = j)` indexed `2 * i + j`.
fn enumerated_paths(model: &DiscreteHmm, trace: &FilterTrace<usize>) -> Vec<f64> {
    let w1 = trace.clouds[1].normalized_weights();
    let mut probs = vec![0.0; 4];
    for j in 0..2 {
        let back = backward_weights(trace, model, 0, &trace.clouds[1].positions[j]).unwrap();
        for i in 0..2 {
            probs[2 * i + j] = w1[j] * back[i];
        }
    }
    probs
}

#[test]
fn exact_backward_sampling_matches_enumeration() {
    let (model, trace) = enumerable_trace();
    let probs = enumerated_paths(&model, &trace);
    // hand check of one cell: w1 = (0.6, 0.25)/0.85, back(0 | x1 = 0) = 0.3*0.8 / (0.3*0.8 + 0.9*0.35)
    let hand = 0.6 / 0.85 * (0.24 / (0.24 + 0.315));
    assert!((probs[0] - hand).abs() < 1e-15);
    let mut counts = [0u64; 4];
    let mut rng = stream_rng(1, 0);
    for _ in 0..100_000 {
        let t = sample_backward_exact(&trace, &model, &mut rng).unwrap();
        counts[2 * t.backward_indices[0] + t.backward_indices[1]] += 1;
        assert_eq!(t.states[0], trace.clouds[0].positions[t.backward_indices[0]]);
    }
    assert!(chi_square(&counts, &probs) < chi_square_critical_001(3));
}

#[test]
fn accept_reject_matches_enumeration_and_exact_sampler() {
    let (model, trace) = enumerable_trace();
    let probs = enumerated_paths(&model, &trace);
    let mut ar_counts = [0u64; 4];
    let mut exact_counts = [0u64; 4];
    let mut rng = stream_rng(2, 0);
    let mut stats = BackwardSamplerStats::default();
    let mut sampler = BackwardSampler::new(&trace, &model).unwrap();
    for _ in 0..100_000 {
        let t = sampler.sample_accept_reject(&mut rng, 15, &mut stats).unwrap();
        ar_counts[2 * t.backward_indices[0] + t.backward_indices[1]] += 1;
        let t = sampler.sample_exact(&mut rng).unwrap();
        exact_counts[2 * t.backward_indices[0] + t.backward_indices[1]] += 1;
    }
    assert!(chi_square(&ar_counts, &probs) < chi_square_critical_001(3));
    // two-sample statistic on the 2 x 4 table
    let mut stat = 0.0;
    for c in 0..4 {
        let total = (ar_counts[c] + exact_counts[c]) as f64;
        for observed in [ar_counts[c], exact_counts[c]] {
            let e = total / 2.0;
            stat += (observed as f64 - e).powi(2) / e;
        }
    }
    assert!(stat < chi_square_critical_001(3), "{stat}");
    assert!(stats.is_accepts <= stats.is_proposals);
    assert_eq!(stats.is_accepts + stats.fallbacks, 100_000);
}

#[test]
fn accept_reject_step_matches_backward_weights_on_growth() {
    let model = GrowthModel::new(GrowthParams::default()).unwrap();
    let (_, obs) = simulate_data(&model, 2, 3).unwrap();
    let first = init_particles(&model, &obs, 500, &mut stream_rng(4, 0)).unwrap();
    let x_next = first.positions[7] + 0.5;
    // a second cloud concentrated on one point fixes X_1
    let trace = FilterTrace::from_clouds(vec![
        first,
        ParticleCloud {
            time: 1,
            positions: vec![x_next; 500],
            log_weights: vec![0.0; 500],
            log_adjustments: vec![0.0; 500],
            ancestors: Some(vec![0; 500]),
        },
    ])
    .unwrap();
    let exact = backward_weights(&trace, &model, 0, &x_next).unwrap();
    let mut counts = vec![0usize; 500];
    let mut rng = stream_rng(5, 0);
    let mut stats = BackwardSamplerStats::default();
    let mut sampler = BackwardSampler::new(&trace, &model).unwrap();
    for _ in 0..100_000 {
        counts[sampler.sample_accept_reject(&mut rng, 15, &mut stats).unwrap().backward_indices[0]] += 1;
    }
    let max_diff = counts
        .iter()
        .zip(&exact)
        .map(|(c, p)| (*c as f64 / 1e5 - p).abs())
        .fold(0.0, f64::max);
    assert!(max_diff < 0.01, "{max_diff}");
    assert!(stats.fallbacks > 0 || stats.is_accepts == 100_000);
}

#[test]
fn genealogy_terminal_draws_follow_final_weights() {
    let model = GrowthModel::new(GrowthParams::default()).unwrap();
    let (_, obs) = simulate_data(&model, 6, 8).unwrap();
    let trace = run_filter(&model, &obs, 30, &mut stream_rng(9, 0)).unwrap();
    let w = trace.clouds[5].normalized_weights();
    let mut counts = vec![0usize; 30];
    let mut rng = stream_rng(10, 0);
    for _ in 0..100_000 {
        let path = extract_genealogy(&trace, &mut rng);
        counts[path.backward_indices[5]] += 1;
        assert_eq!(path, genealogy_path(&trace, path.backward_indices[5]));
    }
    for (c, p) in counts.iter().zip(&w) {
        assert!((*c as f64 / 1e5 - p).abs() < 0.01);
    }
}

#[test]
fn genealogy_marginals_enumerate_terminal_paths() {
    let cloud = |time: usize, log_weights: Vec<f64>, ancestors: Option<Vec<usize>>| ParticleCloud {
        time,
        positions: vec![10.0 * time as f64, 10.0 * time as f64 + 1.0, 10.0 * time as f64 + 2.0],
        log_weights,
        log_adjustments: vec![0.0; 3],
        ancestors,
    };
    let trace = FilterTrace::from_clouds(vec![
        cloud(0, vec![0.0; 3], None),
        cloud(1, vec![0.0; 3], Some(vec![2, 0, 2])),
        cloud(2, vec![1f64.ln(), 2f64.ln(), 5f64.ln()], Some(vec![1, 1, 2])),
    ])
    .unwrap();
    // enumerate the three terminal paths with weights (1, 2, 5) / 8
    let mut expected = vec![vec![0.0; 3]; 3];
    for (terminal, w) in [(0, 0.125), (1, 0.25), (2, 0.625)] {
        let path = genealogy_path(&trace, terminal);
        for (k, &i) in path.backward_indices.iter().enumerate() {
            expected[k][i] += w;
        }
    }
    assert_eq!(expected[0], vec![0.375, 0.0, 0.625]);
    let gm = genealogy_marginals(&trace);
    for k in 0..3 {
        for i in 0..3 {
            assert!((gm.weights[k][i] - expected[k][i]).abs() < 1e-15);
        }
    }
}

#[test]
fn backward_smoothing_matches_forward_backward_on_hmm() {
    let (params, obs) = three_state_hmm();
    let exact = hmm_forward_backward(&params, &obs).unwrap();
    let model = DiscreteHmm::new(params).unwrap();
    let trace = run_filter(&model, &obs, 2000, &mut stream_rng(11, 0)).unwrap();
    let bsm = backward_smoothing_marginals(&trace, &model, false).unwrap();
    let probs = state_probabilities(&bsm, &trace, 3);
    for k in 0..obs.len() {
        assert!(total_variation(&probs[k], &exact.marginals[k]) < 0.03);
        let mean = smoothed_expectation(&bsm, &trace, k, |s| *s as f64);
        let exact_mean: f64 = exact.marginals[k].iter().enumerate().map(|(s, p)| s as f64 * p).sum();
        assert!((mean - exact_mean).abs() < 0.05);
    }
}

#[test]
fn backward_draws_reproduce_backward_smoothing_marginals() {
    let model = GrowthModel::new(GrowthParams::default()).unwrap();
    let (_, obs) = simulate_data(&model, 6, 12).unwrap();
    let trace = run_filter(&model, &obs, 20, &mut stream_rng(13, 0)).unwrap();
    let bsm = backward_smoothing_marginals(&trace, &model, false).unwrap();
    let mut counts = vec![vec![0usize; 20]; 6];
    let mut rng = stream_rng(14, 0);
    let mut sampler = BackwardSampler::new(&trace, &model).unwrap();
    for _ in 0..100_000 {
        let t = sampler.sample_exact(&mut rng).unwrap();
        for (k, &i) in t.backward_indices.iter().enumerate() {
            counts[k][i] += 1;
        }
    }
    for k in 0..6 {
        for i in 0..20 {
            assert!((counts[k][i] as f64 / 1e5 - bsm.weights[k][i]).abs() < 0.02);
        }
    }
}

#[test]
fn genealogy_degenerates_while_backward_smoothing_does_not() {
    let model = GrowthModel::new(GrowthParams::default()).unwrap();
    let (_, obs) = simulate_data(&model, 50, 15).unwrap();
    let runs = 20;
    let mut collapsed = 0;
    for s in 0..runs {
        let trace = run_filter(&model, &obs, 500, &mut stream_rng(s, 3)).unwrap();
        if genealogy_marginals(&trace).support_size(0) <= 5 {
            collapsed += 1;
        }
        if s < 2 {
            let bsm = backward_smoothing_marginals(&trace, &model, false).unwrap();
            assert_eq!(bsm.support_size(0), 500);
        }
    }
    assert!(collapsed as f64 >= 0.9 * runs as f64, "{collapsed}/{runs}");
}

#[test]
fn accept_reject_requires_a_bound_and_positive_limit() {
    let (model, trace) = enumerable_trace();
    assert!(sample_backward_ar(&trace, &model, &mut stream_rng(0, 0), 0).is_err());
    let (_, stats) = sample_backward_ar(&trace, &model, &mut stream_rng(0, 0), 1).unwrap();
    assert_eq!(stats.is_proposals, 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn marginals_are_normalised_and_pairwise_consistent(seed in any::<u64>(), n in 1usize..25, len in 1usize..7) {
        let model = GrowthModel::new(GrowthParams::default()).unwrap();
        let (_, obs) = simulate_data(&model, len, seed).unwrap();
        let trace = run_filter(&model, &obs, n, &mut stream_rng(seed, 9)).unwrap();
        let bsm = backward_smoothing_marginals(&trace, &model, true).unwrap();
        let gm = genealogy_marginals(&trace);
        for k in 0..len {
            prop_assert!((bsm.weights[k].iter().sum::<f64>() - 1.0).abs() < 1e-10);
            prop_assert!((gm.weights[k].iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        let pairwise = bsm.pairwise.as_ref().unwrap();
        for k in 0..len - 1 {
            for i in 0..n {
                let row: f64 = (0..n).map(|j| pairwise[k][i * n + j]).sum();
                let col: f64 = (0..n).map(|j| pairwise[k][j * n + i]).sum();
                prop_assert!((row - bsm.weights[k][i]).abs() < 1e-10);
                prop_assert!((col - bsm.weights[k + 1][i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn trajectories_pass_through_recorded_particles(seed in any::<u64>(), n in 1usize..15) {
        let model = GrowthModel::new(GrowthParams::default()).unwrap();
        let (_, obs) = simulate_data(&model, 5, seed).unwrap();
        let trace = run_filter(&model, &obs, n, &mut stream_rng(seed, 1)).unwrap();
        let mut rng = stream_rng(seed, 2);
        let (ar, stats) = sample_backward_ar(&trace, &model, &mut rng, 15).unwrap();
        let exact = sample_backward_exact(&trace, &model, &mut rng).unwrap();
        prop_assert!(stats.is_accepts <= stats.is_proposals);
        for t in [ar, exact] {
            for (k, (&i, x)) in t.backward_indices.iter().zip(&t.states).enumerate() {
                prop_assert_eq!(trace.clouds[k].positions[i], *x);
            }
        }
    }
}

#[test]
fn single_observation_smoothing_is_filtering() {
    let model = GrowthModel::new(GrowthParams::default()).unwrap();
    let obs = ObservationRecord::from_scalars(&[2.0]).unwrap();
    let trace = run_filter(&model, &obs, 40, &mut stream_rng(0, 0)).unwrap();
    let bsm = backward_smoothing_marginals(&trace, &model, true).unwrap();
    assert_eq!(bsm.weights[0], trace.clouds[0].normalized_weights());
    assert_eq!(bsm.pairwise.unwrap().len(), 0);
}
