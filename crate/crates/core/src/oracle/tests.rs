use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use super::*;
use crate::envgen::{sample_env_weights, FeatureSpec};
use crate::rng::substream;

fn env(id: &str, w: &[f64]) -> EnvWeights {
    EnvWeights::new(w.to_vec(), EnvId::from(id))
}

/// Homogeneous spec: invariant weight 1.0, the feature of interest at
/// index 1 with `k` values, all remaining sets with `alpha * k` values.
fn homogeneous_spec(c: usize, k: usize, alpha: usize) -> FeatureSpec {
    let mut sizes = vec![k];
    sizes.extend(std::iter::repeat(alpha * k).take(c - 2));
    FeatureSpec::with_set_sizes(1.0, &sizes, 0.0).unwrap()
}

#[test]
fn l0_distance_counts_differing_coordinates() {
    assert_eq!(l0_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0);
    assert_eq!(l0_distance(&[1.0, 2.0, 3.0], &[1.0, 5.0, 6.0]).unwrap(), 2);
    assert_eq!(l0_distance(&[1.0, -1.0], &[1.0, 1.0]).unwrap(), 1);
}

#[test]
fn l0_distance_tolerates_roundtrip_noise() {
    assert_eq!(l0_distance(&[1.0], &[1.0 + 1e-13]).unwrap(), 0);
    assert_eq!(l0_distance(&[1.0], &[1.0 + 1e-9]).unwrap(), 1);
}

#[test]
fn l0_distance_rejects_length_mismatch() {
    assert!(l0_distance(&[1.0], &[1.0, 2.0]).is_err());
}

#[test]
fn indicator_boundary_is_inclusive() {
    let r = env("r", &[1.0, 2.0, 3.0, 4.0]);
    assert!(oracle_indicator(&r, &r, 0).unwrap());
    let far = env("a", &[1.0, 9.0, 9.0, 9.0]); // distance 3
    assert!(!oracle_indicator(&r, &far, 2).unwrap());
    let edge = env("b", &[1.0, 9.0, 9.0, 4.0]); // distance 2
    assert!(oracle_indicator(&r, &edge, 2).unwrap());
}

#[test]
fn partition_admits_everything_under_large_delta() {
    let r = env("r", &[1.0, 0.0]);
    let envs = vec![env("a", &[1.0, 5.0]), env("b", &[2.0, -3.0])];
    let p = build_partition(&envs, &r, 10).unwrap();
    assert_eq!(p.len(), 3);
}

#[test]
fn partition_with_zero_delta_keeps_only_reference() {
    let r = env("r", &[1.0, 0.0]);
    let envs = vec![env("a", &[1.0, 5.0]), env("b", &[2.0, 0.0])];
    let p = build_partition(&envs, &r, 0).unwrap();
    assert_eq!(p.members.len(), 1);
    assert!(p.contains(&EnvId::from("r")));
}

#[test]
fn partition_of_empty_list_contains_reference() {
    let r = env("r", &[1.0, 0.0]);
    let p = build_partition(&[], &r, 1).unwrap();
    assert_eq!(p.len(), 1);
    assert_eq!(p.ref_env, EnvId::from("r"));
}

#[test]
fn partition_is_order_invariant() {
    let r = env("r", &[1.0, 0.0, 0.0]);
    let mut envs = vec![
        env("a", &[1.0, 1.0, 0.0]),
        env("b", &[1.0, 0.0, 2.0]),
        env("c", &[9.0, 9.0, 9.0]),
    ];
    let p1 = build_partition(&envs, &r, 1).unwrap();
    envs.reverse();
    let p2 = build_partition(&envs, &r, 1).unwrap();
    assert_eq!(p1, p2);
}

#[test]
fn avg_distance_full_partition_fails_strict_inequality() {
    let envs = vec![env("r", &[0.0]), env("a", &[1.0]), env("b", &[2.0])];
    let p = build_partition(&envs[1..], &envs[0], 10).unwrap();
    assert!(!avg_distance_criterion(&p, &envs, l0_metric).unwrap());
}

#[test]
fn avg_distance_reference_only_beats_average() {
    let envs = vec![env("r", &[0.0]), env("a", &[1.0])];
    let p = build_partition(&[], &envs[0], 0).unwrap();
    assert!(avg_distance_criterion(&p, &envs, l0_metric).unwrap());
}

#[test]
fn avg_distance_hand_computed_case() {
    // distances to ref: [0, 1, 2, 3, 4]; members {r, a}: 0.5 < 2.0
    let envs = vec![
        env("r", &[0.0]),
        env("a", &[1.0]),
        env("b", &[2.0]),
        env("c", &[3.0]),
        env("d", &[4.0]),
    ];
    let metric = |x: &EnvWeights, y: &EnvWeights| (x.w[0] - y.w[0]).abs();
    let mut members = std::collections::BTreeSet::new();
    members.insert(EnvId::from("r"));
    members.insert(EnvId::from("a"));
    let p = Partition {
        ref_env: EnvId::from("r"),
        delta: 1,
        members,
    };
    assert!(avg_distance_criterion(&p, &envs, metric).unwrap());
}

#[test]
fn ratio_bound_examples() {
    assert_abs_diff_eq!(ratio_bound_p(12, 2, 2.0).unwrap(), 9.0, epsilon = 1e-15);
    assert_abs_diff_eq!(ratio_bound_p(4, 1, 2.0).unwrap(), 4.0, epsilon = 1e-15);
    assert!(ratio_bound_p(12, 0, 2.0).is_err());
    assert!(ratio_bound_p(2, 1, 2.0).is_err());
    assert!(ratio_bound_p(12, 1, 1.0).is_err());
}

#[test]
fn success_bound_example() {
    assert_abs_diff_eq!(success_lower_bound(9.0, 3), 0.729, epsilon = 1e-15);
}

#[test]
fn error_probs_vanish_at_zero_delta() {
    let spec = homogeneous_spec(6, 2, 2);
    let (e1, e2) = exact_error_probs(&spec, 0, 1).unwrap();
    assert_eq!(e1, 0.0);
    assert_eq!(e2, 0.0);
}

fn binom_pmf(n: usize, k: usize, p: f64) -> f64 {
    let mut coef = 1.0;
    for i in 0..k {
        coef *= (n - i) as f64 / (i + 1) as f64;
    }
    coef * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

#[test]
fn homogeneous_case_matches_binomial_closed_form() {
    // all non-reference sets share |A_j| = m, so the change count is
    // Binomial(c-2, 1 - 1/m)
    for (c, m, delta) in [(6, 3, 1), (8, 4, 2), (10, 2, 3)] {
        let mut sizes = vec![m];
        sizes.extend(std::iter::repeat(m).take(c - 2));
        let spec = FeatureSpec::with_set_sizes(1.0, &sizes, 0.0).unwrap();
        let (e1, e2) = exact_error_probs(&spec, delta, 1).unwrap();
        let q = 1.0 - 1.0 / m as f64;
        let n = c - 2;
        let k = m as f64;
        let expect_e1: f64 =
            (1.0 / k) * (1..=delta.min(n)).map(|j| binom_pmf(n, j, q)).sum::<f64>();
        let expect_e2: f64 = (1.0 - 1.0 / k)
            * (0..=(delta - 1).min(n)).map(|j| binom_pmf(n, j, q)).sum::<f64>();
        assert_abs_diff_eq!(e1, expect_e1, epsilon = 1e-12);
        assert_abs_diff_eq!(e2, expect_e2, epsilon = 1e-12);
    }
}

/// Exhaustive enumeration over every weight configuration; the
/// independent oracle for the DP convolution.
fn brute_force_error_probs(spec: &FeatureSpec, delta: usize, idx: usize) -> (f64, f64) {
    let sets: Vec<&Vec<f64>> = spec.sets()[1..].iter().collect();
    let reference: Vec<f64> = sets.iter().map(|s| s[0]).collect();
    let mut counters = vec![0usize; sets.len()];
    let mut e1 = 0.0;
    let mut e2 = 0.0;
    loop {
        let prob: f64 = sets.iter().map(|s| 1.0 / s.len() as f64).product();
        let mut other_diffs = 0usize;
        let mut interest_matches = true;
        for (j, set) in sets.iter().enumerate() {
            let value = set[counters[j]];
            let differs = (value - reference[j]).abs() > WEIGHT_EQ_TOL;
            if j + 1 == idx {
                interest_matches = !differs;
            } else if differs {
                other_diffs += 1;
            }
        }
        if interest_matches && other_diffs >= 1 && other_diffs <= delta {
            e1 += prob;
        }
        if !interest_matches && delta >= 1 && other_diffs <= delta - 1 {
            e2 += prob;
        }
        let mut pos = 0;
        loop {
            if pos == counters.len() {
                return (e1, e2);
            }
            counters[pos] += 1;
            if counters[pos] < sets[pos].len() {
                break;
            }
            counters[pos] = 0;
            pos += 1;
        }
    }
}

#[test]
fn dp_matches_brute_force_enumeration() {
    for (sizes, delta, idx) in [
        (vec![2usize, 3, 3, 2, 3], 2usize, 1usize),
        (vec![3, 2, 2, 3], 1, 2),
        (vec![2, 2, 2, 2, 2, 2, 2], 3, 4),
        (vec![3, 3, 3, 3, 3, 3, 3], 2, 1),
    ] {
        let spec = FeatureSpec::with_set_sizes(1.0, &sizes, 0.0).unwrap();
        for d in 0..=delta {
            let (e1, e2) = exact_error_probs(&spec, d, idx).unwrap();
            let (b1, b2) = brute_force_error_probs(&spec, d, idx);
            assert_abs_diff_eq!(e1, b1, epsilon = 1e-12);
            assert_abs_diff_eq!(e2, b2, epsilon = 1e-12);
        }
    }
}

#[test]
fn exact_ratio_dominates_the_analytic_bound() {
    for c in [6usize, 12] {
        for delta in [1usize, 2] {
            for k in [2usize, 4] {
                let alpha = 2usize;
                let spec = homogeneous_spec(c, k, alpha);
                let (e1, e2) = exact_error_probs(&spec, delta, 1).unwrap();
                let p = ratio_bound_p(c, delta, alpha as f64).unwrap();
                assert!(e2 > 0.0);
                assert!(
                    e1 / e2 >= p,
                    "ratio {} below bound {p} at c={c} delta={delta} k={k}",
                    e1 / e2
                );
                let p_err = e2 / (e1 + e2);
                assert!(p_err <= 1.0 / (p + 1.0));
            }
        }
    }
}

#[test]
fn gamma_closed_form_value() {
    // delta/n = 1/4, change prob 3/4: KL = 0.5 ln 3, n = 8, so
    // exp(-8 KL) = 3^-4 and gamma = 1/(8 * 81) = 1/648
    let g = gamma_lower_bound(2, 2.0, 2, 10).unwrap();
    assert_abs_diff_eq!(g, 1.0 / 648.0, epsilon = 1e-15);
}

#[test]
fn gamma_rejects_kl_boundaries() {
    assert!(gamma_lower_bound(2, 2.0, 0, 10).is_err());
    assert!(gamma_lower_bound(2, 2.0, 8, 10).is_err());
    assert!(gamma_lower_bound(1, 1.0, 2, 10).is_err());
}

#[test]
fn gamma_is_non_increasing_in_alpha_beyond_the_drift_point() {
    // once delta/n is below the change probability, growing alpha only
    // pushes the change probability further away and shrinks gamma
    let mut last = f64::INFINITY;
    for alpha in [1.5, 2.0, 3.0, 4.0, 8.0] {
        let g = gamma_lower_bound(2, alpha, 2, 10).unwrap();
        assert!(g <= last + 1e-15, "gamma increased at alpha = {alpha}");
        last = g;
    }
}

#[test]
fn gamma_lower_bounds_monte_carlo_frequency() {
    // 10 drifting coordinates besides the feature of interest
    let spec = homogeneous_spec(12, 2, 2);
    let reference = sample_env_weights(&spec, EnvId::from("ref"), &mut substream(17, &[0]));
    let draws = 200_000;
    let freq = oracle_frequency_mc(&spec, &reference, 2, draws, 17).unwrap();
    let gamma = gamma_lower_bound(2, 2.0, 2, 12).unwrap();
    let sigma = (freq.max(1e-9) * (1.0 - freq) / draws as f64).sqrt();
    assert!(
        freq >= gamma - 3.0 * sigma,
        "freq {freq} under gamma {gamma} (3 sigma = {})",
        3.0 * sigma
    );
}

#[test]
fn required_environments_examples() {
    assert_eq!(required_environments(10, 5, 0.125, 0.05).unwrap(), 168);
    assert_eq!(required_environments(5, 5, 0.5, 0.05).unwrap(), 6);
    assert!(required_environments(10, 5, 1.0, 0.999_999).unwrap() <= 1);
    assert!(required_environments(10, 0, 0.5, 0.05).is_err());
    assert!(required_environments(10, 5, 0.0, 0.05).is_err());
    assert!(required_environments(10, 5, 0.5, 1.0).is_err());
}

#[test]
fn cardinality_estimate_is_one_when_oracle_always_fires() {
    let spec = homogeneous_spec(6, 2, 2);
    let reference = sample_env_weights(&spec, EnvId::from("ref"), &mut substream(3, &[0]));
    let est = partition_cardinality_mc(&spec, &reference, 6, 5, 5, 200, 3).unwrap();
    assert_eq!(est, 1.0);
}

#[test]
fn cardinality_estimate_is_tiny_at_zero_delta() {
    let spec = homogeneous_spec(6, 2, 2);
    let reference = sample_env_weights(&spec, EnvId::from("ref"), &mut substream(4, &[0]));
    let est = partition_cardinality_mc(&spec, &reference, 0, 3, 1, 2000, 4).unwrap();
    assert!(est < 0.01, "estimate {est}");
}

#[test]
fn cardinality_estimate_meets_lemma_guarantee() {
    // gamma = 1/9 / (2 sqrt 8); with t = required envs at eps = 0.1 the
    // partition reaches m = 4 essentially always
    let spec = homogeneous_spec(6, 2, 2);
    let reference = sample_env_weights(&spec, EnvId::from("ref"), &mut substream(5, &[0]));
    let gamma = gamma_lower_bound(2, 2.0, 1, 6).unwrap();
    let t = required_environments(4, 2, gamma, 0.1).unwrap() as usize;
    let trials = 500;
    let est = partition_cardinality_mc(&spec, &reference, 1, t, 4, trials, 5).unwrap();
    let sigma = (est.max(1e-9) * (1.0 - est) / trials as f64).sqrt();
    assert!(est >= 0.9 - 3.0 * sigma, "estimate {est}");
}

#[test]
fn cardinality_estimate_is_deterministic() {
    let spec = homogeneous_spec(6, 2, 2);
    let reference = sample_env_weights(&spec, EnvId::from("ref"), &mut substream(6, &[0]));
    let a = partition_cardinality_mc(&spec, &reference, 1, 50, 2, 300, 6).unwrap();
    let b = partition_cardinality_mc(&spec, &reference, 1, 50, 2, 300, 6).unwrap();
    assert_eq!(a, b);
}

#[test]
fn recovery_rate_meets_theorem_bound() {
    let spec = homogeneous_spec(6, 2, 2);
    let reference = sample_env_weights(&spec, EnvId::from("ref"), &mut substream(7, &[0]));
    let out = partition_recovery_mc(&spec, &reference, 1, 1, 3, 400, 100_000, 7).unwrap();
    let p = ratio_bound_p(6, 1, 2.0).unwrap();
    let bound = success_lower_bound(p, 3);
    let sigma = (out.success_rate * (1.0 - out.success_rate) / out.trials as f64).sqrt();
    assert!(
        out.success_rate >= bound - 3.0 * sigma,
        "success {} under bound {bound}",
        out.success_rate
    );
}

#[test]
fn bound_report_is_serializable_and_consistent() {
    let spec = homogeneous_spec(12, 2, 2);
    let report = bound_report(&spec, 2, 1, 10, 5, 0.05, None).unwrap();
    assert_abs_diff_eq!(report.p, 9.0, epsilon = 1e-12);
    assert_eq!(report.members, 7);
    assert!(report.success_lb > 0.0 && report.success_lb <= 1.0);
    assert!(report.p_error_exact <= 1.0 / (report.p + 1.0));
    assert!(report.gamma > 0.0 && report.gamma <= 1.0);
    let text = serde_json::to_string(&report).unwrap();
    let back: BoundReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back.required_envs, report.required_envs);
}

proptest! {
    #[test]
    fn reference_is_always_a_member(delta in 0usize..5, w in proptest::collection::vec(-3.0f64..3.0, 1..6)) {
        let r = EnvWeights::new(w, EnvId::from("r"));
        let p = build_partition(&[], &r, delta).unwrap();
        prop_assert!(p.contains(&EnvId::from("r")));
        prop_assert!(oracle_indicator(&r, &r, delta).unwrap());
    }

    #[test]
    fn error_prob_masses_are_a_sub_distribution(
        sizes in proptest::collection::vec(2usize..4, 2..6),
        delta in 0usize..5,
    ) {
        let spec = FeatureSpec::with_set_sizes(1.0, &sizes, 0.0).unwrap();
        for idx in 1..spec.num_features() {
            let (e1, e2) = exact_error_probs(&spec, delta, idx).unwrap();
            prop_assert!(e1 >= 0.0 && e2 >= 0.0);
            prop_assert!(e1 + e2 <= 1.0 + 1e-12);
            let (b1, b2) = brute_force_error_probs(&spec, delta, idx);
            prop_assert!((e1 - b1).abs() < 1e-12);
            prop_assert!((e2 - b2).abs() < 1e-12);
        }
    }
}
