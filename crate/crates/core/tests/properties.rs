use cloudcluster::concentration::{cluster_error_bounds, lambert_w0};
use cloudcluster::detection::{
    cluster_com_prob, cluster_error_probs_binomial, cluster_error_probs_enumerated,
    cluster_error_probs_exact, fc_decide, fc_weights, realization_probability, ClusterSpec, ErrorPair,
    SensorSpec, SystemSpec,
};
use cloudcluster::experiment::{run_experiment, Curve, ExperimentConfig, OneOrMany};
use cloudcluster::optimizer::{
    build_grid, build_grids, gauss_seidel, homogeneous_equal_threshold_search, majority_threshold, Evaluator,
};
use cloudcluster::simulator::Simulator;
use proptest::prelude::*;

fn sensor_strategy() -> impl Strategy<Value = SensorSpec> {
    (0.01f64..0.49, 0.01f64..0.49, 0.0f64..=1.0).prop_map(|(a, b, c)| SensorSpec::new(a, b, c).unwrap())
}

/// Cluster with its threshold placed at fraction `t` of the statistic range.
fn cluster_at(sensors: Vec<SensorSpec>, t: f64) -> ClusterSpec {
    let c = ClusterSpec::new(sensors, 0.0).unwrap();
    let g = c.l_min() + t * (c.l_max() - c.l_min());
    c.with_gamma(c.clamp_gamma(g)).unwrap()
}

fn cluster_strategy(max_n: usize) -> impl Strategy<Value = ClusterSpec> {
    (prop::collection::vec(sensor_strategy(), 1..=max_n), 0.0f64..=1.0).prop_map(|(s, t)| cluster_at(s, t))
}

fn system_strategy(max_clusters: usize, max_n: usize) -> impl Strategy<Value = SystemSpec> {
    (prop::collection::vec(cluster_strategy(max_n), 1..=max_clusters), 0.1f64..0.9)
        .prop_map(|(c, p1)| SystemSpec::new(c, p1, 150.0, 100.0).unwrap())
}

fn homogeneous_strategy(max_clusters: usize, max_n: usize) -> impl Strategy<Value = SystemSpec> {
    (sensor_strategy(), 1..=max_n, 1..=max_clusters, 0.1f64..0.9).prop_map(|(s, n, k, p1)| {
        SystemSpec::homogeneous(s, n, k, 0.0, p1, 150.0, 100.0).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn binomial_matches_enumeration(s in sensor_strategy(), n in 1usize..=12, t in 0.0f64..=1.0) {
        let c = cluster_at(vec![s; n], t);
        let a = cluster_error_probs_binomial(&c).unwrap();
        let b = cluster_error_probs_enumerated(&c).unwrap();
        prop_assert!((a.p_fa - b.p_fa).abs() <= 1e-12);
        prop_assert!((a.p_md - b.p_md).abs() <= 1e-12);
    }

    #[test]
    fn single_sensor_at_zero_threshold_passes_through(s in sensor_strategy()) {
        let c = ClusterSpec::new(vec![s], 0.0).unwrap();
        let e = cluster_error_probs_exact(&c, 20).unwrap();
        prop_assert!((e.p_fa - s.p_fa()).abs() < 1e-15);
        prop_assert!((e.p_md - s.p_md()).abs() < 1e-15);
    }

    #[test]
    fn error_probabilities_are_monotone_in_threshold(c in cluster_strategy(8)) {
        let grid = build_grid(&c, 0, 75).unwrap();
        let mut prev: Option<ErrorPair> = None;
        for g in grid.points {
            let e = cluster_error_probs_exact(&c.with_gamma(g).unwrap(), 20).unwrap();
            if let Some(p) = prev {
                prop_assert!(e.p_fa <= p.p_fa);
                prop_assert!(e.p_md >= p.p_md);
            }
            prev = Some(e);
        }
    }

    #[test]
    fn link_probability_grows_with_members(c in cluster_strategy(6), extra in sensor_strategy(), bump in 0.0f64..=1.0) {
        let base = cluster_com_prob(&c);
        let mut sensors = c.sensors().to_vec();
        sensors.push(extra);
        let grown = cluster_com_prob(&ClusterSpec::new(sensors.clone(), 0.0).unwrap());
        if extra.p_com() > 0.0 && base < 1.0 {
            prop_assert!(grown > base);
        } else {
            prop_assert!(grown >= base);
        }
        let raised = sensors[0].p_com() + bump * (1.0 - sensors[0].p_com());
        sensors[0] = sensors[0].with_p_com(raised).unwrap();
        prop_assert!(cluster_com_prob(&ClusterSpec::new(sensors, 0.0).unwrap()) >= grown);
    }

    #[test]
    fn realization_probabilities_sum_to_one(pcs in prop::collection::vec(0.0f64..=1.0, 1..=10)) {
        let k = pcs.len();
        let total: f64 = (0..1u32 << k)
            .map(|m| {
                let tau: Vec<bool> = (0..k).map(|j| m >> j & 1 == 1).collect();
                realization_probability(&pcs, &tau)
            })
            .sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    // The weighted sum at the fusion center decides H1 exactly when the
    // likelihood ratio of the received verdicts reaches its threshold.
    #[test]
    fn fusion_rule_is_likelihood_ratio_test(s in system_strategy(4, 4)) {
        let errors: Vec<ErrorPair> = s.clusters().iter().map(|c| cluster_error_probs_exact(c, 20).unwrap()).collect();
        prop_assume!(errors.iter().all(|e| e.p_fa > 0.0 && e.p_md > 0.0 && e.p_fa + e.p_md < 1.0));
        let w = fc_weights(&errors);
        let k = s.cluster_count();
        let gamma = s.fc_threshold();
        for tm in 0..1u32 << k {
            for zm in 0..1u32 << k {
                let tau: Vec<bool> = (0..k).map(|j| tm >> j & 1 == 1).collect();
                let z: Vec<bool> = (0..k).map(|j| zm >> j & 1 == 1).collect();
                let (mut num, mut den) = (1.0, 1.0);
                for j in (0..k).filter(|&j| tau[j]) {
                    let e = &errors[j];
                    if z[j] {
                        num *= 1.0 - e.p_md;
                        den *= e.p_fa;
                    } else {
                        num *= e.p_md;
                        den *= 1.0 - e.p_fa;
                    }
                }
                let log_ratio = (num / den).ln();
                if (log_ratio - gamma).abs() < 1e-9 {
                    continue;
                }
                prop_assert_eq!(fc_decide(&tau, &z, &w, gamma).unwrap(), log_ratio >= gamma);
            }
        }
    }

    #[test]
    fn lambert_residual(e in -6.0f64..12.0) {
        let x = 10f64.powf(e);
        let w = lambert_w0(x).unwrap();
        prop_assert!((w * w.exp() - x).abs() <= 1e-12 * x.max(1.0));
    }

    #[test]
    fn valid_cluster_bounds_dominate(c in cluster_strategy(10)) {
        let exact = cluster_error_probs_enumerated(&c).unwrap();
        let b = cluster_error_bounds(&c);
        if b.fa.valid {
            prop_assert!(b.fa.value >= exact.p_fa);
        }
        if b.md.valid {
            prop_assert!(b.md.value >= exact.p_md);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn coordinate_descent_never_raises_loss(s in system_strategy(3, 4)) {
        let grids = build_grids(&s, 20).unwrap();
        let ev = Evaluator::exact();
        let r = gauss_seidel(&s, &grids, 1e-9, 50, &ev).unwrap();
        for u in &r.updates {
            prop_assert!(u.loss_after < u.loss_before);
        }
        prop_assert!(r.loss <= r.initial_loss * (1.0 + 1e-12));
        prop_assert!(r.sweeps <= 50);
    }

    #[test]
    fn finer_grid_never_hurts(s in homogeneous_strategy(4, 6), pps in 2usize..40) {
        let ev = Evaluator::exact();
        let coarse = homogeneous_equal_threshold_search(&s, &build_grid(&s.clusters()[0], 0, pps).unwrap(), &ev).unwrap();
        let fine = homogeneous_equal_threshold_search(&s, &build_grid(&s.clusters()[0], 0, 2 * pps).unwrap(), &ev).unwrap();
        prop_assert!(fine.loss <= coarse.loss + 1e-12);
    }

    #[test]
    fn optimized_never_worse_than_majority(s in homogeneous_strategy(6, 10)) {
        let ev = Evaluator::exact();
        let best = homogeneous_equal_threshold_search(&s, &build_grid(&s.clusters()[0], 0, 75).unwrap(), &ev).unwrap();
        let rule = majority_threshold(&s.clusters()[0]);
        let majority = ev.evaluate(&s.with_shared_gamma(rule.gamma.unwrap()).unwrap()).unwrap();
        prop_assert!(best.loss <= majority.loss);
    }

    #[test]
    fn same_seed_same_records(s in system_strategy(3, 4), seed in any::<u64>(), idx in 0u64..1_000_000) {
        let a = Simulator::new(&s).unwrap();
        let b = Simulator::new(&s).unwrap();
        prop_assert_eq!(a.trial(seed, idx), b.trial(seed, idx));
        prop_assert_eq!(a.replay(&a.trial(seed, idx)).unwrap(), cloudcluster::simulator::Replay::Consistent);
    }
}

#[test]
fn link_frequencies_match_cluster_probability() {
    let clusters = vec![
        ClusterSpec::new(vec![SensorSpec::new(0.2, 0.3, 0.1).unwrap(); 3], 0.0).unwrap(),
        ClusterSpec::new(
            vec![SensorSpec::new(0.1, 0.2, 0.05).unwrap(), SensorSpec::new(0.3, 0.25, 0.4).unwrap()],
            0.0,
        )
        .unwrap(),
        ClusterSpec::new(vec![SensorSpec::new(0.2, 0.3, 0.7).unwrap()], 0.0).unwrap(),
    ];
    let s = SystemSpec::new(clusters, 0.4, 150.0, 100.0).unwrap();
    let trials = 400_000u64;
    let r = Simulator::new(&s).unwrap().run(trials, 31).unwrap();
    for (c, &count) in s.clusters().iter().zip(&r.tau_counts) {
        let p = cluster_com_prob(c);
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((count as f64 / trials as f64 - p).abs() < 4.0 * se);
    }
}

#[test]
fn experiment_rows_respect_baselines() {
    for p in [0.05, 0.1, 0.3, 0.5, 0.9] {
        let mut cfg = ExperimentConfig::desk_default();
        cfg.p_com = OneOrMany::One(p);
        cfg.curves = vec![Curve::Exact, Curve::Majority, Curve::BennettOptimized];
        let pts = run_experiment(&cfg).unwrap();
        let at = |curve: Curve, x: f64| {
            pts.iter()
                .find(|q| q.curve == curve && q.x == x)
                .and_then(|q| q.loss)
                .unwrap()
        };
        for q in pts.iter().filter(|q| q.curve == Curve::Exact) {
            let expect = cfg.loss_fa * (1.0 - cfg.prior_p1) * q.p_fa.unwrap() + cfg.loss_md * cfg.prior_p1 * q.p_md.unwrap();
            assert!((q.loss.unwrap() - expect).abs() <= 1e-12 * expect.max(1.0));
            let (e, m, b) = (at(Curve::Exact, q.x), at(Curve::Majority, q.x), at(Curve::BennettOptimized, q.x));
            assert!(e <= m, "p_com {p} N_c {}: exact {e} > majority {m}", q.x);
            assert!(e <= b, "p_com {p} N_c {}: exact {e} > bound-optimized {b}", q.x);
        }
    }
}
