use pipefuse_core::aggregation::{aggregate, alternating_shift, temporal_differences, DiffSpec, LinearMap, ShiftSpec};
use pipefuse_core::engine::{checkpoint_units, run, slow_modality, SimTrace};
use pipefuse_core::features::FeatureMatrix;
use pipefuse_core::latency::{end_to_end_latency, reported_latency, unimodal_latency};
use pipefuse_core::model::{ConfigAssignment, ExecutionMode, Scenario};
use pipefuse_core::optimizer::{brute_force, greedy_search};
use pipefuse_core::predictor::{consistency, ModalityIndicators};
use pipefuse_core::rng;
use pipefuse_core::sample::{Difficulty, Sample};
use pipefuse_core::skip::OracleGate;
use pipefuse_core::trace::{read_traces, report_row, traces_to_string};
use pipefuse_core::workload::{gen_samples, gen_scenario, gen_surface, random_assignment, DifficultyMix, SurfaceKind};
use proptest::prelude::*;

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = FeatureMatrix> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-100.0f64..100.0, r * c)
            .prop_map(move |data| FeatureMatrix::from_flat(r, c, data, r).unwrap())
    })
}

fn random_case(seed: u64) -> (Scenario, ConfigAssignment, Sample) {
    let s = gen_scenario("random", seed).unwrap();
    let a = random_assignment(&s, &mut rng::stream(seed, "test/assignment", 0));
    let sample = Sample::generate(s.task.classes, seed, seed, Difficulty::Medium, seed.is_multiple_of(7));
    (s, a, sample)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn shift_moves_whole_groups(m in matrix(12, 9), k in 1usize..4, n in 1usize..5) {
        prop_assume!(n <= m.cols());
        let spec = ShiftSpec { n_groups: n, shift_distance: k };
        let out = alternating_shift(&m, &spec).unwrap();
        let groups = spec.groups(m.cols()).unwrap();
        let rows = m.rows();
        for i in 0..rows {
            for (g, range) in groups.iter().enumerate() {
                let interior = n > 1 && i >= k && i + k < rows;
                let src = match (interior, g) {
                    (true, 0) => i - k,
                    (true, g) if g == n - 1 => i + k,
                    _ => i,
                };
                prop_assert_eq!(&out.row(i)[range.clone()], &m.row(src)[range.clone()]);
            }
        }
    }

    #[test]
    fn differences_are_exact(m in matrix(10, 5), s in 1usize..4) {
        prop_assume!(m.rows() > s);
        let d = temporal_differences(&m, &DiffSpec::identity(vec![s], m.cols())).unwrap();
        prop_assert_eq!(d[0].rows(), m.rows() - s);
        for t in s..m.rows() {
            for c in 0..m.cols() {
                prop_assert_eq!(d[0].get(t - s, c), m.get(t, c) - m.get(t - s, c));
            }
        }
    }

    #[test]
    fn aggregate_is_linear(x in matrix(8, 6), a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let y = FeatureMatrix::from_flat(
            x.rows(), x.cols(),
            x.as_slice().iter().enumerate().map(|(i, v)| v * 0.5 - i as f64).collect(), x.rows()).unwrap();
        prop_assume!(x.rows() >= 3);
        let shift = ShiftSpec { n_groups: x.cols().min(3), shift_distance: 1 };
        let diff = DiffSpec::seeded(vec![1, 2], x.cols(), 4, seed);
        let lhs = aggregate(&x.linear_combination(a, &y, b), &shift, &diff).unwrap();
        let (ax, ay) = (aggregate(&x, &shift, &diff).unwrap(), aggregate(&y, &shift, &diff).unwrap());
        prop_assert_eq!(lhs.len(), x.cols() + 8);
        for i in 0..lhs.len() {
            let rhs = a * ax[i] + b * ay[i];
            prop_assert!((lhs[i] - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()), "{} vs {}", lhs[i], rhs);
        }
    }

    #[test]
    fn encoder_is_bias_free(cols in 1usize..8, rows in 1usize..8, seed in any::<u64>()) {
        let map = LinearMap::seeded(rows, cols, seed, 0);
        prop_assert!(map.apply(&vec![0.0; cols]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cosine_is_bounded_and_symmetric(a in prop::collection::vec(-5.0f64..5.0, 1..12), b in prop::collection::vec(-5.0f64..5.0, 1..12)) {
        let n = a.len().min(b.len());
        if let Ok(c) = consistency(&a[..n], &b[..n]) {
            prop_assert!((-1.0..=1.0).contains(&c));
            prop_assert_eq!(c, consistency(&b[..n], &a[..n]).unwrap());
        }
    }

    #[test]
    fn checkpoints_are_sorted_and_in_range(fs in prop::collection::vec(0.01f64..1.0, 1..5), n in 1u32..64) {
        let cps = checkpoint_units(&fs, n);
        prop_assert!(cps.windows(2).all(|w| w[0].0 < w[1].0));
        prop_assert!(cps.iter().all(|c| c.0 < n));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pipelined_engine_matches_closed_form(seed in any::<u64>()) {
        let (s, a, sample) = random_case(seed);
        let s = s.without_skipping().with_mode(ExecutionMode::Pipelined);
        let t = run(&s, &a, &sample, None).unwrap();
        let e2e = end_to_end_latency(&a, &s, s.resource_at(0)).unwrap();
        prop_assert_eq!(t.summary.reported_latency_us, e2e.reported_us(s.window_us));
        prop_assert_eq!(reported_latency(&t, &s).unwrap(), t.summary.reported_latency_us);
        prop_assert_eq!(t.summary.waiting_us, e2e.waiting_us);
    }

    #[test]
    fn pipelining_dominates_blocking(seed in any::<u64>()) {
        let (s, a, sample) = random_case(seed);
        let s = s.without_skipping();
        let p = run(&s.with_mode(ExecutionMode::Pipelined), &a, &sample, None).unwrap();
        let b = run(&s.with_mode(ExecutionMode::Blocking), &a, &sample, None).unwrap();
        prop_assert!(p.summary.reported_latency_us <= b.summary.reported_latency_us);
        for (m, (pp, bb)) in p.summary.peak_buffered_units.iter().zip(&b.summary.peak_buffered_units).enumerate() {
            prop_assert!(pp <= bb, "modality {}", m);
            prop_assert_eq!(*bb, s.sensing(m, a.pairs()[m]).units_per_window);
        }
    }

    #[test]
    fn non_blocking_never_waits(seed in any::<u64>()) {
        let (s, a, sample) = random_case(seed);
        let nb = run(&s.with_mode(ExecutionMode::NonBlocking), &a, &sample, None).unwrap();
        let b = run(&s.with_mode(ExecutionMode::Blocking), &a, &sample, None).unwrap();
        prop_assert_eq!(nb.summary.waiting_us, 0);
        prop_assert!(nb.summary.reported_latency_us <= b.summary.reported_latency_us);
    }

    #[test]
    fn slower_encoders_never_help(seed in any::<u64>(), extra in 1u64..50_000) {
        let (s, a, _) = random_case(seed);
        let r = s.resource_at(0);
        let base = end_to_end_latency(&a, &s, r).unwrap();
        let mut slow = s.clone();
        let m = (seed % s.modality_count() as u64) as usize;
        let key = slow.profile.entries().map(|(k, _)| *k).find(|k| k.modality == m && k.sensing == a.pairs()[m].sensing && k.model == a.pairs()[m].model && k.resource == r).unwrap();
        let mut cost = slow.profile.get(&key).unwrap();
        cost.encode_us += extra;
        slow.profile.insert(key, cost);
        let after = end_to_end_latency(&a, &slow, r).unwrap();
        prop_assert!(after.total_us >= base.total_us);
        prop_assert!(unimodal_latency(m, &a, &slow, r).unwrap() >= unimodal_latency(m, &a, &s, r).unwrap());
    }

    #[test]
    fn oracle_skips_keep_predictions_and_never_slow_down(seed in any::<u64>()) {
        let s = gen_scenario("lrw-like", seed % 3).unwrap();
        let a = random_assignment(&s, &mut rng::stream(seed, "test/assignment", 1));
        let samples = gen_samples(&s, 3, DifficultyMix::EVEN, seed);
        let gate = OracleGate::for_samples(&s, &a, &samples).unwrap();
        prop_assert!(slow_modality(&s, &a).unwrap() < 2);
        for sample in &samples {
            let with = run(&s, &a, sample, Some(&gate)).unwrap();
            let without = run(&s.without_skipping(), &a, sample, None).unwrap();
            prop_assert_eq!(with.summary.prediction, without.summary.prediction);
            prop_assert!(with.summary.reported_latency_us <= without.summary.reported_latency_us);
        }
    }

    #[test]
    fn traces_round_trip_and_report_adds_up(seed in any::<u64>()) {
        let (s, a, sample) = random_case(seed);
        let traces: Vec<SimTrace> = [ExecutionMode::Blocking, ExecutionMode::NonBlocking, ExecutionMode::Pipelined]
            .into_iter()
            .map(|m| run(&s.without_skipping().with_mode(m), &a, &sample, None).unwrap())
            .collect();
        let text = traces_to_string(&traces);
        prop_assert_eq!(&read_traces(&text).unwrap(), &traces);
        for t in &traces {
            let r = report_row(t).unwrap();
            prop_assert_eq!(r.sensing_bound_us + r.encode_us + r.aggregation_us + r.fusion_us, t.prediction_time().unwrap());
        }
    }

    #[test]
    fn greedy_is_feasible_and_bounded_by_brute_force(seed in any::<u64>(), c in -1.0f64..1.0) {
        let s = gen_scenario("lrw-like", 0).unwrap();
        let f = gen_surface(&s, seed, SurfaceKind::Interacting);
        let ind = ModalityIndicators::from_consistency(c);
        let r = s.resource_at(0);
        let g = greedy_search(&s, &ind, &f, r).unwrap();
        let b = brute_force(&s, &ind, &f, r).unwrap();
        prop_assert!(g.score <= b.best_score);
        prop_assert!(end_to_end_latency(&g.assignment, &s, r).unwrap().reported_us(s.window_us) <= s.t_max_us);
    }
}
