use pipefuse_core::engine::{run, Event, EventKind, SimTrace};
use pipefuse_core::model::ConfigAssignment;
use pipefuse_core::rng;
use pipefuse_core::trace::{read_traces, traces_to_string, TraceError};
use pipefuse_core::workload::{gen_samples, gen_scenario, DifficultyMix};
use rand::Rng;

fn random_kind(r: &mut impl Rng) -> EventKind {
    match r.random_range(0..10) {
        0 => EventKind::UnitSensed,
        1 => EventKind::EncodeStart { resource: ["high", "medium", "low"][r.random_range(0..3)].into(), duration_us: r.random() },
        2 => EventKind::EncodeEnd,
        3 => EventKind::CheckpointEval { fraction: r.random(), p: r.random::<f64>() * 1e-300, committed: r.random() },
        4 => EventKind::SkipCommitted { checkpoint_unit: r.random(), units_skipped: r.random(), saved_encode_us: r.random() },
        5 => EventKind::AggregationDone { rows: r.random(), duration_us: r.random() },
        6 => EventKind::FusionStart { padded: (0..r.random_range(0..3)).map(|_| r.random_range(0..8)).collect() },
        7 => EventKind::PredictionEmitted { class: r.random_range(0..100), label: r.random_range(0..100) },
        8 => EventKind::ConfigSwitch { assignment: "s1m0/s2m2".into(), probe_us: r.random() },
        _ => EventKind::ResourceChange { level: format!("r{}", r.random_range(0..4)) },
    }
}

#[test]
fn hundred_thousand_events_round_trip_bit_exactly() {
    let s = gen_scenario("lrw-like", 0).unwrap().without_skipping();
    let sample = &gen_samples(&s, 1, DifficultyMix::EVEN, 3)[0];
    let mut t: SimTrace = run(&s, &ConfigAssignment::minimal(2), sample, None).unwrap();
    let mut r = rng::stream(9, "test/trace", 0);
    t.events = (0..100_000u64)
        .map(|i| Event {
            time_us: i * 17 + r.random_range(0..17),
            modality: r.random::<bool>().then(|| r.random_range(0..3)),
            unit: r.random::<bool>().then(|| r.random()),
            kind: random_kind(&mut r),
        })
        .collect();
    let text = traces_to_string(std::slice::from_ref(&t));
    let back = read_traces(&text).unwrap();
    assert_eq!(back.len(), 1);
    for (a, b) in back[0].events.iter().zip(&t.events) {
        if let (EventKind::CheckpointEval { fraction: x, p: px, .. }, EventKind::CheckpointEval { fraction: y, p: py, .. }) =
            (&a.kind, &b.kind)
        {
            assert_eq!(x.to_bits(), y.to_bits());
            assert_eq!(px.to_bits(), py.to_bits());
        }
    }
    assert_eq!(back[0], t);
    assert_eq!(traces_to_string(&back), text);
}

#[test]
fn truncated_file_is_corrupt() {
    let s = gen_scenario("motivation-av", 0).unwrap();
    let t = run(&s, &ConfigAssignment::minimal(2), &gen_samples(&s, 1, DifficultyMix::EVEN, 0)[0], None).unwrap();
    let text = traces_to_string(&[t]);
    let cut: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
    assert!(matches!(read_traces(&cut), Err(TraceError::CorruptLine { line: 1, .. })));
    assert_eq!(read_traces("").unwrap(), Vec::new());
}
