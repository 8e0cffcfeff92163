use std::time::Duration;

use tagpoll_core::bench::{compare, miss_analysis, run, ClientStrategy, Report, RunSpec};
use tagpoll_core::sim::{SimConfig, SimMode};

fn fixed_sim(interval_ms: u64) -> Option<SimConfig> {
    Some(SimConfig {
        mode: SimMode::Fixed { interval_ms },
        ..SimConfig::default()
    })
}

#[test]
fn event_driven_with_sim_off_only_heartbeats() {
    let spec = RunSpec::new(
        ClientStrategy::EventDriven {
            max_wait_ms: 10_000,
            client_delay_ms: 0,
        },
        None,
        Duration::from_secs(30),
    )
    .with_time_scale(10.0);
    let m = run(&spec).unwrap();
    assert_eq!(m.responses_with_data, 0);
    assert_eq!(m.requests, 0);
    assert_eq!(m.payload_bytes, 0);
    assert!(m.heartbeats >= 1, "{m:?}");
    assert_eq!(miss_analysis(&spec).unwrap(), (0, 0, 0));
}

#[test]
fn slow_fixed_timer_misses_intermediate_changes() {
    let spec = RunSpec::new(
        ClientStrategy::FixedTimer { period_ms: 5000 },
        fixed_sim(1000),
        Duration::from_secs(60),
    )
    .with_time_scale(20.0);
    let m = run(&spec).unwrap();
    assert_eq!(m.changes_produced, 60);
    assert_eq!(m.requests, 12);
    assert_eq!(m.changes_delivered + m.changes_missed, m.changes_produced);
    assert!((10..=12).contains(&m.changes_delivered), "{m:?}");
    assert!((48..=50).contains(&m.changes_missed), "{m:?}");
}

#[test]
fn event_driven_misses_nothing_and_pays_per_change() {
    let spec = RunSpec::new(ClientStrategy::event(), fixed_sim(1000), Duration::from_secs(60)).with_time_scale(20.0);
    let m = run(&spec).unwrap();
    assert_eq!(m.changes_produced, 60);
    assert_eq!((m.changes_delivered, m.changes_missed), (60, 0));
    assert_eq!(m.requests, 60);
    assert_eq!(m.payload_bytes, 10 * m.changes_delivered);
    assert_eq!(m.latencies.len(), 60);
    assert_eq!(m.change_intervals.len(), 59);
}

#[test]
fn many_event_clients_each_see_every_change() {
    let spec = RunSpec::new(ClientStrategy::event(), fixed_sim(100), Duration::from_secs(20))
        .with_time_scale(5.0)
        .with_clients(8);
    let m = run(&spec).unwrap();
    assert_eq!(m.changes_produced, 8 * 200);
    assert_eq!(m.changes_missed, 0, "{:?}", (m.changes_produced, m.changes_delivered));
    assert_eq!(m.requests, m.changes_delivered);
}

#[test]
fn client_delay_spaces_requests() {
    let spec = RunSpec::new(
        ClientStrategy::EventDriven {
            max_wait_ms: 30_000,
            client_delay_ms: 500,
        },
        fixed_sim(1000),
        Duration::from_secs(10),
    )
    .with_time_scale(2.0);
    let m = run(&spec).unwrap();
    assert!(m.inter_arrival.iter().all(|d| *d >= Duration::from_millis(490)), "{:?}", m.inter_arrival);
    assert_eq!(m.changes_missed, 0);
}

#[test]
fn compare_sorts_and_round_trips() {
    let specs = vec![
        RunSpec::new(ClientStrategy::event(), fixed_sim(2000), Duration::from_secs(20)).with_time_scale(20.0),
        RunSpec::new(
            ClientStrategy::FixedTimer { period_ms: 1000 },
            fixed_sim(2000),
            Duration::from_secs(20),
        )
        .with_time_scale(20.0),
    ];
    let report = compare(&specs).unwrap();
    assert_eq!(report.rows()[0].strategy, "fixed:1000");
    assert_eq!(report.rows()[1].strategy, "event");
    assert_eq!(report.rows()[1].change_rate_per_min, 30.0);
    let back = Report::from_csv(report.to_csv().as_bytes()).unwrap();
    assert_eq!(back, report);
}

#[test]
fn invalid_specs_are_rejected_before_running() {
    let mut spec = RunSpec::default();
    spec.duration = Duration::from_secs(1);
    assert!(run(&spec).is_err());
    let mut spec = RunSpec::default().with_time_scale(2.0);
    spec.sim.as_mut().unwrap().time_scale = 1.0;
    assert!(run(&spec).is_err());
}
