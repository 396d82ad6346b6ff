//! Trace-driven mobility from a small SUMO FCD export.

use std::path::PathBuf;

use vanetsim::config::parse_config;
use vanetsim::engine::{RngStream, SimTime};
use vanetsim::mobility::{parse_fcd, MobilityProvider, Position, TraceProvider};
use vanetsim::protocols::ProtocolKind;
use vanetsim::sweep::{run_sweep, SweepOptions};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/two_cars.fcd.xml")
}

fn provider() -> MobilityProvider {
    let samples = parse_fcd(&fixture()).unwrap();
    let mut rng = RngStream::new(1, "mobility");
    MobilityProvider::Trace(TraceProvider::from_samples(samples, 0.0, &mut rng))
}

#[test]
fn samples_are_read_in_document_order() {
    let samples = parse_fcd(&fixture()).unwrap();
    assert_eq!(samples.len(), 6);
    let ids: Vec<&str> = samples.iter().map(|s| s.vehicle_id.as_str()).collect();
    assert_eq!(ids, ["car_a", "bus_b", "car_a", "bus_b", "car_a", "bus_b"]);
    assert_eq!(samples[4].time, SimTime::from_millis(2_000));
    assert_eq!(samples[4].pos, Position::new(120.0, 10.0));
    assert_eq!(samples[4].speed, 12.0);
}

#[test]
fn positions_at_sample_times_are_exact() {
    let mob = provider();
    assert_eq!(mob.vehicle_count(), 2);
    let expected = [
        [(100.0, 0.0), (110.0, 0.0), (120.0, 10.0)],
        [(300.0, 0.0), (320.0, 0.0), (340.0, 0.0)],
    ];
    for (id, track) in expected.iter().enumerate() {
        for (t, &(x, y)) in track.iter().enumerate() {
            let s = mob.position_at(id as u32, SimTime::from_millis(t as u64 * 1_000)).unwrap();
            assert_eq!(s.pos, Position::new(x, y), "vehicle {id} at {t}s");
        }
    }
}

#[test]
fn midpoints_interpolate_linearly() {
    let mob = provider();
    let half = SimTime::from_millis(500);
    let later = SimTime::from_millis(1_500);
    assert_eq!(mob.position_at(0, half).unwrap().pos, Position::new(105.0, 0.0));
    assert_eq!(mob.position_at(0, later).unwrap().pos, Position::new(115.0, 5.0));
    assert_eq!(mob.position_at(1, later).unwrap().pos, Position::new(330.0, 0.0));
    assert_eq!(mob.position_at(0, later).unwrap().speed, 11.0);
    // a quarter of the way through the second interval
    let q = mob.position_at(0, SimTime::from_millis(1_250)).unwrap().pos;
    assert_eq!(q, Position::new(112.5, 2.5));
}

#[test]
fn positions_hold_outside_the_trace() {
    let mob = provider();
    assert_eq!(mob.pos(0, SimTime::from_millis(30_000)), Position::new(120.0, 10.0));
    assert_eq!(mob.pos(1, SimTime::from_millis(30_000)), Position::new(340.0, 0.0));
}

fn trace_config(protocols: &str) -> vanetsim::config::ScenarioConfig {
    let json = format!(
        r#"{{
            "mobility": {{"mode": "trace", "trace_path": {path:?}}},
            "densities": [2],
            "seeds": [1, 2],
            "sim_duration": 5,
            "protocols": [{protocols}],
            "workload": {{"event_rate": 4.0}}
        }}"#,
        path = fixture().display().to_string()
    );
    let cfg = parse_config(&json).unwrap();
    cfg.validate().unwrap();
    cfg
}

#[test]
fn trace_driven_sweep_produces_metrics() {
    let cfg = trace_config(r#""baseline", "hybrid_vehcloud", "dfcv""#);
    let result = run_sweep(&cfg, SweepOptions::default()).unwrap();
    assert_eq!(result.summaries.len(), 6);
    for s in &result.summaries {
        assert_eq!(s.vehicle_count, 2);
        assert!(s.n_sent > 0, "{s:?}");
        assert_eq!(s.n_delivered + s.n_lost, s.n_sent);
        let dp = s.delivery_probability.unwrap();
        let plr = s.plr.unwrap();
        assert!((dp + plr - 1.0).abs() < 1e-9);
    }
    // 200 m apart on open road: flooding reaches the other vehicle
    let flood = result.summaries.iter().find(|s| s.protocol == ProtocolKind::Baseline).unwrap();
    assert_eq!(flood.n_lost, 0);
    let csv = result.csv();
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn trace_density_must_match_the_file() {
    let json = format!(
        r#"{{"mobility": {{"mode": "trace", "trace_path": {:?}}}, "densities": [3]}}"#,
        fixture().display().to_string()
    );
    let err = parse_config(&json).unwrap().validate().unwrap_err();
    assert_eq!(err.key(), "densities[0]");
}
