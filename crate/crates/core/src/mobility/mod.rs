//! Vehicle positions over time.
//!
//! Synthetic providers move every vehicle at a constant speed along a
//! wrapping road (a 1-D highway or the streets of a square block grid).
//! Trace providers interpolate SUMO floating-car-data samples.

mod fcd;

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fcd::{parse_fcd, parse_fcd_str, FcdError};

use crate::engine::{RngStream, SimTime};

/// Exact mph to m/s factor.
pub const MPH_TO_MPS: f64 = 0.44704;
/// Distance between adjacent lane centre lines.
pub const LANE_WIDTH_M: f64 = 3.5;

pub type VehicleId = u32;

pub fn mph_to_mps(mph: f64) -> f64 {
    mph * MPH_TO_MPS
}

pub fn mps_to_mph(mps: f64) -> f64 {
    mps / MPH_TO_MPS
}

/// Planar position in metres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance_to(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: VehicleId,
    pub pos: Position,
    /// m/s
    pub speed: f64,
    /// radians, counter-clockwise from +x
    pub heading: f64,
    pub is_gateway: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub time: SimTime,
    pub vehicle_id: String,
    pub pos: Position,
    /// m/s
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MobilityMode {
    SyntheticHighway,
    SyntheticGrid,
    Trace,
}

/// Square street grid: `blocks` x `blocks` blocks of side `block_size`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub blocks: u32,
    pub block_size: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            blocks: 10,
            block_size: 200.0,
        }
    }
}

impl GridSpec {
    pub fn extent(&self) -> f64 {
        f64::from(self.blocks) * self.block_size
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilitySpec {
    pub mode: MobilityMode,
    /// metres
    pub road_length: f64,
    pub lanes: u32,
    pub vehicle_count: u32,
    /// `[min, max]` in mph
    pub speed_range: [f64; 2],
    pub trace_path: Option<PathBuf>,
    /// Share of vehicles flagged as bus gateways.
    pub gateway_fraction: f64,
    pub grid: GridSpec,
}

impl Default for MobilitySpec {
    fn default() -> Self {
        MobilitySpec {
            mode: MobilityMode::SyntheticHighway,
            road_length: 10_000.0,
            lanes: 2,
            vehicle_count: 50,
            speed_range: [30.0, 60.0],
            trace_path: None,
            gateway_fraction: 0.05,
            grid: GridSpec::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum MobilityError {
    #[error("invalid mobility spec: {0}")]
    Config(String),
    #[error("trace {path}: {source}")]
    Trace {
        path: String,
        #[source]
        source: FcdError,
    },
    #[error("unknown vehicle id {0}")]
    UnknownVehicle(VehicleId),
}

impl MobilitySpec {
    pub fn validate(&self) -> Result<(), MobilityError> {
        let bad = |m: String| Err(MobilityError::Config(m));
        if !(1..=10_000).contains(&self.vehicle_count) {
            return bad(format!("vehicle_count {} outside [1, 10000]", self.vehicle_count));
        }
        if !(self.road_length.is_finite() && self.road_length > 0.0) {
            return bad(format!("road_length {} must be positive", self.road_length));
        }
        if self.lanes == 0 {
            return bad("lanes must be at least 1".into());
        }
        let [lo, hi] = self.speed_range;
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
            return bad(format!("speed_range [{lo}, {hi}] must satisfy 0 <= min <= max"));
        }
        if !(0.0..=1.0).contains(&self.gateway_fraction) {
            return bad(format!("gateway_fraction {} outside [0, 1]", self.gateway_fraction));
        }
        if self.mode == MobilityMode::SyntheticGrid && (self.grid.blocks == 0 || self.grid.block_size.is_nan() || self.grid.block_size <= 0.0) {
            return bad("grid needs at least one block of positive size".into());
        }
        if self.mode == MobilityMode::Trace && self.trace_path.is_none() {
            return bad("trace mode requires trace_path".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Axis {
    X,
    Y,
}

/// One vehicle on a wrapping straight road.
#[derive(Debug, Clone)]
struct Track {
    axis: Axis,
    /// Fixed coordinate perpendicular to the direction of travel.
    lateral: f64,
    start: f64,
    length: f64,
    speed: f64,
}

impl Track {
    fn along(&self, t: SimTime) -> f64 {
        (self.start + self.speed * t.as_secs_f64()).rem_euclid(self.length)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticProvider {
    tracks: Vec<Track>,
    gateways: Vec<bool>,
    bounds: (Position, Position),
    max_speed: f64,
}

#[derive(Debug, Clone)]
pub struct TraceProvider {
    names: Vec<String>,
    /// Per-vehicle samples, strictly increasing in time.
    samples: Vec<Vec<TraceSample>>,
    gateways: Vec<bool>,
    bounds: (Position, Position),
    max_speed: f64,
}

/// Answers `position_at` for every vehicle of a run. Immutable once built.
#[derive(Debug, Clone)]
pub enum MobilityProvider {
    Synthetic(SyntheticProvider),
    Trace(TraceProvider),
}

fn lane_offset(lane: u32, lanes: u32) -> f64 {
    (f64::from(lane) - f64::from(lanes - 1) / 2.0) * LANE_WIDTH_M
}

/// Flags `round(fraction * n)` vehicles as gateways, chosen by a seeded shuffle.
fn pick_gateways(n: usize, fraction: f64, rng: &mut RngStream) -> Vec<bool> {
    let count = ((fraction * n as f64) + 0.5).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..count.min(n) {
        let j = i + rng.draw_index(n - i);
        order.swap(i, j);
    }
    let mut flags = vec![false; n];
    for &i in order.iter().take(count) {
        flags[i] = true;
    }
    flags
}

pub fn build_provider(spec: &MobilitySpec, rng: &mut RngStream) -> Result<MobilityProvider, MobilityError> {
    spec.validate()?;
    let n = spec.vehicle_count as usize;
    let [lo, hi] = spec.speed_range;
    let (vmin, vmax) = (mph_to_mps(lo), mph_to_mps(hi));
    match spec.mode {
        MobilityMode::SyntheticHighway => {
            let mut tracks = Vec::with_capacity(n);
            for _ in 0..n {
                let start = rng.draw_range(0.0, spec.road_length);
                let lane = rng.draw_index(spec.lanes as usize) as u32;
                let speed = rng.draw_range(vmin, vmax);
                tracks.push(Track {
                    axis: Axis::X,
                    lateral: f64::from(lane) * LANE_WIDTH_M,
                    start,
                    length: spec.road_length,
                    speed,
                });
            }
            let gateways = pick_gateways(n, spec.gateway_fraction, rng);
            let top = f64::from(spec.lanes - 1) * LANE_WIDTH_M;
            Ok(MobilityProvider::Synthetic(SyntheticProvider {
                tracks,
                gateways,
                bounds: (Position::new(0.0, 0.0), Position::new(spec.road_length, top)),
                max_speed: vmax,
            }))
        }
        MobilityMode::SyntheticGrid => {
            let extent = spec.grid.extent();
            let streets = spec.grid.blocks as usize + 1;
            let mut tracks = Vec::with_capacity(n);
            for _ in 0..n {
                let axis = if rng.draw() < 0.5 { Axis::X } else { Axis::Y };
                let street = rng.draw_index(streets) as f64 * spec.grid.block_size;
                let lane = rng.draw_index(spec.lanes as usize) as u32;
                let start = rng.draw_range(0.0, extent);
                let speed = rng.draw_range(vmin, vmax);
                tracks.push(Track {
                    axis,
                    lateral: street + lane_offset(lane, spec.lanes),
                    start,
                    length: extent,
                    speed,
                });
            }
            let gateways = pick_gateways(n, spec.gateway_fraction, rng);
            let half = lane_offset(spec.lanes - 1, spec.lanes);
            Ok(MobilityProvider::Synthetic(SyntheticProvider {
                tracks,
                gateways,
                bounds: (Position::new(-half, -half), Position::new(extent + half, extent + half)),
                max_speed: vmax,
            }))
        }
        MobilityMode::Trace => {
            let path = spec.trace_path.as_ref().expect("validated");
            let samples = parse_fcd(path).map_err(|source| MobilityError::Trace {
                path: path.display().to_string(),
                source,
            })?;
            let provider = TraceProvider::from_samples(samples, spec.gateway_fraction, rng);
            if provider.names.len() != n {
                return Err(MobilityError::Config(format!(
                    "vehicle_count {} does not match the {} vehicles in trace {}",
                    n,
                    provider.names.len(),
                    path.display()
                )));
            }
            Ok(MobilityProvider::Trace(provider))
        }
    }
}

impl TraceProvider {
    /// Groups samples per vehicle, numbering vehicles by first appearance.
    pub fn from_samples(samples: Vec<TraceSample>, gateway_fraction: f64, rng: &mut RngStream) -> Self {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut names = Vec::new();
        let mut per: Vec<Vec<TraceSample>> = Vec::new();
        let mut lo = Position::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Position::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut max_speed: f64 = 0.0;
        for s in samples {
            lo = Position::new(lo.x.min(s.pos.x), lo.y.min(s.pos.y));
            hi = Position::new(hi.x.max(s.pos.x), hi.y.max(s.pos.y));
            max_speed = max_speed.max(s.speed.abs());
            let slot = *index.entry(s.vehicle_id.clone()).or_insert_with(|| {
                names.push(s.vehicle_id.clone());
                per.push(Vec::new());
                per.len() - 1
            });
            per[slot].push(s);
        }
        for track in &per {
            for w in track.windows(2) {
                let dt = (w[1].time - w[0].time).as_secs_f64();
                if dt > 0.0 {
                    max_speed = max_speed.max(w[0].pos.distance_to(&w[1].pos) / dt);
                }
            }
        }
        if names.is_empty() {
            lo = Position::default();
            hi = Position::default();
        }
        let gateways = pick_gateways(names.len(), gateway_fraction, rng);
        TraceProvider {
            names,
            samples: per,
            gateways,
            bounds: (lo, hi),
            max_speed,
        }
    }

    pub fn name(&self, id: VehicleId) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    fn state(&self, id: VehicleId, t: SimTime) -> Option<VehicleState> {
        let track = self.samples.get(id as usize)?;
        let is_gateway = self.gateways[id as usize];
        let at = |s: &TraceSample, heading: f64| VehicleState {
            id,
            pos: s.pos,
            speed: s.speed,
            heading,
            is_gateway,
        };
        let heading_of = |a: &TraceSample, b: &TraceSample| {
            let (dx, dy) = (b.pos.x - a.pos.x, b.pos.y - a.pos.y);
            if dx == 0.0 && dy == 0.0 {
                0.0
            } else {
                dy.atan2(dx)
            }
        };
        let first = track.first()?;
        if track.len() == 1 || t <= first.time {
            let h = track.get(1).map_or(0.0, |b| heading_of(first, b));
            return Some(at(first, h));
        }
        let last = track.last()?;
        if t >= last.time {
            let h = heading_of(&track[track.len() - 2], last);
            return Some(at(last, h));
        }
        // first sample strictly after t; t lies in [track[k-1].time, track[k].time)
        let k = track.partition_point(|s| s.time <= t);
        let (a, b) = (&track[k - 1], &track[k]);
        let heading = heading_of(a, b);
        if t == a.time {
            return Some(at(a, heading));
        }
        let span = (b.time - a.time).as_micros() as f64;
        let f = (t - a.time).as_micros() as f64 / span;
        Some(VehicleState {
            id,
            pos: Position::new(a.pos.x + f * (b.pos.x - a.pos.x), a.pos.y + f * (b.pos.y - a.pos.y)),
            speed: a.speed + f * (b.speed - a.speed),
            heading,
            is_gateway,
        })
    }
}

impl MobilityProvider {
    pub fn vehicle_count(&self) -> usize {
        match self {
            MobilityProvider::Synthetic(p) => p.tracks.len(),
            MobilityProvider::Trace(p) => p.names.len(),
        }
    }

    pub fn is_gateway(&self, id: VehicleId) -> bool {
        let flags = match self {
            MobilityProvider::Synthetic(p) => &p.gateways,
            MobilityProvider::Trace(p) => &p.gateways,
        };
        flags.get(id as usize).copied().unwrap_or(false)
    }

    pub fn gateway_ids(&self) -> Vec<VehicleId> {
        (0..self.vehicle_count() as VehicleId).filter(|&v| self.is_gateway(v)).collect()
    }

    /// Upper bound on any vehicle's speed, m/s.
    pub fn max_speed(&self) -> f64 {
        match self {
            MobilityProvider::Synthetic(p) => p.max_speed,
            MobilityProvider::Trace(p) => p.max_speed,
        }
    }

    /// Axis-aligned box containing every position the provider can report.
    pub fn bounds(&self) -> (Position, Position) {
        match self {
            MobilityProvider::Synthetic(p) => p.bounds,
            MobilityProvider::Trace(p) => p.bounds,
        }
    }

    pub fn position_at(&self, id: VehicleId, t: SimTime) -> Result<VehicleState, MobilityError> {
        match self {
            MobilityProvider::Synthetic(p) => {
                let track = p.tracks.get(id as usize).ok_or(MobilityError::UnknownVehicle(id))?;
                let along = track.along(t);
                let (pos, heading) = match track.axis {
                    Axis::X => (Position::new(along, track.lateral), 0.0),
                    Axis::Y => (Position::new(track.lateral, along), FRAC_PI_2),
                };
                Ok(VehicleState {
                    id,
                    pos,
                    speed: track.speed,
                    heading,
                    is_gateway: p.gateways[id as usize],
                })
            }
            MobilityProvider::Trace(p) => p.state(id, t).ok_or(MobilityError::UnknownVehicle(id)),
        }
    }

    /// Position only; panics on an unknown id. For hot loops over `0..vehicle_count()`.
    pub fn pos(&self, id: VehicleId, t: SimTime) -> Position {
        match self {
            MobilityProvider::Synthetic(p) => {
                let track = &p.tracks[id as usize];
                let along = track.along(t);
                match track.axis {
                    Axis::X => Position::new(along, track.lateral),
                    Axis::Y => Position::new(track.lateral, along),
                }
            }
            MobilityProvider::Trace(p) => p.state(id, t).expect("known vehicle").pos,
        }
    }

    /// A provider with explicit fixed positions; used for static topologies.
    pub fn stationary(positions: &[Position], gateways: &[bool]) -> Self {
        let samples = positions
            .iter()
            .enumerate()
            .map(|(i, p)| TraceSample {
                time: SimTime::ZERO,
                vehicle_id: format!("v{i}"),
                pos: *p,
                speed: 0.0,
            })
            .collect();
        let mut rng = RngStream::new(0, "stationary");
        let mut provider = TraceProvider::from_samples(samples, 0.0, &mut rng);
        for (flag, g) in provider.gateways.iter_mut().zip(gateways) {
            *flag = *g;
        }
        MobilityProvider::Trace(provider)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_vehicle(start: f64, speed: f64, length: f64) -> MobilityProvider {
        MobilityProvider::Synthetic(SyntheticProvider {
            tracks: vec![Track {
                axis: Axis::X,
                lateral: 0.0,
                start,
                length,
                speed,
            }],
            gateways: vec![false],
            bounds: (Position::new(0.0, 0.0), Position::new(length, 0.0)),
            max_speed: speed,
        })
    }

    #[test]
    fn mph_conversion() {
        assert!((mph_to_mps(30.0) - 13.4112).abs() < 1e-12);
        for mph in [0.5, 30.0, 45.0, 60.0, 123.456] {
            let back = mps_to_mph(mph_to_mps(mph));
            assert!(((back - mph) / mph).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_speed_and_wrap() {
        let p = one_vehicle(0.0, 20.0, 10_000.0);
        assert_eq!(p.position_at(0, SimTime::from_millis(1000)).unwrap().pos.x, 20.0);
        let p = one_vehicle(9_990.0, 20.0, 10_000.0);
        let x = p.position_at(0, SimTime::from_millis(1000)).unwrap().pos.x;
        assert!((x - 10.0).abs() < 1e-9, "{x}");
    }

    #[test]
    fn unknown_vehicle_is_an_error() {
        let p = one_vehicle(0.0, 1.0, 10.0);
        assert!(matches!(p.position_at(3, SimTime::ZERO), Err(MobilityError::UnknownVehicle(3))));
    }

    #[test]
    fn highway_spawn_matches_spec() {
        let spec = MobilitySpec {
            vehicle_count: 50,
            ..MobilitySpec::default()
        };
        let p = build_provider(&spec, &mut RngStream::new(7, "mobility")).unwrap();
        assert_eq!(p.vehicle_count(), 50);
        let lanes: Vec<f64> = (0..spec.lanes).map(|l| f64::from(l) * LANE_WIDTH_M).collect();
        let (vmin, vmax) = (mph_to_mps(30.0), mph_to_mps(60.0));
        for v in 0..50 {
            let s = p.position_at(v, SimTime::ZERO).unwrap();
            assert!((0.0..10_000.0).contains(&s.pos.x));
            assert!(lanes.contains(&s.pos.y));
            assert!(s.speed >= vmin && s.speed <= vmax);
        }
        // 5% of 50 rounds to 3 (2.5 rounds half up)
        assert_eq!(p.gateway_ids().len(), 3);
    }

    #[test]
    fn grid_vehicles_stay_on_streets() {
        let spec = MobilitySpec {
            mode: MobilityMode::SyntheticGrid,
            vehicle_count: 200,
            lanes: 1,
            grid: GridSpec {
                blocks: 4,
                block_size: 100.0,
            },
            ..MobilitySpec::default()
        };
        let p = build_provider(&spec, &mut RngStream::new(3, "mobility")).unwrap();
        for v in 0..200 {
            for t in [0u64, 5, 77] {
                let pos = p.pos(v, SimTime::from_millis(t * 1000));
                let on_x_street = (pos.y / 100.0).fract() == 0.0 && (0.0..400.0).contains(&pos.x);
                let on_y_street = (pos.x / 100.0).fract() == 0.0 && (0.0..400.0).contains(&pos.y);
                assert!(on_x_street || on_y_street, "{pos:?}");
            }
        }
    }

    #[test]
    fn trace_interpolates_and_clamps() {
        let samples = vec![
            TraceSample {
                time: SimTime::ZERO,
                vehicle_id: "a".into(),
                pos: Position::new(0.0, 0.0),
                speed: 50.0,
            },
            TraceSample {
                time: SimTime::from_millis(2000),
                vehicle_id: "a".into(),
                pos: Position::new(100.0, 0.0),
                speed: 50.0,
            },
        ];
        let p = MobilityProvider::Trace(TraceProvider::from_samples(samples, 0.0, &mut RngStream::new(0, "t")));
        assert_eq!(p.position_at(0, SimTime::from_millis(1000)).unwrap().pos.x, 50.0);
        assert_eq!(p.position_at(0, SimTime::from_millis(9000)).unwrap().pos.x, 100.0);
        assert_eq!(p.position_at(0, SimTime::ZERO).unwrap().pos.x, 0.0);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = MobilitySpec {
            vehicle_count: 0,
            ..MobilitySpec::default()
        };
        assert!(s.validate().is_err());
        s.vehicle_count = 10_001;
        assert!(s.validate().is_err());
        s.vehicle_count = 5;
        s.road_length = 0.0;
        assert!(s.validate().is_err());
        s.road_length = 10.0;
        s.mode = MobilityMode::Trace;
        assert!(s.validate().is_err());
    }

    #[test]
    fn trace_count_mismatch_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.xml");
        std::fs::write(
            &path,
            r#"<fcd-export><timestep time="0"><vehicle id="a" x="0" y="0" speed="0"/></timestep></fcd-export>"#,
        )
        .unwrap();
        let spec = MobilitySpec {
            mode: MobilityMode::Trace,
            vehicle_count: 2,
            trace_path: Some(path),
            ..MobilitySpec::default()
        };
        let err = build_provider(&spec, &mut RngStream::new(0, "m")).unwrap_err();
        assert!(matches!(err, MobilityError::Config(ref m) if m.contains("does not match")));
    }
}
