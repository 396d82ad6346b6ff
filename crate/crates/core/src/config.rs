//! Scenario configuration: a JSON document whose every section has
//! defaults, so `{}` is a complete scenario.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{RngStream, SimTime, DEFAULT_EVENT_BUDGET};
use crate::infra::{place_base_stations, BaseStation, InfraSpec};
use crate::mobility::{build_provider, parse_fcd, MobilityError, MobilityMode, MobilityProvider, MobilitySpec};
use crate::protocols::{CloudModel, DfcvParams, FloodParams, HybridParams, ProtocolKind};
use crate::radio::{ObstacleMap, RadioParams, Rect};
use crate::world::{RunParams, Workload};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{key}: {message}")]
    Parse { key: String, message: String },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

impl ConfigError {
    /// Dotted path of the offending key; empty for document-level errors.
    pub fn key(&self) -> &str {
        match self {
            ConfigError::Io { .. } => "",
            ConfigError::Parse { key, .. } | ConfigError::Invalid { key, .. } => key,
        }
    }

    fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CityBlocks {
    /// Gap between neighbouring buildings, metres.
    pub street_width: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObstacleSpec {
    /// Text file of `x_min y_min x_max y_max` lines.
    pub file: Option<PathBuf>,
    pub rects: Vec<Rect>,
    /// Fill every grid block with a building, leaving streets clear.
    pub city_blocks: Option<CityBlocks>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineSpec {
    pub event_budget: u64,
    pub mobility_tick_ms: u64,
}

impl Default for EngineSpec {
    fn default() -> Self {
        EngineSpec {
            event_budget: DEFAULT_EVENT_BUDGET,
            mobility_tick_ms: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub mobility: MobilitySpec,
    pub radio: RadioParams,
    pub obstacles: ObstacleSpec,
    pub infrastructure: InfraSpec,
    pub protocols: Vec<ProtocolKind>,
    /// Vehicle counts to sweep; each overrides `mobility.vehicle_count`.
    pub densities: Vec<u32>,
    pub seeds: Vec<u64>,
    /// seconds
    pub sim_duration: f64,
    pub workload: Workload,
    pub flood: FloodParams,
    pub hybrid: HybridParams,
    pub dfcv: DfcvParams,
    pub cloud: CloudModel,
    pub engine: EngineSpec,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            mobility: MobilitySpec::default(),
            radio: RadioParams::default(),
            obstacles: ObstacleSpec::default(),
            infrastructure: InfraSpec::default(),
            protocols: ProtocolKind::ALL.to_vec(),
            densities: vec![50, 150, 250, 350, 450],
            seeds: vec![1],
            sim_duration: 60.0,
            workload: Workload::default(),
            flood: FloodParams::default(),
            hybrid: HybridParams::default(),
            dfcv: DfcvParams::default(),
            cloud: CloudModel::default(),
            engine: EngineSpec::default(),
        }
    }
}

/// Reads, parses and validates a config file. Relative paths inside the
/// document resolve against the config file's directory.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut cfg = parse_config(&text)?;
    if let Some(dir) = path.parent() {
        cfg.resolve_paths(dir);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses a JSON document without touching the filesystem or validating.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let mut key = e.path().to_string();
        let message = e.inner().to_string();
        // Name the rejected key itself rather than its parent section.
        if let Some(rest) = message.strip_prefix("unknown field `") {
            if let Some(field) = rest.split('`').next() {
                if key == "." {
                    key = field.to_owned();
                } else if key != field && !key.ends_with(&format!(".{field}")) {
                    key = format!("{key}.{field}");
                }
            }
        }
        ConfigError::Parse { key, message }
    })?;
    Ok(cfg)
}

impl ScenarioConfig {
    /// Resolved config as pretty JSON; parsing it back yields an equal config.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !dir.as_os_str().is_empty() {
                *p = dir.join(&*p);
            }
        };
        if let Some(p) = self.mobility.trace_path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.obstacles.file.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if let Err((field, msg)) = self.radio.validate() {
            return Err(ConfigError::invalid(format!("radio.{field}"), msg));
        }
        let m = &self.mobility;
        if !positive(m.road_length) {
            return Err(ConfigError::invalid("mobility.road_length", format!("must be > 0, got {}", m.road_length)));
        }
        if m.lanes == 0 {
            return Err(ConfigError::invalid("mobility.lanes", "must be at least 1"));
        }
        let [lo, hi] = m.speed_range;
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
            return Err(ConfigError::invalid("mobility.speed_range", format!("need 0 <= min <= max, got [{lo}, {hi}]")));
        }
        if !(0.0..=1.0).contains(&m.gateway_fraction) {
            return Err(ConfigError::invalid("mobility.gateway_fraction", format!("must lie in [0, 1], got {}", m.gateway_fraction)));
        }
        if m.grid.blocks == 0 {
            return Err(ConfigError::invalid("mobility.grid.blocks", "must be at least 1"));
        }
        if !positive(m.grid.block_size) {
            return Err(ConfigError::invalid("mobility.grid.block_size", format!("must be > 0, got {}", m.grid.block_size)));
        }
        let infra = &self.infrastructure;
        if !positive(infra.bs_spacing) {
            return Err(ConfigError::invalid("infrastructure.bs_spacing", format!("must be > 0, got {}", infra.bs_spacing)));
        }
        if !positive(infra.bs_coverage) {
            return Err(ConfigError::invalid("infrastructure.bs_coverage", format!("must be > 0, got {}", infra.bs_coverage)));
        }
        if !(infra.roadside_offset.is_finite() && infra.roadside_offset >= 0.0) {
            return Err(ConfigError::invalid("infrastructure.roadside_offset", "must be >= 0"));
        }
        if self.protocols.is_empty() {
            return Err(ConfigError::invalid("protocols", "must list at least one protocol"));
        }
        if self.densities.is_empty() {
            return Err(ConfigError::invalid("densities", "must not be empty"));
        }
        if let Some(i) = self.densities.iter().position(|&d| !(1..=10_000).contains(&d)) {
            return Err(ConfigError::invalid(format!("densities[{i}]"), format!("must lie in [1, 10000], got {}", self.densities[i])));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::invalid("seeds", "must not be empty"));
        }
        if !positive(self.sim_duration) {
            return Err(ConfigError::invalid("sim_duration", format!("must be > 0, got {}", self.sim_duration)));
        }
        let w = &self.workload;
        if !(w.event_rate.is_finite() && w.event_rate >= 0.0) {
            return Err(ConfigError::invalid("workload.event_rate", format!("must be >= 0, got {}", w.event_rate)));
        }
        if w.beacons && w.beacon_interval_ms == 0 {
            return Err(ConfigError::invalid("workload.beacon_interval_ms", "must be > 0 when beacons are on"));
        }
        if self.flood.ttl == 0 {
            return Err(ConfigError::invalid("flood.ttl", "must be at least 1"));
        }
        if !(self.hybrid.window_s.is_finite() && self.hybrid.window_s >= 0.0) {
            return Err(ConfigError::invalid("hybrid.window_s", format!("must be >= 0, got {}", self.hybrid.window_s)));
        }
        if !positive(self.hybrid.gateway_bandwidth_bps) {
            return Err(ConfigError::invalid("hybrid.gateway_bandwidth_bps", "must be > 0"));
        }
        if self.hybrid.k_max == Some(0) {
            return Err(ConfigError::invalid("hybrid.k_max", "must be at least 1 when set"));
        }
        if self.dfcv.th_cap < 2 {
            return Err(ConfigError::invalid("dfcv.th_cap", format!("must be at least 2, got {}", self.dfcv.th_cap)));
        }
        if !positive(self.dfcv.d_min) {
            return Err(ConfigError::invalid("dfcv.d_min", format!("must be > 0, got {}", self.dfcv.d_min)));
        }
        if self.dfcv.maintenance_interval_ms == 0 {
            return Err(ConfigError::invalid("dfcv.maintenance_interval_ms", "must be > 0"));
        }
        if self.engine.event_budget == 0 {
            return Err(ConfigError::invalid("engine.event_budget", "must be > 0"));
        }
        if self.engine.mobility_tick_ms == 0 {
            return Err(ConfigError::invalid("engine.mobility_tick_ms", "must be > 0"));
        }
        for (i, r) in self.obstacles.rects.iter().enumerate() {
            if !r.is_valid() {
                return Err(ConfigError::invalid(format!("obstacles.rects[{i}]"), "needs finite corners with x_min < x_max and y_min < y_max"));
            }
        }
        if let Some(cb) = self.obstacles.city_blocks {
            if !(cb.street_width.is_finite() && cb.street_width >= 0.0 && cb.street_width < m.grid.block_size) {
                return Err(ConfigError::invalid("obstacles.city_blocks.street_width", "must lie in [0, grid.block_size)"));
            }
        }
        if let Some(file) = &self.obstacles.file {
            ObstacleMap::load(file).map_err(|e| ConfigError::invalid("obstacles.file", e.to_string()))?;
        }
        match (m.mode, &m.trace_path) {
            (MobilityMode::Trace, None) => return Err(ConfigError::invalid("mobility.trace_path", "required in trace mode")),
            (MobilityMode::Trace, Some(path)) => {
                let samples = parse_fcd(path).map_err(|e| ConfigError::invalid("mobility.trace_path", format!("{}: {e}", path.display())))?;
                let mut names: Vec<&str> = samples.iter().map(|s| s.vehicle_id.as_str()).collect();
                names.sort_unstable();
                names.dedup();
                if let Some(i) = self.densities.iter().position(|&d| d as usize != names.len()) {
                    return Err(ConfigError::invalid(
                        format!("densities[{i}]"),
                        format!("trace has {} vehicles but density is {}", names.len(), self.densities[i]),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Obstacles from the file, the inline list and the block fill, combined.
    pub fn build_obstacles(&self) -> Result<ObstacleMap, ConfigError> {
        let mut rects = Vec::new();
        if let Some(file) = &self.obstacles.file {
            let m = ObstacleMap::load(file).map_err(|e| ConfigError::invalid("obstacles.file", e.to_string()))?;
            rects.extend_from_slice(m.rects());
        }
        rects.extend_from_slice(&self.obstacles.rects);
        if let Some(cb) = self.obstacles.city_blocks {
            rects.extend_from_slice(ObstacleMap::city_blocks(&self.mobility.grid, cb.street_width).rects());
        }
        Ok(ObstacleMap::new(rects))
    }

    pub fn run_params(&self, protocol: ProtocolKind, seed: u64) -> RunParams {
        RunParams {
            protocol,
            seed,
            radio: self.radio.clone(),
            infra: self.infrastructure,
            cloud: self.cloud,
            flood: self.flood,
            hybrid: self.hybrid,
            dfcv: self.dfcv,
            workload: self.workload.clone(),
            duration: SimTime::from_secs_f64(self.sim_duration),
            mobility_tick: SimTime::from_millis(self.engine.mobility_tick_ms),
            event_budget: self.engine.event_budget,
        }
    }

    /// Mobility and base stations for one density and seed. The same
    /// (density, seed) gives the same vehicles under every protocol.
    pub fn build_world(&self, density: u32, seed: u64) -> Result<(MobilityProvider, Vec<BaseStation>), MobilityError> {
        let spec = MobilitySpec {
            vehicle_count: density,
            ..self.mobility.clone()
        };
        let mut rng = RngStream::new(seed, "mobility");
        let mob = build_provider(&spec, &mut rng)?;
        let stations = place_base_stations(&spec, &self.infrastructure, mob.bounds());
        Ok((mob, stations))
    }
}

/// Shared obstacle map for a sweep.
pub fn shared_obstacles(cfg: &ScenarioConfig) -> Result<Arc<ObstacleMap>, ConfigError> {
    cfg.build_obstacles().map(Arc::new)
}
