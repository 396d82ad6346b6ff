//! Dissemination protocols: multi-hop flooding, the cloud-assisted
//! Hybrid-Vehcloud scheme and the fog-based DFCV scheme.
//!
//! The pure decision procedures (gateway selection, fog cell maintenance,
//! shadow classification) live here and in the submodules; the parts that
//! schedule radio frames are `impl World` blocks driven by the run loop.

pub mod dfcv;
pub mod flood;
pub mod hybrid;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::mobility::{Position, VehicleId};

pub use dfcv::{dfcv_distance, dfcv_maintain, dfcv_refresh, partition_holds, DfcvParams, FogCell, MaintainError, MaintainReport};
pub use flood::FloodParams;
pub use hybrid::{obstacle_shadowing, scan_trans_range, select_gateways, GatewayChoice, HybridParams, ShadowFlag};

pub type MsgId = u64;
pub type BsId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Baseline,
    HybridVehcloud,
    Dfcv,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] = [ProtocolKind::Baseline, ProtocolKind::HybridVehcloud, ProtocolKind::Dfcv];

    pub fn label(self) -> &'static str {
        match self {
            ProtocolKind::Baseline => "baseline",
            ProtocolKind::HybridVehcloud => "hybrid_vehcloud",
            ProtocolKind::Dfcv => "dfcv",
        }
    }

    pub fn parse(s: &str) -> Option<ProtocolKind> {
        ProtocolKind::ALL.into_iter().find(|p| p.label() == s)
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Beacon,
    EventDriven,
}

impl MessageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::Beacon => "beacon",
            MessageKind::EventDriven => "event_driven",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Targets {
    /// Every vehicle in the source's base-station region at injection time.
    AllInRegion,
    Explicit(Vec<VehicleId>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub id: MsgId,
    pub kind: MessageKind,
    pub src: VehicleId,
    pub origin_time: SimTime,
    /// bytes
    pub size: u32,
    pub targets: Targets,
    pub ttl_hops: u32,
}

/// A bus acting as a mobile gateway, as reported to the cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct GatewayInfo {
    pub gateway_id: VehicleId,
    pub pos: Position,
    pub access_delay: SimTime,
    /// bits/second
    pub bandwidth: f64,
}

/// Cloud tier latencies, microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CloudModel {
    pub uplink_latency_us: u64,
    pub downlink_latency_us: u64,
    pub processing_latency_us: u64,
}

impl Default for CloudModel {
    fn default() -> Self {
        CloudModel {
            uplink_latency_us: 50_000,
            downlink_latency_us: 50_000,
            processing_latency_us: 10_000,
        }
    }
}

impl CloudModel {
    pub fn uplink(&self) -> SimTime {
        SimTime::from_micros(self.uplink_latency_us)
    }

    pub fn downlink(&self) -> SimTime {
        SimTime::from_micros(self.downlink_latency_us)
    }

    pub fn processing(&self) -> SimTime {
        SimTime::from_micros(self.processing_latency_us)
    }
}
