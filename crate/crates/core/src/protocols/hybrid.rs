//! Hybrid-Vehcloud decision procedures: coverage scan, shadow
//! classification and greedy gateway selection.

use serde::{Deserialize, Serialize};

use super::{GatewayInfo, MsgId};
use crate::engine::SimTime;
use crate::mobility::{Position, VehicleId};
use crate::radio::{LossCause, ObstacleMap};
use crate::world::{Frame, InfraJob, Queue, Res, Then, World};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HybridParams {
    /// How long after origin late joiners are still served, seconds.
    pub window_s: f64,
    pub gateway_access_delay_us: u64,
    /// bits/second
    pub gateway_bandwidth_bps: f64,
    /// Cap on gateways selected per message; unlimited when absent.
    pub k_max: Option<u32>,
}

impl Default for HybridParams {
    fn default() -> Self {
        HybridParams {
            window_s: 5.0,
            gateway_access_delay_us: 1_000,
            gateway_bandwidth_bps: 2_000_000.0,
            k_max: None,
        }
    }
}

/// `value == 1` when the vehicle has no line of sight to its base station.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShadowFlag {
    pub vehicle_id: VehicleId,
    pub value: u8,
}

impl ShadowFlag {
    pub fn is_shadowed(&self) -> bool {
        self.value == 1
    }
}

/// Geometric classification against the base station at `bs`; nothing is probed.
pub fn obstacle_shadowing(vehicle_id: VehicleId, pos: Position, bs: Position, map: &ObstacleMap) -> ShadowFlag {
    ShadowFlag {
        vehicle_id,
        value: u8::from(!map.line_of_sight(pos, bs)),
    }
}

/// Vehicles within `coverage` of the base station at `bs`, excluding the
/// sender, in id order.
pub fn scan_trans_range(
    sender: VehicleId,
    bs: Position,
    coverage: f64,
    vehicles: impl IntoIterator<Item = (VehicleId, Position)>,
) -> Vec<VehicleId> {
    let mut out: Vec<VehicleId> = vehicles
        .into_iter()
        .filter(|&(v, p)| v != sender && p.distance_to(&bs) <= coverage)
        .map(|(v, _)| v)
        .collect();
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatewayChoice {
    pub gateway_id: VehicleId,
    /// Shadowed vehicles this gateway newly covers, in id order.
    pub covers: Vec<VehicleId>,
}

/// Greedy maximum coverage: repeatedly take the gateway that reaches (in
/// range and in line of sight) the most still-uncovered shadowed vehicles,
/// smaller id first on ties. Stops when everything is covered, no gateway
/// adds coverage, or `k_max` gateways are chosen.
pub fn select_gateways(
    shadowed: &[(VehicleId, Position)],
    gateways: &[GatewayInfo],
    k_max: Option<usize>,
    range: f64,
    map: &ObstacleMap,
) -> Vec<GatewayChoice> {
    let mut order: Vec<&GatewayInfo> = gateways.iter().collect();
    order.sort_by_key(|g| g.gateway_id);
    let reach: Vec<Vec<usize>> = order
        .iter()
        .map(|g| {
            shadowed
                .iter()
                .enumerate()
                .filter(|(_, (_, p))| g.pos.distance_to(p) <= range && map.line_of_sight(g.pos, *p))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();

    let mut covered = vec![false; shadowed.len()];
    let mut used = vec![false; order.len()];
    let mut picks = Vec::new();
    let limit = k_max.unwrap_or(usize::MAX);
    while picks.len() < limit {
        let mut best: Option<(usize, usize)> = None;
        for (gi, r) in reach.iter().enumerate() {
            if used[gi] {
                continue;
            }
            let gain = r.iter().filter(|&&i| !covered[i]).count();
            if gain > 0 && best.is_none_or(|(_, b)| gain > b) {
                best = Some((gi, gain));
            }
        }
        let Some((gi, _)) = best else { break };
        used[gi] = true;
        let mut covers: Vec<VehicleId> = reach[gi]
            .iter()
            .filter(|&&i| !covered[i])
            .map(|&i| shadowed[i].0)
            .collect();
        for &i in &reach[gi] {
            covered[i] = true;
        }
        covers.sort_unstable();
        picks.push(GatewayChoice {
            gateway_id: order[gi].gateway_id,
            covers,
        });
    }
    picks
}

impl World {
    pub(crate) fn hybrid_start(&mut self, q: &mut Queue, msg: MsgId) -> Res {
        let recipients: Vec<VehicleId> = self.msgs[msg as usize].pairs.iter().map(|p| p.dst).collect();
        if recipients.is_empty() {
            self.note(format_args!("no nearby vehicles in obstacle shadowing regions"));
        }
        if self.msgs[msg as usize].bs.is_some() && self.p.hybrid.window_s > 0.0 {
            self.open_windows.push(msg);
        }
        self.hybrid_dispatch(q, msg, recipients)
    }

    /// Routes `recipients` of `msg` from its source: line-of-sight vehicles
    /// through the base station, shadowed ones through the cloud and the
    /// mobile gateways.
    fn hybrid_dispatch(&mut self, q: &mut Queue, msg: MsgId, recipients: Vec<VehicleId>) -> Res {
        if recipients.is_empty() {
            return Ok(());
        }
        let now = q.now();
        let (src, size) = {
            let m = &self.msgs[msg as usize];
            (m.src, m.size)
        };
        let Some(bs) = self.msgs[msg as usize].bs else {
            self.fail(msg, &recipients, LossCause::OutOfRange);
            return Ok(());
        };
        let bs_pos = self.stations[bs as usize].pos;
        let mut direct = Vec::new();
        let mut shadowed = Vec::new();
        for v in recipients {
            if obstacle_shadowing(v, self.mob.pos(v, now), bs_pos, &self.obstacles).is_shadowed() {
                shadowed.push(v);
            } else {
                direct.push(v);
            }
        }
        self.note(format_args!("direct={} shadowed={}", direct.len(), shadowed.len()));
        let src_pos = self.mob.pos(src, now);
        let bs_node = self.bs_node(bs);
        if src_pos.distance_to(&bs_pos) <= self.p.infra.bs_coverage && self.obstacles.line_of_sight(src_pos, bs_pos) {
            let frame = Frame::unicast(msg, bs_node, 1, shadowed, direct, Then::Cloud { direct: false }, size);
            return self.enqueue(q, src, frame, now);
        }
        // The source cannot reach its base station: everything goes up through a gateway.
        if self.mob.is_gateway(src) {
            let at = now + SimTime::from_micros(self.p.hybrid.gateway_access_delay_us) + self.p.cloud.uplink() + self.p.cloud.processing();
            return self.schedule_infra(q, at, InfraJob::CloudSelect { msg, shadowed, direct, hops: 1 });
        }
        let mut best: Option<(f64, VehicleId)> = None;
        for &g in &self.gateways {
            let gp = self.mob.pos(g, now);
            let d = gp.distance_to(&src_pos);
            if g != src && d <= self.p.radio.range && self.obstacles.line_of_sight(src_pos, gp) && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, g));
            }
        }
        match best {
            Some((_, g)) => {
                let frame = Frame::unicast(msg, g, 1, shadowed, direct, Then::Cloud { direct: true }, size);
                self.enqueue(q, src, frame, now)
            }
            None => {
                self.note(format_args!("no uplink from {src}"));
                self.fail(msg, &shadowed, LossCause::Shadowed);
                self.fail(msg, &direct, LossCause::Shadowed);
                Ok(())
            }
        }
    }

    /// Serves vehicles that entered the source's region after injection,
    /// while the message's window is open.
    pub(crate) fn hybrid_newcomers(&mut self, q: &mut Queue) -> Res {
        let now = q.now();
        let window = SimTime::from_secs_f64(self.p.hybrid.window_s);
        let open = std::mem::take(&mut self.open_windows);
        let mut keep = Vec::with_capacity(open.len());
        for msg in open {
            let (origin, bs) = {
                let m = &self.msgs[msg as usize];
                (m.origin, m.bs)
            };
            if origin + window < now {
                continue;
            }
            keep.push(msg);
            let Some(bs) = bs else { continue };
            let center = self.stations[bs as usize].pos;
            let near = self.vehicles_near(center, self.p.infra.bs_coverage, now);
            let joined: Vec<VehicleId> = near.into_iter().map(|(v, _)| v).filter(|&v| self.add_target(msg, v, now)).collect();
            if !joined.is_empty() {
                self.hybrid_dispatch(q, msg, joined)?;
            }
        }
        self.open_windows = keep;
        Ok(())
    }

    pub(crate) fn hybrid_cloud_select(
        &mut self,
        q: &mut Queue,
        msg: MsgId,
        shadowed: Vec<VehicleId>,
        direct: Vec<VehicleId>,
        hops: u32,
    ) -> Res {
        let now = q.now();
        self.note(format_args!("cloud msg={msg} shadowed={} direct={}", shadowed.len(), direct.len()));
        if !direct.is_empty() {
            match self.msgs[msg as usize].bs {
                Some(bs) => {
                    let at = now + self.p.cloud.downlink();
                    self.schedule_infra(q, at, InfraJob::BsDown { msg, bs, recipients: direct, hops })?;
                }
                None => self.fail(msg, &direct, LossCause::OutOfRange),
            }
        }
        if shadowed.is_empty() {
            return Ok(());
        }
        let targets: Vec<(VehicleId, Position)> = shadowed.iter().map(|&v| (v, self.mob.pos(v, now))).collect();
        let access = SimTime::from_micros(self.p.hybrid.gateway_access_delay_us);
        let gws: Vec<GatewayInfo> = self
            .gateways
            .iter()
            .map(|&g| GatewayInfo {
                gateway_id: g,
                pos: self.mob.pos(g, now),
                access_delay: access,
                bandwidth: self.p.hybrid.gateway_bandwidth_bps,
            })
            .collect();
        let k_max = self.p.hybrid.k_max.map(|k| k as usize);
        let picks = select_gateways(&targets, &gws, k_max, self.p.radio.range, &self.obstacles);
        let mut covered: Vec<VehicleId> = Vec::new();
        for pick in picks {
            self.note(format_args!("gateway={} covers={}", pick.gateway_id, pick.covers.len()));
            covered.extend_from_slice(&pick.covers);
            let at = now + self.p.cloud.downlink() + access;
            self.schedule_infra(
                q,
                at,
                InfraJob::GatewayDown {
                    msg,
                    gw: pick.gateway_id,
                    recipients: pick.covers,
                    hops,
                },
            )?;
        }
        covered.sort_unstable();
        let missed: Vec<VehicleId> = shadowed.into_iter().filter(|v| covered.binary_search(v).is_err()).collect();
        self.fail(msg, &missed, LossCause::Shadowed);
        Ok(())
    }

    pub(crate) fn hybrid_gateway_down(
        &mut self,
        q: &mut Queue,
        msg: MsgId,
        gw: VehicleId,
        mut recipients: Vec<VehicleId>,
        hops: u32,
    ) -> Res {
        let now = q.now();
        self.receive(msg, gw, now, hops + 1);
        recipients.retain(|&v| v != gw);
        if recipients.is_empty() {
            return Ok(());
        }
        let size = self.msgs[msg as usize].size;
        self.enqueue(q, gw, Frame::cast(msg, hops + 2, recipients, size), now)
    }
}
