//! DFCV fog cells: membership refresh, split and merge.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use std::collections::BTreeMap;

use super::{BsId, MsgId};
use crate::mobility::{Position, VehicleId};
use crate::radio::LossCause;
use crate::world::{Frame, InfraJob, Queue, Res, Then, World};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DfcvParams {
    /// Maximum members per cell.
    pub th_cap: u32,
    /// Maximum anchor-to-member spread, metres.
    pub d_min: f64,
    pub fog_processing_us: u64,
    pub maintenance_interval_ms: u64,
}

impl Default for DfcvParams {
    fn default() -> Self {
        DfcvParams {
            th_cap: 20,
            d_min: 300.0,
            fog_processing_us: 5_000,
            maintenance_interval_ms: 1_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FogCell {
    pub cell_id: u64,
    pub base_station_id: BsId,
    /// Sorted ascending, never empty.
    pub members: Vec<VehicleId>,
    pub threshold: u32,
    /// The first observer the cell is organised around.
    pub anchor: VehicleId,
}

impl FogCell {
    pub fn capacity(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, v: VehicleId) -> bool {
        self.members.binary_search(&v).is_ok()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("fog maintenance under base station {bs} did not settle within {cap} passes")]
pub struct MaintainError {
    pub bs: BsId,
    pub cap: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MaintainReport {
    pub splits: usize,
    pub merges: usize,
    pub passes: usize,
}

/// Largest distance from the anchor to any member.
pub fn dfcv_distance(cell: &FogCell, pos: &dyn Fn(VehicleId) -> Position) -> f64 {
    let a = pos(cell.anchor);
    cell.members.iter().map(|&m| a.distance_to(&pos(m))).fold(0.0, f64::max)
}

fn needs_split(cell: &FogCell, pos: &dyn Fn(VehicleId) -> Position, p: &DfcvParams) -> bool {
    cell.capacity() >= 2 && (dfcv_distance(cell, pos) > p.d_min || cell.capacity() > p.th_cap as usize)
}

/// Member nearest the centroid of `members`; ties go to the smaller id.
fn nearest_to_centroid(members: &[VehicleId], pos: &dyn Fn(VehicleId) -> Position) -> VehicleId {
    let n = members.len() as f64;
    let (sx, sy) = members.iter().fold((0.0, 0.0), |(x, y), &m| {
        let p = pos(m);
        (x + p.x, y + p.y)
    });
    let c = Position::new(sx / n, sy / n);
    let mut best = members[0];
    let mut best_d = f64::INFINITY;
    for &m in members {
        let d = pos(m).distance_to(&c);
        if d < best_d || (d == best_d && m < best) {
            best = m;
            best_d = d;
        }
    }
    best
}

/// Near half (rounded up) keeps the anchor; the far half gets a new anchor.
fn split(cell: &FogCell, pos: &dyn Fn(VehicleId) -> Position, next_id: &mut u64) -> (FogCell, FogCell) {
    let a = pos(cell.anchor);
    let mut order: Vec<(f64, VehicleId)> = cell
        .members
        .iter()
        .filter(|&&m| m != cell.anchor)
        .map(|&m| (a.distance_to(&pos(m)), m))
        .collect();
    order.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let near_len = cell.members.len().div_ceil(2);
    let mut near: Vec<VehicleId> = std::iter::once(cell.anchor)
        .chain(order[..near_len - 1].iter().map(|e| e.1))
        .collect();
    let mut far: Vec<VehicleId> = order[near_len - 1..].iter().map(|e| e.1).collect();
    near.sort_unstable();
    far.sort_unstable();
    let far_anchor = nearest_to_centroid(&far, pos);
    let id = *next_id;
    *next_id += 1;
    (
        FogCell {
            members: near,
            ..cell.clone()
        },
        FogCell {
            cell_id: id,
            base_station_id: cell.base_station_id,
            members: far,
            threshold: cell.threshold,
            anchor: far_anchor,
        },
    )
}

fn merged(a: &FogCell, b: &FogCell) -> FogCell {
    let mut members = Vec::with_capacity(a.members.len() + b.members.len());
    members.extend_from_slice(&a.members);
    members.extend_from_slice(&b.members);
    members.sort_unstable();
    FogCell {
        members,
        ..a.clone()
    }
}

/// Splits over-spread or over-full cells and merges small nearby ones
/// until nothing changes.
///
/// A pass splits every triggering cell once, then merges pairs in cell
/// order. Two cells merge when their combined size is below `th_cap`,
/// their anchors are closer than `d_min`, and the merged cell would not
/// itself need splitting. Fails if no fixed point is reached within
/// `2 * members + 2` passes.
pub fn dfcv_maintain(
    cells: &mut Vec<FogCell>,
    pos: &dyn Fn(VehicleId) -> Position,
    p: &DfcvParams,
    next_id: &mut u64,
) -> Result<MaintainReport, MaintainError> {
    let cap = 2 * cells.iter().map(FogCell::capacity).sum::<usize>() + 2;
    let mut report = MaintainReport::default();
    let bs = cells.first().map_or(0, |c| c.base_station_id);
    loop {
        let mut changed = false;

        let mut next = Vec::with_capacity(cells.len() + 1);
        for cell in cells.drain(..) {
            if needs_split(&cell, pos, p) {
                let (a, b) = split(&cell, pos, next_id);
                next.push(a);
                next.push(b);
                report.splits += 1;
                changed = true;
            } else {
                next.push(cell);
            }
        }
        *cells = next;

        let mut i = 0;
        while i < cells.len() {
            let mut j = i + 1;
            while j < cells.len() {
                let (a, b) = (&cells[i], &cells[j]);
                if a.capacity() + b.capacity() < p.th_cap as usize
                    && pos(a.anchor).distance_to(&pos(b.anchor)) < p.d_min
                {
                    let m = merged(a, b);
                    if !needs_split(&m, pos, p) {
                        cells[i] = m;
                        cells.remove(j);
                        report.merges += 1;
                        changed = true;
                        continue;
                    }
                }
                j += 1;
            }
            i += 1;
        }

        report.passes += 1;
        if !changed {
            return Ok(report);
        }
        if report.passes >= cap {
            return Err(MaintainError { bs, cap });
        }
    }
}

/// Brings cell membership in line with the vehicles currently associated
/// with `bs` (`present`, sorted), then runs [`dfcv_maintain`].
///
/// Departed vehicles leave their cells; a cell whose anchor left is
/// re-anchored at the member nearest its centroid. Newcomers join the
/// nearest anchor within `d_min` that still has room, or found a cell.
pub fn dfcv_refresh(
    cells: &mut Vec<FogCell>,
    bs: BsId,
    present: &[VehicleId],
    pos: &dyn Fn(VehicleId) -> Position,
    p: &DfcvParams,
    next_id: &mut u64,
) -> Result<MaintainReport, MaintainError> {
    let is_present = |v: &VehicleId| present.binary_search(v).is_ok();
    for cell in cells.iter_mut() {
        cell.members.retain(is_present);
        if !cell.members.is_empty() && !cell.contains(cell.anchor) {
            cell.anchor = nearest_to_centroid(&cell.members, pos);
        }
    }
    cells.retain(|c| !c.members.is_empty());

    for &v in present {
        if cells.iter().any(|c| c.contains(v)) {
            continue;
        }
        let here = pos(v);
        let mut best: Option<(f64, usize)> = None;
        for (i, c) in cells.iter().enumerate() {
            if c.capacity() >= p.th_cap as usize {
                continue;
            }
            let d = pos(c.anchor).distance_to(&here);
            if d <= p.d_min && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        match best {
            Some((_, i)) => {
                let m = &mut cells[i].members;
                let at = m.binary_search(&v).unwrap_err();
                m.insert(at, v);
            }
            None => {
                cells.push(FogCell {
                    cell_id: *next_id,
                    base_station_id: bs,
                    members: vec![v],
                    threshold: p.th_cap,
                    anchor: v,
                });
                *next_id += 1;
            }
        }
    }
    dfcv_maintain(cells, pos, p, next_id)
}

/// Cells are pairwise disjoint, nonempty, anchored inside themselves, and
/// their union is exactly `present`.
pub fn partition_holds(cells: &[FogCell], present: &[VehicleId]) -> bool {
    let mut all: Vec<VehicleId> = Vec::with_capacity(present.len());
    for c in cells {
        if c.members.is_empty() || !c.contains(c.anchor) {
            return false;
        }
        all.extend_from_slice(&c.members);
    }
    all.sort_unstable();
    all == present
}

impl World {
    pub(crate) fn dfcv_start(&mut self, q: &mut Queue, msg: MsgId) -> Res {
        let now = q.now();
        let (src, size, bs) = {
            let m = &self.msgs[msg as usize];
            (m.src, m.size, m.bs)
        };
        let recipients: Vec<VehicleId> = self.msgs[msg as usize].pairs.iter().map(|p| p.dst).collect();
        let Some(bs) = bs else {
            self.fail(msg, &recipients, LossCause::OutOfRange);
            return Ok(());
        };
        self.refresh_fog(bs, now)?;
        if recipients.is_empty() {
            return Ok(());
        }
        let node = self.bs_node(bs);
        let frame = Frame::unicast(msg, node, 1, recipients, Vec::new(), Then::Fog(bs), size);
        self.enqueue(q, src, frame, now)
    }

    /// The fog node at `bs` has processed `msg`. Local recipients get one
    /// broadcast per fog cell; recipients now under another base station
    /// are forwarded there through the cloud when `local` is set.
    pub(crate) fn dfcv_fog_done(
        &mut self,
        q: &mut Queue,
        msg: MsgId,
        bs: BsId,
        recipients: Vec<VehicleId>,
        hops: u32,
        local: bool,
    ) -> Res {
        let now = q.now();
        let mut here = Vec::new();
        let mut remote: BTreeMap<BsId, Vec<VehicleId>> = BTreeMap::new();
        let mut gone = Vec::new();
        for v in recipients {
            match self.associate_vehicle(v, now) {
                Some(b) if b == bs => here.push(v),
                Some(b) if local => remote.entry(b).or_default().push(v),
                _ => gone.push(v),
            }
        }
        self.fail(msg, &gone, LossCause::OutOfRange);
        let size = self.msgs[msg as usize].size;
        let node = self.bs_node(bs);
        let mut casts: Vec<Vec<VehicleId>> = Vec::new();
        let mut placed = vec![false; here.len()];
        for cell in &self.fog[bs as usize] {
            let mut group = Vec::new();
            for (i, &v) in here.iter().enumerate() {
                if !placed[i] && cell.contains(v) {
                    placed[i] = true;
                    group.push(v);
                }
            }
            if !group.is_empty() {
                casts.push(group);
            }
        }
        let leftover: Vec<VehicleId> = here.iter().zip(&placed).filter(|(_, &p)| !p).map(|(&v, _)| v).collect();
        if !leftover.is_empty() {
            casts.push(leftover);
        }
        self.note(format_args!("fog bs={bs} msg={msg} casts={} remote={}", casts.len(), remote.len()));
        for group in casts {
            self.enqueue(q, node, Frame::cast(msg, hops + 1, group, size), now)?;
        }
        let hop = self.p.cloud.uplink() + self.p.cloud.processing() + self.p.cloud.downlink();
        for (b, group) in remote {
            self.schedule_infra(q, now + hop, InfraJob::RemoteFog { msg, bs: b, recipients: group, hops: hops + 1 })?;
        }
        Ok(())
    }
}
