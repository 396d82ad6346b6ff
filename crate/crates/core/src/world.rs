//! One simulation run: the shared radio medium, per-node transmit queues,
//! message bookkeeping and the event handler that drives the protocols.
//!
//! Frames contend for the medium with a uniform random backoff and defer
//! while a transmitter within radio range is on air. Receptions are
//! resolved when a frame ends; every other transmission overlapping it in
//! time whose transmitter reaches the receiver counts as concurrent.

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::{self, EngineError, Event, EventKind, EventQueue, Handler, RngStream, RunStats, SimTime};
use crate::infra::{associate, BaseStation, InfraSpec};
use crate::metrics::{summarize, DeliveryRecord, MetricsSummary};
use crate::mobility::{MobilityProvider, Position, VehicleId};
use crate::protocols::{
    dfcv_refresh, partition_holds, BsId, CloudModel, DfcvParams, FloodParams, FogCell, HybridParams, MessageKind, MsgId,
    ProtocolKind,
};
use crate::radio::{frame_delay, loss_probability, HopOutcome, LossCause, ObstacleMap, RadioParams};

/// Vehicles are nodes `0..n`; base station `b` is node `n + b`.
pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRule {
    /// Vehicles within coverage of the source's base station.
    BaseStationRegion,
    /// Vehicles within V2V radio range of the source.
    RadioRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Workload {
    /// Poisson arrivals of messages per second, each from a uniformly random vehicle.
    pub event_rate: f64,
    pub kind: MessageKind,
    pub target_rule: TargetRule,
    /// Emit periodic beacons (they load the channel either way).
    pub beacons: bool,
    pub beacon_interval_ms: u64,
    /// Count beacon deliveries in the metrics.
    pub include_beacons: bool,
}

impl Default for Workload {
    fn default() -> Self {
        Workload {
            event_rate: 1.0,
            kind: MessageKind::EventDriven,
            target_rule: TargetRule::BaseStationRegion,
            beacons: true,
            beacon_interval_ms: 100,
            include_beacons: false,
        }
    }
}

/// Everything a single run needs besides geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct RunParams {
    pub protocol: ProtocolKind,
    pub seed: u64,
    pub radio: RadioParams,
    pub infra: InfraSpec,
    pub cloud: CloudModel,
    pub flood: FloodParams,
    pub hybrid: HybridParams,
    pub dfcv: DfcvParams,
    pub workload: Workload,
    /// Messages are injected during `[0, duration)`.
    pub duration: SimTime,
    pub mobility_tick: SimTime,
    pub event_budget: u64,
}

impl RunParams {
    pub fn new(protocol: ProtocolKind, seed: u64) -> Self {
        RunParams {
            protocol,
            seed,
            radio: RadioParams::default(),
            infra: InfraSpec::default(),
            cloud: CloudModel::default(),
            flood: FloodParams::default(),
            hybrid: HybridParams::default(),
            dfcv: DfcvParams::default(),
            workload: Workload::default(),
            duration: SimTime::from_millis(60_000),
            mobility_tick: SimTime::from_millis(100),
            event_budget: engine::DEFAULT_EVENT_BUDGET,
        }
    }

    /// Time after the last injection during which in-flight work may finish.
    pub fn drain(&self) -> SimTime {
        SimTime::from_secs_f64(self.hybrid.window_s + 1.0)
            + self.cloud.uplink()
            + self.cloud.processing()
            + self.cloud.downlink()
            + SimTime::from_micros(self.dfcv.fog_processing_us + self.hybrid.gateway_access_delay_us)
    }

    pub fn end_time(&self) -> SimTime {
        self.duration + self.drain()
    }
}

/// A message injected at a fixed time instead of by the random workload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Injection {
    pub at: SimTime,
    pub src: VehicleId,
    /// `None` applies the workload target rule.
    pub targets: Option<Vec<VehicleId>>,
    pub ttl: Option<u32>,
}

/// Counters from the fog maintenance audit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FogAudit {
    pub maintain_calls: u64,
    pub partition_violations: u64,
    pub max_passes: usize,
    pub splits: u64,
    pub merges: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub protocol: ProtocolKind,
    pub seed: u64,
    pub vehicle_count: u32,
    pub records: Vec<DeliveryRecord>,
    pub stats: RunStats,
    pub audit: FogAudit,
    pub window_s: f64,
    pub frames_sent: u64,
}

impl RunOutput {
    pub fn summary(&self) -> MetricsSummary {
        summarize(self.protocol, self.vehicle_count, self.seed, &self.records, self.window_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Then {
    /// Receiver hands `recipients` to the cloud. With `direct` set the
    /// cloud also serves the `direct` list through the base station;
    /// otherwise the receiving base station broadcasts to it right away.
    Cloud { direct: bool },
    /// Base station's fog node processes and disseminates.
    Fog(BsId),
}

#[derive(Debug, Clone)]
pub(crate) enum Body {
    /// Channel load only.
    Beacon,
    Flood {
        msg: MsgId,
        hops: u32,
    },
    Unicast {
        msg: MsgId,
        dst: NodeId,
        hops: u32,
        recipients: Vec<VehicleId>,
        /// Recipients to serve through the base station after a cloud hop.
        direct: Vec<VehicleId>,
        then: Then,
    },
    /// Broadcast addressed to `recipients`; others ignore it.
    Cast {
        msg: MsgId,
        hops: u32,
        recipients: Vec<VehicleId>,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Frame {
    pub size: u32,
    pub body: Body,
    pub attempt: u32,
}

#[derive(Debug, Clone)]
pub(crate) struct InFlight {
    node: NodeId,
    tx_id: u64,
    start: SimTime,
    pos: Position,
    frame: Frame,
}

#[derive(Debug, Clone)]
pub(crate) enum InfraJob {
    /// Cloud has the message: pick gateways for the shadowed set and push
    /// the direct set through the base station.
    CloudSelect {
        msg: MsgId,
        shadowed: Vec<VehicleId>,
        direct: Vec<VehicleId>,
        hops: u32,
    },
    GatewayDown {
        msg: MsgId,
        gw: VehicleId,
        recipients: Vec<VehicleId>,
        hops: u32,
    },
    BsDown {
        msg: MsgId,
        bs: BsId,
        recipients: Vec<VehicleId>,
        hops: u32,
    },
    FogDone {
        msg: MsgId,
        bs: BsId,
        recipients: Vec<VehicleId>,
        hops: u32,
    },
    RemoteFog {
        msg: MsgId,
        bs: BsId,
        recipients: Vec<VehicleId>,
        hops: u32,
    },
}

#[derive(Debug, Clone)]
pub(crate) enum Payload {
    Tick,
    Beacon(VehicleId),
    /// Scripted injection index, or the random workload.
    Inject(Option<usize>),
    Access(NodeId),
    /// Route setup finished; the frame joins the node's queue.
    Setup(NodeId, Box<Frame>),
    FrameEnd(Box<InFlight>),
    Maintenance,
    Infra(Box<InfraJob>),
    End,
}

#[derive(Debug, Clone, Copy)]
struct Tx {
    id: u64,
    node: NodeId,
    pos: Position,
    start: SimTime,
    end: SimTime,
}

#[derive(Debug, Default)]
struct NodeState {
    queue: VecDeque<Frame>,
    /// Contending for or occupying the medium.
    active: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct Pair {
    pub dst: VehicleId,
    pub sent: SimTime,
    pub recv: Option<(SimTime, u32)>,
    pub cause: Option<LossCause>,
}

#[derive(Debug, Clone)]
pub(crate) struct MsgState {
    pub id: MsgId,
    pub kind: MessageKind,
    pub src: VehicleId,
    pub origin: SimTime,
    pub size: u32,
    pub ttl: u32,
    pub bs: Option<BsId>,
    /// Sorted by `dst`.
    pub pairs: Vec<Pair>,
    /// Vehicles that have the message; empty when the protocol does not need it.
    pub holders: Vec<bool>,
}

impl MsgState {
    pub fn holds(&self, v: VehicleId) -> bool {
        self.holders.get(v as usize).copied().unwrap_or(false)
    }

    pub fn pair_index(&self, v: VehicleId) -> Option<usize> {
        self.pairs.binary_search_by_key(&v, |p| p.dst).ok()
    }
}

/// Uniform bucket grid over vehicle positions, rebuilt every mobility tick.
/// A vehicle is filed under its cells at both ends of the tick interval,
/// so queries stay exact even across a road wrap.
#[derive(Debug)]
struct VehicleIndex {
    origin: Position,
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<VehicleId>>,
    built_at: SimTime,
    max_speed: f64,
}

impl VehicleIndex {
    fn new(bounds: (Position, Position), cell: f64, max_speed: f64) -> Self {
        let (lo, hi) = bounds;
        let cols = (((hi.x - lo.x) / cell).floor() as usize + 1).clamp(1, 2048);
        let rows = (((hi.y - lo.y) / cell).floor() as usize + 1).clamp(1, 2048);
        VehicleIndex {
            origin: lo,
            cell,
            cols,
            rows,
            buckets: vec![Vec::new(); cols * rows],
            built_at: SimTime::ZERO,
            max_speed,
        }
    }

    fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let c = ((x - self.origin.x) / self.cell).floor().clamp(0.0, (self.cols - 1) as f64) as usize;
        let r = ((y - self.origin.y) / self.cell).floor().clamp(0.0, (self.rows - 1) as f64) as usize;
        (c, r)
    }

    fn rebuild(&mut self, mob: &MobilityProvider, t: SimTime, horizon: SimTime) {
        for b in &mut self.buckets {
            b.clear();
        }
        for v in 0..mob.vehicle_count() as VehicleId {
            let a = mob.pos(v, t);
            let b = mob.pos(v, t + horizon);
            let ca = self.cell_of(a.x, a.y);
            let cb = self.cell_of(b.x, b.y);
            self.buckets[ca.1 * self.cols + ca.0].push(v);
            if cb != ca {
                self.buckets[cb.1 * self.cols + cb.0].push(v);
            }
        }
        self.built_at = t;
    }

    /// Vehicles within `radius` of `center` at `t`, in id order, with positions.
    fn query(&self, mob: &MobilityProvider, center: Position, radius: f64, t: SimTime, out: &mut Vec<(VehicleId, Position)>) {
        out.clear();
        let margin = self.max_speed * t.saturating_sub(self.built_at).as_secs_f64() + 1e-6;
        let r = radius + margin;
        let (c0, r0) = self.cell_of(center.x - r, center.y - r);
        let (c1, r1) = self.cell_of(center.x + r, center.y + r);
        let mut ids: Vec<VehicleId> = Vec::new();
        for row in r0..=r1 {
            for col in c0..=c1 {
                ids.extend_from_slice(&self.buckets[row * self.cols + col]);
            }
        }
        ids.sort_unstable();
        ids.dedup();
        for v in ids {
            let p = mob.pos(v, t);
            if p.distance_to(&center) <= radius {
                out.push((v, p));
            }
        }
    }
}

pub(crate) struct World {
    pub(crate) p: RunParams,
    pub(crate) mob: MobilityProvider,
    pub(crate) obstacles: Arc<ObstacleMap>,
    pub(crate) stations: Vec<BaseStation>,
    pub(crate) gateways: Vec<VehicleId>,
    n: usize,
    index: VehicleIndex,
    nodes: Vec<NodeState>,
    recent: VecDeque<Tx>,
    max_air: SimTime,
    next_tx: u64,
    rng_backoff: RngStream,
    rng_loss: RngStream,
    rng_work: RngStream,
    pub(crate) msgs: Vec<MsgState>,
    /// Hybrid messages still accepting late joiners.
    pub(crate) open_windows: Vec<MsgId>,
    pub(crate) fog: Vec<Vec<FogCell>>,
    pub(crate) next_cell: u64,
    pub(crate) audit: FogAudit,
    script: Vec<Injection>,
    records: Vec<DeliveryRecord>,
    frames_sent: u64,
    finished: bool,
    logging: bool,
    line: String,
    scratch: Vec<(VehicleId, Position)>,
}

/// Runs one scenario to completion.
pub fn simulate(
    params: RunParams,
    mobility: MobilityProvider,
    stations: Vec<BaseStation>,
    obstacles: Arc<ObstacleMap>,
    script: Vec<Injection>,
    log: Option<&mut dyn Write>,
) -> Result<RunOutput, EngineError> {
    World::new(params, mobility, stations, obstacles, script).run(log)
}

pub(crate) type Queue = EventQueue<Payload>;
pub(crate) type Res = Result<(), String>;

fn sched(q: &mut Queue, at: SimTime, kind: EventKind, payload: Payload) -> Res {
    q.schedule(at, kind, payload).map(|_| ()).map_err(|e| e.to_string())
}

impl World {
    pub fn new(
        p: RunParams,
        mob: MobilityProvider,
        stations: Vec<BaseStation>,
        obstacles: Arc<ObstacleMap>,
        script: Vec<Injection>,
    ) -> World {
        let n = mob.vehicle_count();
        let (lo, hi) = mob.bounds();
        let index = VehicleIndex::new(
            (lo, hi),
            p.radio.range.max(50.0),
            mob.max_speed(),
        );
        let max_air = p.radio.airtime(p.radio.msg_size);
        let gateways = mob.gateway_ids();
        let nodes = (0..n + stations.len()).map(|_| NodeState::default()).collect();
        let fog = vec![Vec::new(); stations.len()];
        World {
            rng_backoff: RngStream::new(p.seed, "mac-backoff"),
            rng_loss: RngStream::new(p.seed, "radio-loss"),
            rng_work: RngStream::new(p.seed, "workload"),
            p,
            mob,
            obstacles,
            stations,
            gateways,
            n,
            index,
            nodes,
            recent: VecDeque::new(),
            max_air,
            next_tx: 0,
            msgs: Vec::new(),
            open_windows: Vec::new(),
            fog,
            next_cell: 0,
            audit: FogAudit::default(),
            script,
            records: Vec::new(),
            frames_sent: 0,
            finished: false,
            logging: false,
            line: String::new(),
            scratch: Vec::new(),
        }
    }

    /// Runs to completion and returns the delivery records.
    pub fn run(mut self, log: Option<&mut dyn Write>) -> Result<RunOutput, EngineError> {
        let mut q: Queue = EventQueue::new();
        let end = self.p.end_time();
        self.bootstrap(&mut q, end).map_err(|message| EngineError::Handler {
            clock: SimTime::ZERO,
            message,
        })?;
        let budget = self.p.event_budget;
        let stats = engine::run(&mut q, &mut self, end, budget, log)?;
        if !self.finished {
            self.finish();
        }
        Ok(RunOutput {
            protocol: self.p.protocol,
            seed: self.p.seed,
            vehicle_count: self.n as u32,
            records: self.records,
            stats,
            audit: self.audit,
            window_s: self.p.duration.as_secs_f64(),
            frames_sent: self.frames_sent,
        })
    }

    fn bootstrap(&mut self, q: &mut Queue, end: SimTime) -> Res {
        sched(q, SimTime::ZERO, EventKind::MobilityTick, Payload::Tick)?;
        if self.p.protocol == ProtocolKind::Dfcv && !self.stations.is_empty() {
            sched(q, SimTime::ZERO, EventKind::FogMaintenance, Payload::Maintenance)?;
        }
        if self.p.workload.beacons && self.p.workload.beacon_interval_ms > 0 {
            let mut rng = RngStream::new(self.p.seed, "beacon");
            let period = self.p.workload.beacon_interval_ms * 1000;
            for v in 0..self.n as VehicleId {
                let phase = rng.draw_index(period as usize) as u64;
                sched(q, SimTime::from_micros(phase), EventKind::BeaconEmit, Payload::Beacon(v))?;
            }
        }
        if self.script.is_empty() {
            if self.p.workload.event_rate > 0.0 && self.n > 0 {
                let first = self.next_arrival(SimTime::ZERO);
                if first < self.p.duration {
                    sched(q, first, EventKind::MessageInject, Payload::Inject(None))?;
                }
            }
        } else {
            for (i, inj) in self.script.iter().enumerate() {
                sched(q, inj.at, EventKind::MessageInject, Payload::Inject(Some(i)))?;
            }
        }
        sched(q, end, EventKind::SimEnd, Payload::End)
    }

    fn next_arrival(&mut self, now: SimTime) -> SimTime {
        let u = self.rng_work.draw();
        now + SimTime::from_secs_f64(-(1.0 - u).ln() / self.p.workload.event_rate)
    }

    pub(crate) fn note(&mut self, args: fmt::Arguments<'_>) {
        if self.logging {
            use fmt::Write as _;
            if !self.line.is_empty() {
                self.line.push(' ');
            }
            let _ = self.line.write_fmt(args);
        }
    }

    pub(crate) fn bs_node(&self, bs: BsId) -> NodeId {
        (self.n as u32) + bs
    }

    fn is_bs(&self, node: NodeId) -> bool {
        node as usize >= self.n
    }

    pub(crate) fn node_pos(&self, node: NodeId, t: SimTime) -> Position {
        if self.is_bs(node) {
            self.stations[node as usize - self.n].pos
        } else {
            self.mob.pos(node, t)
        }
    }

    fn link_range(&self, a: NodeId, b: NodeId) -> f64 {
        if self.is_bs(a) || self.is_bs(b) {
            self.p.infra.bs_coverage
        } else {
            self.p.radio.range
        }
    }

    /// Vehicles within `radius` of `center` at `t`, id order.
    pub(crate) fn vehicles_near(&mut self, center: Position, radius: f64, t: SimTime) -> Vec<(VehicleId, Position)> {
        let mut out = std::mem::take(&mut self.scratch);
        self.index.query(&self.mob, center, radius, t, &mut out);
        let result = out.clone();
        self.scratch = out;
        result
    }

    pub(crate) fn associate_vehicle(&self, v: VehicleId, t: SimTime) -> Option<BsId> {
        associate(self.mob.pos(v, t), &self.stations, self.p.infra.bs_coverage)
    }

    /// Vehicles currently associated with `bs`, sorted.
    pub(crate) fn associated_with(&mut self, bs: BsId, t: SimTime) -> Vec<VehicleId> {
        let center = self.stations[bs as usize].pos;
        let near = self.vehicles_near(center, self.p.infra.bs_coverage, t);
        near.into_iter()
            .filter(|&(_, p)| associate(p, &self.stations, self.p.infra.bs_coverage) == Some(bs))
            .map(|(v, _)| v)
            .collect()
    }

    fn backoff(&mut self) -> SimTime {
        let max = self.p.radio.max_backoff_us;
        if max == 0 {
            SimTime::ZERO
        } else {
            SimTime::from_micros(self.rng_backoff.draw_index(max as usize + 1) as u64)
        }
    }

    /// Queues a frame at `node`; contention starts at `ready` if the node is idle.
    pub(crate) fn enqueue(&mut self, q: &mut Queue, node: NodeId, frame: Frame, ready: SimTime) -> Res {
        let st = &mut self.nodes[node as usize];
        st.queue.push_back(frame);
        if !st.active {
            st.active = true;
            let b = self.backoff();
            sched(q, ready + b, EventKind::ChannelAccess, Payload::Access(node))?;
        }
        Ok(())
    }

    /// Like [`World::enqueue`] but only after `delay`.
    pub(crate) fn enqueue_after(&mut self, q: &mut Queue, node: NodeId, frame: Frame, delay: SimTime) -> Res {
        if delay == SimTime::ZERO {
            let now = q.now();
            self.enqueue(q, node, frame, now)
        } else {
            sched(q, q.now() + delay, EventKind::ChannelAccess, Payload::Setup(node, Box::new(frame)))
        }
    }

    pub(crate) fn schedule_infra(&mut self, q: &mut Queue, at: SimTime, job: InfraJob) -> Res {
        sched(q, at, EventKind::CloudDeliver, Payload::Infra(Box::new(job)))
    }

    fn busy_until(&self, node: NodeId, pos: Position, now: SimTime) -> Option<SimTime> {
        if !self.p.radio.carrier_sense {
            return None;
        }
        self.recent
            .iter()
            .filter(|t| t.node != node && t.start <= now && t.end > now && t.pos.distance_to(&pos) <= self.p.radio.range)
            .map(|t| t.end)
            .max()
    }

    fn on_access(&mut self, q: &mut Queue, node: NodeId) -> Res {
        let now = q.now();
        while let Some(front) = self.recent.front() {
            if front.start + self.max_air + self.max_air < now {
                self.recent.pop_front();
            } else {
                break;
            }
        }
        let pos = self.node_pos(node, now);
        if let Some(until) = self.busy_until(node, pos, now) {
            let b = self.backoff();
            self.note(format_args!("node={node} defer_until={}", until + b));
            return sched(q, until + b, EventKind::ChannelAccess, Payload::Access(node));
        }
        let Some(frame) = self.nodes[node as usize].queue.pop_front() else {
            self.nodes[node as usize].active = false;
            return Ok(());
        };
        let air = self.p.radio.airtime(frame.size);
        if air > self.max_air {
            self.max_air = air;
        }
        let tx_id = self.next_tx;
        self.next_tx += 1;
        self.frames_sent += 1;
        self.recent.push_back(Tx {
            id: tx_id,
            node,
            pos,
            start: now,
            end: now + air,
        });
        self.note(format_args!("node={node} tx={tx_id} until={}", now + air));
        sched(
            q,
            now + air,
            EventKind::RadioDeliver,
            Payload::FrameEnd(Box::new(InFlight {
                node,
                tx_id,
                start: now,
                pos,
                frame,
            })),
        )
    }

    /// Resolves one reception at the end of a frame.
    fn hear(&mut self, overlapping: &[Tx], f: &InFlight, rx: NodeId, rx_pos: Position) -> HopOutcome {
        let range = self.link_range(f.node, rx);
        let d = f.pos.distance_to(&rx_pos);
        if d > range {
            return HopOutcome::Lost(LossCause::OutOfRange);
        }
        if !self.obstacles.line_of_sight(f.pos, rx_pos) {
            return HopOutcome::Lost(LossCause::Shadowed);
        }
        let concurrent = overlapping
            .iter()
            .filter(|g| g.node != rx && g.pos.distance_to(&rx_pos) <= self.link_range(g.node, rx))
            .count() as u32;
        if self.rng_loss.draw() < loss_probability(&self.p.radio, concurrent) {
            return HopOutcome::Lost(LossCause::ChannelLoss);
        }
        HopOutcome::Delivered {
            delay: frame_delay(&self.p.radio, f.frame.size, d, SimTime::ZERO),
        }
    }

    fn on_frame_end(&mut self, q: &mut Queue, f: InFlight) -> Res {
        let now = q.now();
        let overlapping: Vec<Tx> = self
            .recent
            .iter()
            .filter(|g| g.id != f.tx_id && g.start < now && g.end > f.start)
            .copied()
            .collect();
        let node = f.node;
        let mut retry: Option<Frame> = None;
        match &f.frame.body {
            Body::Beacon => self.note(format_args!("beacon node={node}")),
            Body::Flood { msg, hops } => {
                let (msg, hops) = (*msg, *hops);
                self.note(format_args!("flood node={node} msg={msg} hops={hops}"));
                let near = self.vehicles_near(f.pos, self.p.radio.range, now);
                for (v, pos) in near {
                    if v == node {
                        continue;
                    }
                    match self.hear(&overlapping, &f, v, pos) {
                        HopOutcome::Delivered { delay } => {
                            let first = self.receive(msg, v, f.start + delay, hops);
                            if first && hops < self.msgs[msg as usize].ttl {
                                self.flood_relay(q, msg, v, hops + 1, f.start + delay)?;
                            }
                        }
                        HopOutcome::Lost(cause) => {
                            self.note(format_args!("lost={v}:{cause}"));
                            self.fail(msg, &[v], cause);
                        }
                    }
                }
            }
            Body::Cast { msg, hops, recipients } => {
                let (msg, hops) = (*msg, *hops);
                self.note(format_args!("cast node={node} msg={msg} hops={hops}"));
                for &v in recipients.clone().iter() {
                    if v == node {
                        continue;
                    }
                    let pos = self.mob.pos(v, now);
                    match self.hear(&overlapping, &f, v, pos) {
                        HopOutcome::Delivered { delay } => {
                            self.receive(msg, v, f.start + delay, hops);
                        }
                        HopOutcome::Lost(cause) => {
                            self.note(format_args!("lost={v}:{cause}"));
                            self.fail(msg, &[v], cause);
                        }
                    }
                }
            }
            Body::Unicast {
                msg,
                dst,
                hops,
                recipients,
                direct,
                then,
            } => {
                let (msg, dst, hops, then) = (*msg, *dst, *hops, *then);
                self.note(format_args!("unicast node={node} dst={dst} msg={msg} attempt={}", f.frame.attempt));
                let pos = self.node_pos(dst, now);
                match self.hear(&overlapping, &f, dst, pos) {
                    HopOutcome::Delivered { delay } => {
                        let at = f.start + delay;
                        if !self.is_bs(dst) {
                            self.receive(msg, dst, at, hops);
                        }
                        let (recipients, direct) = (recipients.clone(), direct.clone());
                        self.forward(q, msg, dst, at, hops, recipients, direct, then)?;
                    }
                    HopOutcome::Lost(cause) => {
                        if f.frame.attempt < self.p.radio.unicast_retries {
                            self.note(format_args!("retry={dst}:{cause}"));
                            let mut again = f.frame.clone();
                            again.attempt += 1;
                            retry = Some(again);
                        } else {
                            self.note(format_args!("lost={dst}:{cause}"));
                            let all: Vec<VehicleId> = recipients.iter().chain(direct.iter()).copied().collect();
                            self.fail(msg, &all, cause);
                        }
                    }
                }
            }
        }
        let st = &mut self.nodes[node as usize];
        if let Some(fr) = retry {
            st.queue.push_front(fr);
        }
        if st.queue.is_empty() {
            st.active = false;
            Ok(())
        } else {
            let b = self.backoff();
            sched(q, now + b, EventKind::ChannelAccess, Payload::Access(node))
        }
    }

    /// Continues a unicast leg that reached `at_node`.
    #[allow(clippy::too_many_arguments)]
    fn forward(
        &mut self,
        q: &mut Queue,
        msg: MsgId,
        at_node: NodeId,
        at: SimTime,
        hops: u32,
        recipients: Vec<VehicleId>,
        direct: Vec<VehicleId>,
        then: Then,
    ) -> Res {
        match then {
            Then::Cloud { direct: via_cloud } => {
                let size = self.msgs[msg as usize].size;
                let mut direct = direct;
                if !via_cloud && !direct.is_empty() && self.is_bs(at_node) {
                    let cast = Frame::cast(msg, hops + 1, std::mem::take(&mut direct), size);
                    self.enqueue(q, at_node, cast, at.max(q.now()))?;
                }
                if recipients.is_empty() && direct.is_empty() {
                    return Ok(());
                }
                let mut arrive = at + self.p.cloud.uplink() + self.p.cloud.processing();
                if !self.is_bs(at_node) {
                    arrive = arrive + SimTime::from_micros(self.p.hybrid.gateway_access_delay_us);
                }
                self.schedule_infra(
                    q,
                    arrive.max(q.now()),
                    InfraJob::CloudSelect {
                        msg,
                        shadowed: recipients,
                        direct,
                        hops: hops + 1,
                    },
                )
            }
            Then::Fog(bs) => {
                let done = at + SimTime::from_micros(self.p.dfcv.fog_processing_us);
                self.schedule_infra(
                    q,
                    done.max(q.now()),
                    InfraJob::FogDone {
                        msg,
                        bs,
                        recipients,
                        hops,
                    },
                )
            }
        }
    }

    /// Records that `v` obtained `msg` at `at`. Returns true on first receipt.
    pub(crate) fn receive(&mut self, msg: MsgId, v: VehicleId, at: SimTime, hops: u32) -> bool {
        self.note(format_args!("rx={msg}:{v}@{at}#{hops}"));
        let m = &mut self.msgs[msg as usize];
        let first = if m.holders.is_empty() {
            true
        } else {
            let was = m.holders[v as usize];
            m.holders[v as usize] = true;
            !was
        };
        if let Some(i) = m.pair_index(v) {
            let pair = &mut m.pairs[i];
            if pair.recv.is_none() && at >= pair.sent {
                pair.recv = Some((at, hops));
            }
        }
        first
    }

    /// Notes a failed attempt toward each of `vs`; the most informative cause wins.
    pub(crate) fn fail(&mut self, msg: MsgId, vs: &[VehicleId], cause: LossCause) {
        let m = &mut self.msgs[msg as usize];
        for &v in vs {
            if let Some(i) = m.pair_index(v) {
                let pair = &mut m.pairs[i];
                if pair.recv.is_none() {
                    pair.cause = Some(pair.cause.map_or(cause, |c| c.max(cause)));
                }
            }
        }
    }

    /// Registers a message and its intended recipients.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new_message(
        &mut self,
        kind: MessageKind,
        src: VehicleId,
        now: SimTime,
        bs: Option<BsId>,
        mut targets: Vec<VehicleId>,
        ttl: u32,
        track_holders: bool,
    ) -> MsgId {
        targets.sort_unstable();
        targets.dedup();
        targets.retain(|&v| v != src);
        let id = self.msgs.len() as MsgId;
        let size = self.p.radio.msg_size;
        if self.logging {
            let list: Vec<String> = targets.iter().map(|v| v.to_string()).collect();
            self.note(format_args!("new={id}:{size}:{} kind={} src={src}", list.join(","), kind.as_str()));
        }
        let mut holders = if track_holders { vec![false; self.n] } else { Vec::new() };
        if let Some(h) = holders.get_mut(src as usize) {
            *h = true;
        }
        self.msgs.push(MsgState {
            id,
            kind,
            src,
            origin: now,
            size,
            ttl,
            bs,
            pairs: targets
                .into_iter()
                .map(|dst| Pair {
                    dst,
                    sent: now,
                    recv: None,
                    cause: None,
                })
                .collect(),
            holders,
        });
        id
    }

    /// Adds a late recipient to an existing message.
    pub(crate) fn add_target(&mut self, msg: MsgId, v: VehicleId, now: SimTime) -> bool {
        let m = &mut self.msgs[msg as usize];
        if v == m.src || m.holds(v) {
            return false;
        }
        match m.pairs.binary_search_by_key(&v, |p| p.dst) {
            Ok(_) => false,
            Err(at) => {
                m.pairs.insert(
                    at,
                    Pair {
                        dst: v,
                        sent: now,
                        recv: None,
                        cause: None,
                    },
                );
                self.note(format_args!("join={msg}:{v}"));
                true
            }
        }
    }

    fn workload_targets(&mut self, src: VehicleId, now: SimTime, bs: Option<BsId>) -> Vec<VehicleId> {
        match self.p.workload.target_rule {
            TargetRule::BaseStationRegion => match bs {
                Some(b) => {
                    let center = self.stations[b as usize].pos;
                    let near = self.vehicles_near(center, self.p.infra.bs_coverage, now);
                    crate::protocols::scan_trans_range(src, center, self.p.infra.bs_coverage, near)
                }
                None => Vec::new(),
            },
            TargetRule::RadioRange => {
                let center = self.mob.pos(src, now);
                let near = self.vehicles_near(center, self.p.radio.range, now);
                near.into_iter().map(|(v, _)| v).filter(|&v| v != src).collect()
            }
        }
    }

    fn on_inject(&mut self, q: &mut Queue, which: Option<usize>) -> Res {
        let now = q.now();
        let (src, explicit, ttl) = match which {
            Some(i) => {
                let inj = self.script[i].clone();
                (inj.src, inj.targets, inj.ttl.unwrap_or(self.p.flood.ttl))
            }
            None => {
                let src = self.rng_work.draw_index(self.n) as VehicleId;
                let next = self.next_arrival(now);
                if next < self.p.duration {
                    sched(q, next, EventKind::MessageInject, Payload::Inject(None))?;
                }
                (src, None, self.p.flood.ttl)
            }
        };
        if src as usize >= self.n {
            return Err(format!("injection source {src} is not a vehicle"));
        }
        let bs = self.associate_vehicle(src, now);
        let targets = match explicit {
            Some(t) => t,
            None => self.workload_targets(src, now, bs),
        };
        let kind = self.p.workload.kind;
        match self.p.protocol {
            ProtocolKind::Baseline => {
                let msg = self.new_message(kind, src, now, bs, targets, ttl, true);
                self.flood_start(q, msg)
            }
            ProtocolKind::HybridVehcloud => {
                let msg = self.new_message(kind, src, now, bs, targets, ttl, true);
                self.hybrid_start(q, msg)
            }
            ProtocolKind::Dfcv => {
                let msg = self.new_message(kind, src, now, bs, targets, ttl, false);
                self.dfcv_start(q, msg)
            }
        }
    }

    fn on_beacon(&mut self, q: &mut Queue, v: VehicleId) -> Res {
        let now = q.now();
        let next = now + SimTime::from_millis(self.p.workload.beacon_interval_ms);
        if next <= self.p.end_time() {
            sched(q, next, EventKind::BeaconEmit, Payload::Beacon(v))?;
        }
        let size = self.p.radio.msg_size;
        let frame = if self.p.workload.include_beacons && now < self.p.duration {
            let center = self.mob.pos(v, now);
            let near: Vec<VehicleId> = self
                .vehicles_near(center, self.p.radio.range, now)
                .into_iter()
                .map(|(u, _)| u)
                .filter(|&u| u != v)
                .collect();
            let msg = self.new_message(MessageKind::Beacon, v, now, None, near.clone(), 1, false);
            Frame::cast(msg, 1, near, size)
        } else {
            self.note(format_args!("beacon node={v}"));
            Frame {
                size,
                body: Body::Beacon,
                attempt: 0,
            }
        };
        self.enqueue(q, v, frame, now)
    }

    fn on_tick(&mut self, q: &mut Queue) -> Res {
        let now = q.now();
        let tick = self.p.mobility_tick;
        self.index.rebuild(&self.mob, now, tick);
        if now + tick <= self.p.end_time() {
            sched(q, now + tick, EventKind::MobilityTick, Payload::Tick)?;
        }
        if self.p.protocol == ProtocolKind::HybridVehcloud {
            self.hybrid_newcomers(q)?;
        }
        Ok(())
    }

    fn on_maintenance(&mut self, q: &mut Queue) -> Res {
        let now = q.now();
        for bs in 0..self.stations.len() as BsId {
            self.refresh_fog(bs, now)?;
        }
        let next = now + SimTime::from_millis(self.p.dfcv.maintenance_interval_ms.max(1));
        if next <= self.p.end_time() {
            sched(q, next, EventKind::FogMaintenance, Payload::Maintenance)?;
        }
        Ok(())
    }

    /// Refreshes and maintains the cells under `bs`, auditing the partition.
    pub(crate) fn refresh_fog(&mut self, bs: BsId, now: SimTime) -> Res {
        let present = self.associated_with(bs, now);
        let mut cells = std::mem::take(&mut self.fog[bs as usize]);
        let mob = &self.mob;
        let pos = |v: VehicleId| mob.pos(v, now);
        let report = dfcv_refresh(&mut cells, bs, &present, &pos, &self.p.dfcv, &mut self.next_cell).map_err(|e| e.to_string())?;
        self.audit.maintain_calls += 1;
        self.audit.max_passes = self.audit.max_passes.max(report.passes);
        self.audit.splits += report.splits as u64;
        self.audit.merges += report.merges as u64;
        if !partition_holds(&cells, &present) {
            self.audit.partition_violations += 1;
        }
        self.note(format_args!(
            "fog bs={bs} cells={} members={} splits={} merges={}",
            cells.len(),
            present.len(),
            report.splits,
            report.merges
        ));
        self.fog[bs as usize] = cells;
        Ok(())
    }

    fn on_infra(&mut self, q: &mut Queue, job: InfraJob) -> Res {
        match job {
            InfraJob::CloudSelect {
                msg,
                shadowed,
                direct,
                hops,
            } => self.hybrid_cloud_select(q, msg, shadowed, direct, hops),
            InfraJob::GatewayDown {
                msg,
                gw,
                recipients,
                hops,
            } => self.hybrid_gateway_down(q, msg, gw, recipients, hops),
            InfraJob::BsDown {
                msg,
                bs,
                recipients,
                hops,
            } => {
                self.note(format_args!("cloud->bs={bs} msg={msg}"));
                let node = self.bs_node(bs);
                let size = self.msgs[msg as usize].size;
                let now = q.now();
                self.enqueue(q, node, Frame::cast(msg, hops + 1, recipients, size), now)
            }
            InfraJob::FogDone {
                msg,
                bs,
                recipients,
                hops,
            } => self.dfcv_fog_done(q, msg, bs, recipients, hops, true),
            InfraJob::RemoteFog {
                msg,
                bs,
                recipients,
                hops,
            } => self.dfcv_fog_done(q, msg, bs, recipients, hops, false),
        }
    }

    fn finish(&mut self) {
        self.finished = true;
        let protocol = self.p.protocol;
        let include_beacons = self.p.workload.include_beacons;
        let mut out = Vec::new();
        for m in &self.msgs {
            if m.kind == MessageKind::Beacon && !include_beacons {
                continue;
            }
            for pair in &m.pairs {
                let (recv_time, hop_count, loss_cause) = match pair.recv {
                    Some((t, h)) => (Some(t), h, None),
                    None => (None, 0, Some(pair.cause.unwrap_or(LossCause::OutOfRange))),
                };
                out.push(DeliveryRecord {
                    msg_id: m.id,
                    src: m.src,
                    dst: pair.dst,
                    sent_time: pair.sent,
                    recv_time,
                    loss_cause,
                    protocol,
                    hop_count,
                    size: m.size,
                });
            }
        }
        self.records = out;
    }
}

impl Frame {
    pub(crate) fn cast(msg: MsgId, hops: u32, recipients: Vec<VehicleId>, size: u32) -> Frame {
        Frame {
            size,
            body: Body::Cast { msg, hops, recipients },
            attempt: 0,
        }
    }

    pub(crate) fn unicast(
        msg: MsgId,
        dst: NodeId,
        hops: u32,
        recipients: Vec<VehicleId>,
        direct: Vec<VehicleId>,
        then: Then,
        size: u32,
    ) -> Frame {
        Frame {
            size,
            body: Body::Unicast {
                msg,
                dst,
                hops,
                recipients,
                direct,
                then,
            },
            attempt: 0,
        }
    }
}

impl Handler<Payload> for World {
    fn handle(&mut self, ev: Event<Payload>, q: &mut Queue, summary: Option<&mut String>) -> Result<(), String> {
        self.logging = summary.is_some();
        self.line.clear();
        let r = match ev.payload {
            Payload::Tick => self.on_tick(q),
            Payload::Beacon(v) => self.on_beacon(q, v),
            Payload::Inject(which) => self.on_inject(q, which),
            Payload::Access(node) => self.on_access(q, node),
            Payload::Setup(node, frame) => {
                let now = q.now();
                self.enqueue(q, node, *frame, now)
            }
            Payload::FrameEnd(f) => self.on_frame_end(q, *f),
            Payload::Maintenance => self.on_maintenance(q),
            Payload::Infra(job) => self.on_infra(q, *job),
            Payload::End => {
                self.finish();
                self.note(format_args!("end messages={} records={}", self.msgs.len(), self.records.len()));
                Ok(())
            }
        };
        if let Some(s) = summary {
            s.push_str(&self.line);
        }
        r
    }
}
