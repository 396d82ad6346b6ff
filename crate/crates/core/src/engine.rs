//! Deterministic discrete-event core.
//!
//! Events are ordered by `(fire_at, seq)` where `seq` is the insertion
//! counter, so simultaneous events fire in the order they were scheduled.
//! Every stochastic subsystem draws from its own [`RngStream`], keyed by the
//! run seed and a stream label.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::io::Write;
use std::ops::{Add, Sub};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Default cap on processed events per run.
pub const DEFAULT_EVENT_BUDGET: u64 = 50_000_000;

/// Simulation time in whole microseconds since the start of the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    /// Converts seconds to microseconds, rounding half up. Negative and
    /// non-finite inputs clamp to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        SimTime(round_half_up(secs * 1e6))
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

/// Rounds a non-negative real to the nearest integer, halves going up.
pub(crate) fn round_half_up(x: f64) -> u64 {
    if !x.is_finite() || x <= 0.0 {
        return 0;
    }
    (x + 0.5).floor() as u64
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    MobilityTick,
    BeaconEmit,
    MessageInject,
    /// A node's backoff expired and it senses the medium.
    ChannelAccess,
    RadioDeliver,
    FogMaintenance,
    CloudDeliver,
    SimEnd,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::MobilityTick => "MobilityTick",
            EventKind::BeaconEmit => "BeaconEmit",
            EventKind::MessageInject => "MessageInject",
            EventKind::ChannelAccess => "ChannelAccess",
            EventKind::RadioDeliver => "RadioDeliver",
            EventKind::FogMaintenance => "FogMaintenance",
            EventKind::CloudDeliver => "CloudDeliver",
            EventKind::SimEnd => "SimEnd",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct Event<P> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub kind: EventKind,
    pub payload: P,
}

// BinaryHeap is a max-heap; invert the key so the earliest (fire_at, seq) pops first.
struct Queued<P>(Event<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.0.fire_at == other.0.fire_at && self.0.seq == other.0.seq
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.fire_at, other.0.seq).cmp(&(self.0.fire_at, self.0.seq))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("cannot schedule {kind} at t={at}us: clock is already at {now}us")]
    ScheduleInPast {
        kind: EventKind,
        at: SimTime,
        now: SimTime,
    },
    #[error("event budget of {budget} exceeded at t={clock}us (runaway event cascade?)")]
    BudgetExceeded { budget: u64, clock: SimTime },
    #[error("event handler failed at t={clock}us: {message}")]
    Handler { clock: SimTime, message: String },
    #[error("event log write failed: {0}")]
    Log(String),
}

/// Pending events plus the simulation clock.
pub struct EventQueue<P> {
    heap: BinaryHeap<Queued<P>>,
    next_seq: u64,
    clock: SimTime,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            next_seq: 0,
            clock: SimTime::ZERO,
        }
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Enqueues an event and returns its sequence number.
    pub fn schedule(&mut self, fire_at: SimTime, kind: EventKind, payload: P) -> Result<u64, EngineError> {
        if fire_at < self.clock {
            return Err(EngineError::ScheduleInPast {
                kind,
                at: fire_at,
                now: self.clock,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Queued(Event {
            fire_at,
            seq,
            kind,
            payload,
        }));
        Ok(seq)
    }

    /// Pops the next event if it fires no later than `until`, advancing the clock.
    pub fn pop_until(&mut self, until: SimTime) -> Option<Event<P>> {
        match self.heap.peek() {
            Some(q) if q.0.fire_at <= until => {}
            _ => return None,
        }
        let Queued(ev) = self.heap.pop()?;
        debug_assert!(ev.fire_at >= self.clock);
        self.clock = ev.fire_at;
        Some(ev)
    }
}

/// Processes events popped from the queue.
pub trait Handler<P> {
    /// Handles one event. When `summary` is present the handler should
    /// append a one-line human-readable description for the event log.
    fn handle(
        &mut self,
        event: Event<P>,
        queue: &mut EventQueue<P>,
        summary: Option<&mut String>,
    ) -> Result<(), String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunStats {
    pub events: u64,
    pub clock: SimTime,
}

/// Runs every event with `fire_at <= until` in `(fire_at, seq)` order.
///
/// When `log` is given, each processed event is written as
/// `time_us \t seq \t kind \t summary`.
pub fn run<P, H: Handler<P>>(
    queue: &mut EventQueue<P>,
    handler: &mut H,
    until: SimTime,
    budget: u64,
    mut log: Option<&mut dyn Write>,
) -> Result<RunStats, EngineError> {
    let mut events = 0u64;
    let mut line = String::new();
    while let Some(ev) = queue.pop_until(until) {
        if events >= budget {
            return Err(EngineError::BudgetExceeded {
                budget,
                clock: queue.now(),
            });
        }
        events += 1;
        let (fire_at, seq, kind) = (ev.fire_at, ev.seq, ev.kind);
        line.clear();
        let summary = if log.is_some() { Some(&mut line) } else { None };
        handler
            .handle(ev, queue, summary)
            .map_err(|message| EngineError::Handler {
                clock: queue.now(),
                message,
            })?;
        if let Some(w) = log.as_mut() {
            writeln!(w, "{}\t{}\t{}\t{}", fire_at, seq, kind, line).map_err(|e| EngineError::Log(e.to_string()))?;
        }
    }
    Ok(RunStats {
        events,
        clock: queue.now(),
    })
}

/// A named, reproducible stream of uniform draws.
///
/// The generator is ChaCha8 keyed by the run seed and the FNV-1a hash of the
/// stream label, so sequences are identical across platforms and adding a
/// new stream leaves every other stream untouched.
#[derive(Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: String,
    rng: ChaCha8Rng,
    draws: u64,
}

impl fmt::Debug for RngStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RngStream")
            .field("seed", &self.seed)
            .field("stream_id", &self.stream_id)
            .field("draws", &self.draws)
            .finish()
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl RngStream {
    pub fn new(seed: u64, stream_id: &str) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&fnv1a64(stream_id.as_bytes()).to_le_bytes());
        RngStream {
            seed,
            stream_id: stream_id.to_owned(),
            rng: ChaCha8Rng::from_seed(key),
            draws: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> &str {
        &self.stream_id
    }

    /// Number of draws taken so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Uniform real in `[0, 1)` with 53 bits of precision.
    pub fn draw(&mut self) -> f64 {
        self.draws += 1;
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform real in `[lo, hi)`.
    pub fn draw_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.draw()
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn draw_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.draw() * n as f64) as usize).min(n - 1)
    }

    /// `true` with probability `p`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.draw() < p
    }
}
