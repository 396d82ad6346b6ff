//! Baseline multi-hop flooding: every vehicle rebroadcasts a message the
//! first time it hears it, until the hop limit is reached.

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::mobility::VehicleId;
use crate::protocols::MsgId;
use crate::world::{Body, Frame, Queue, Res, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FloodParams {
    /// Maximum hops a message travels from its source.
    pub ttl: u32,
    /// Delay before the source's first transmission, microseconds.
    pub route_setup_delay_us: u64,
}

impl Default for FloodParams {
    fn default() -> Self {
        FloodParams {
            ttl: 5,
            route_setup_delay_us: 0,
        }
    }
}

impl World {
    pub(crate) fn flood_start(&mut self, q: &mut Queue, msg: MsgId) -> Res {
        let src = self.msgs[msg as usize].src;
        let frame = self.flood_frame(msg, 1);
        let delay = SimTime::from_micros(self.p.flood.route_setup_delay_us);
        self.enqueue_after(q, src, frame, delay)
    }

    /// `v` heard the message for the first time at `at` and passes it on.
    pub(crate) fn flood_relay(&mut self, q: &mut Queue, msg: MsgId, v: VehicleId, hops: u32, at: SimTime) -> Res {
        let frame = self.flood_frame(msg, hops);
        self.enqueue(q, v, frame, at.max(q.now()))
    }

    fn flood_frame(&self, msg: MsgId, hops: u32) -> Frame {
        Frame {
            size: self.msgs[msg as usize].size,
            body: Body::Flood { msg, hops },
            attempt: 0,
        }
    }
}
