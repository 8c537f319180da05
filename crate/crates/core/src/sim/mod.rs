//! Deterministic discrete-event simulation.
//!
//! Virtual time is integral ticks. Links are reliable and FIFO per ordered
//! pair unless reordering is switched on; the only source of message loss is
//! a crash of the receiver. Leader election is an [`OmegaScript`] rather than
//! a timeout-driven detector, so adversarial schedules are easy to write down.

mod delay;
mod kernel;
mod omega;

pub use delay::{DelayModel, LinkRule, NetConfig};
pub use kernel::{Actor, Context, Envelope, EventId, RunStats, Simulation, WireSize};
pub use omega::{CrashSchedule, OmegaScript, OmegaSegment};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, Sub};

/// Identifier of a replica process, dense in `[0, n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessId(pub u32);

impl ProcessId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Identifier of any simulated actor. Processes occupy `[0, n)`, clients
/// follow them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActorId(pub u32);

impl ActorId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<ProcessId> for ActorId {
    fn from(p: ProcessId) -> Self {
        ActorId(p.0)
    }
}

/// Virtual time in ticks.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct VirtualTime(pub u64);

impl VirtualTime {
    pub const ZERO: VirtualTime = VirtualTime(0);

    pub fn ticks(self) -> u64 {
        self.0
    }
}

impl Add<u64> for VirtualTime {
    type Output = VirtualTime;
    fn add(self, rhs: u64) -> VirtualTime {
        VirtualTime(self.0 + rhs)
    }
}

impl Sub for VirtualTime {
    type Output = u64;
    fn sub(self, rhs: VirtualTime) -> u64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for VirtualTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("cannot schedule at {at} while current time is {now}")]
    SchedulingInPast { at: VirtualTime, now: VirtualTime },
    #[error("invalid delay model: {0}")]
    InvalidDelay(String),
    #[error("invalid omega script: {0}")]
    InvalidOmega(String),
    #[error("invalid crash schedule: {0}")]
    InvalidCrash(String),
}
