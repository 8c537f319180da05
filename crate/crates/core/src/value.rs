//! Broadcast payloads and the protocol wrappers proposed to consensus.

use crate::object::{Command, OpResult, StateUpdate};
use crate::sim::ProcessId;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClientId(pub u32);

/// `(c, t)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OpId {
    pub client: ClientId,
    pub seq: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Operation {
    pub id: OpId,
    pub cmd: Command,
    pub nondet_seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reply {
    pub id: OpId,
    pub result: OpResult,
}

/// `⟨δ, r, c, t⟩`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Update {
    pub delta: StateUpdate,
    pub reply: Reply,
}

/// Identity of a broadcast value: originating process and its local
/// broadcast counter. Unique per run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ValueId(pub ProcessId, pub u64);

impl fmt::Display for ValueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.0 .0, self.1)
    }
}

/// The application value handed to POabcast: one or more updates (more
/// than one only when batching).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub id: ValueId,
    pub updates: Vec<Update>,
}

impl Batch {
    pub fn wire_size(&self) -> usize {
        16 + self
            .updates
            .iter()
            .map(|u| u.delta.wire_size() + 24)
            .sum::<usize>()
    }
}

/// Epoch number of the barrier-free protocol: `attempt * n + owner`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Epoch(pub u64);

impl Epoch {
    pub fn new(attempt: u64, owner: ProcessId, n: usize) -> Self {
        Epoch(attempt * n as u64 + owner.0 as u64)
    }

    pub fn owner(self, n: usize) -> ProcessId {
        ProcessId((self.0 % n as u64) as u32)
    }
}

/// Values proposed to consensus by the broadcast layers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProtoValue {
    App(Batch),
    /// `skip(k)`: deciding it at `dec + 1` moves `dec` to `k`.
    Skip {
        upto: u64,
    },
    NewEpoch {
        epoch: Epoch,
    },
    Val {
        batch: Batch,
        epoch: Epoch,
        seqno: u64,
    },
}

impl ProtoValue {
    pub fn wire_size(&self) -> usize {
        match self {
            ProtoValue::App(b) => b.wire_size(),
            ProtoValue::Val { batch, .. } => batch.wire_size() + 16,
            ProtoValue::Skip { .. } | ProtoValue::NewEpoch { .. } => 16,
        }
    }

    pub fn tag(&self) -> DecreeTag {
        match self {
            ProtoValue::App(b) => DecreeTag::App { value: b.id },
            ProtoValue::Skip { upto } => DecreeTag::Skip { upto: *upto },
            ProtoValue::NewEpoch { epoch } => DecreeTag::NewEpoch { epoch: *epoch },
            ProtoValue::Val {
                batch,
                epoch,
                seqno,
            } => DecreeTag::Val {
                value: batch.id,
                epoch: *epoch,
                seqno: *seqno,
            },
        }
    }
}

/// Compact, payload-free description of a consensus decree, as it appears
/// in traces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "d", rename_all = "kebab-case")]
pub enum DecreeTag {
    App {
        value: ValueId,
    },
    Skip {
        upto: u64,
    },
    NewEpoch {
        epoch: Epoch,
    },
    Val {
        value: ValueId,
        epoch: Epoch,
        seqno: u64,
    },
    NoOp,
}

impl DecreeTag {
    pub fn value(&self) -> Option<ValueId> {
        match *self {
            DecreeTag::App { value } | DecreeTag::Val { value, .. } => Some(value),
            _ => None,
        }
    }
}

impl crate::sim::WireSize for ProtoValue {
    fn wire_size(&self) -> usize {
        ProtoValue::wire_size(self)
    }
}
