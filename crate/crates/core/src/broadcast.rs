//! What the replication layer sees of a broadcast protocol.

use crate::paxos::{Consensus, Decree, Dest, Driver, PaxosEvent, PaxosMsg};
use crate::trace::EventKind;
use crate::value::{Batch, DecreeTag, Epoch, ProtoValue};

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("not primary")]
pub struct NotPrimary;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub batch: Batch,
    pub instance: u64,
    pub epoch: Option<Epoch>,
    pub seqno: Option<u64>,
}

/// How a primary epoch identifies itself when it begins.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PrimaryInfo {
    pub tau: Option<u64>,
    pub ballot: Option<u64>,
    pub epoch: Option<Epoch>,
}

pub type Msg = PaxosMsg<ProtoValue>;

pub trait PoBroadcast {
    fn on_omega(&mut self, leader: crate::sim::ProcessId);
    fn handle(&mut self, from: crate::sim::ProcessId, msg: Msg);
    /// Consumes new decisions and re-evaluates the barrier.
    fn poll(&mut self);
    fn is_primary(&self) -> bool;
    fn poabcast(&mut self, batch: Batch) -> Result<u64, NotPrimary>;
    /// Own application values proposed and not yet decided.
    fn outstanding(&self) -> usize;
    fn primary_info(&self) -> PrimaryInfo;
    fn drain_deliveries(&mut self) -> Vec<Delivery>;
    fn drain_trace(&mut self) -> Vec<EventKind>;
    fn drain_outbox(&mut self) -> Vec<(Dest, Msg)>;
}

pub fn decree_tag(d: &Decree<ProtoValue>) -> DecreeTag {
    match d {
        Decree::NoOp => DecreeTag::NoOp,
        Decree::Value(v) => v.tag(),
    }
}

/// Translates consensus-level events into trace records.
pub fn consensus_trace<C>(c: &mut C, out: &mut Vec<EventKind>)
where
    C: Consensus<ProtoValue> + Driver<ProtoValue>,
{
    for ev in c.drain_events() {
        out.push(match ev {
            PaxosEvent::ReadPhase { ballot } => EventKind::ReadPhase { ballot: ballot.0 },
            PaxosEvent::WritePhase { ballot, watermark } => EventKind::WritePhase {
                ballot: ballot.0,
                watermark,
            },
            PaxosEvent::Propose { instance } => {
                let decree = c
                    .written(instance)
                    .map(decree_tag)
                    .unwrap_or(DecreeTag::NoOp);
                EventKind::Propose { instance, decree }
            }
            PaxosEvent::Decided { instance } => {
                let decree = c
                    .decision(instance)
                    .map(decree_tag)
                    .unwrap_or(DecreeTag::NoOp);
                EventKind::Decide { instance, decree }
            }
        });
    }
}
