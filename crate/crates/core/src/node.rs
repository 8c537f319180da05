//! Simulated actors: replicas with their protocol stack, and clients.

use crate::barrier_free::BarrierFree;
use crate::broadcast::PoBroadcast;
use crate::paxos::{Mode, Paxos, PaxosConfig};
use crate::protocol::Protocol;
use crate::replication::{Client, NetMsg, Replica, ReplicaConfig};
use crate::sim::{Actor, ActorId, Context, ProcessId};
use crate::tau::{NoBarrier, TauLayer, TauPaxos, TauSeq};
use crate::value::ProtoValue;

pub fn broadcast_stack(protocol: Protocol, me: ProcessId, n: usize) -> Box<dyn PoBroadcast> {
    let paxos = |first_instance, mode, fill_gaps| {
        Paxos::<ProtoValue>::new(PaxosConfig {
            me,
            n,
            first_instance,
            mode,
            fill_gaps,
        })
    };
    match protocol {
        Protocol::AbcastNaive => {
            Box::new(TauLayer::new(me, NoBarrier, paxos(1, Mode::Parallel, true)))
        }
        Protocol::TauSeq => Box::new(TauLayer::new(me, TauSeq, paxos(1, Mode::Sequential, false))),
        Protocol::TauPaxos => {
            Box::new(TauLayer::new(me, TauPaxos, paxos(1, Mode::Parallel, false)))
        }
        Protocol::BarrierFree => Box::new(BarrierFree::new(me, n, paxos(0, Mode::Parallel, true))),
    }
}

pub enum Participant {
    Replica(Box<Replica>),
    Client(Client),
}

impl Participant {
    pub fn replica(protocol: Protocol, cfg: ReplicaConfig) -> Self {
        let stack = broadcast_stack(protocol, cfg.me, cfg.n);
        Participant::Replica(Box::new(Replica::new(cfg, stack)))
    }

    pub fn as_replica(&self) -> Option<&Replica> {
        match self {
            Participant::Replica(r) => Some(r),
            Participant::Client(_) => None,
        }
    }

    pub fn as_client(&self) -> Option<&Client> {
        match self {
            Participant::Client(c) => Some(c),
            Participant::Replica(_) => None,
        }
    }
}

impl Actor for Participant {
    type Msg = NetMsg;

    fn on_start(&mut self, ctx: &mut Context<'_, NetMsg>) {
        if let Participant::Client(c) = self {
            c.on_start(ctx);
        }
    }

    fn on_message(&mut self, ctx: &mut Context<'_, NetMsg>, from: ActorId, msg: NetMsg) {
        match self {
            Participant::Replica(r) => r.on_message(ctx, from, msg),
            Participant::Client(c) => c.on_message(ctx, msg),
        }
    }

    fn on_timer(&mut self, ctx: &mut Context<'_, NetMsg>, tag: u64) {
        if let Participant::Client(c) = self {
            c.on_timer(ctx, tag);
        }
    }

    fn on_omega(&mut self, ctx: &mut Context<'_, NetMsg>, leader: ProcessId) {
        if let Participant::Replica(r) = self {
            r.on_omega(ctx, leader);
        }
    }
}
