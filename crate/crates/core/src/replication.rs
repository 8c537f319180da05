//! Passive replication on top of POabcast, and the clients driving it.
//!
//! The primary executes operations on its tentative state Θ and broadcasts
//! the resulting state updates; every replica applies delivered updates to
//! its committed state Σ. An update applied on the wrong state is ⊥, which
//! makes the replica halt.

use crate::broadcast::{Msg, PoBroadcast};
use crate::object::{Command, OpResult, ReplObject};
use crate::paxos::Dest;
use crate::sim::{ActorId, Context, ProcessId, WireSize};
use crate::trace::EventKind;
use crate::value::{Batch, ClientId, OpId, Operation, Reply, Update, ValueId};
use std::collections::{HashMap, HashSet, VecDeque};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NetMsg {
    Paxos(Msg),
    Request(Operation),
    Reply(Reply),
}

impl WireSize for NetMsg {
    fn wire_size(&self) -> usize {
        match self {
            NetMsg::Paxos(m) => m.wire_size(),
            NetMsg::Request(op) => 24 + op.cmd.wire_size(),
            NetMsg::Reply(_) => 32,
        }
    }
}

pub fn client_actor(n: usize, c: ClientId) -> ActorId {
    ActorId(n as u32 + c.0)
}

/// Injected faults, for checking that the checkers notice.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Faults {
    /// Replies stored in and served from the reply table are off by one.
    pub corrupt_reply_table: bool,
}

#[derive(Clone, Debug)]
pub struct ReplicaConfig {
    pub me: ProcessId,
    pub n: usize,
    /// Batch all requests that arrive while the own instance is ongoing
    /// (for protocols with one instance in flight at a time).
    pub sequential: bool,
    /// Maximum number of updates per broadcast value.
    pub batch_cap: usize,
    pub faults: Faults,
}

pub struct Replica {
    cfg: ReplicaConfig,
    bcast: Box<dyn PoBroadcast>,
    sigma: ReplObject,
    /// Θ; `Some` exactly when the replica is an initialized primary.
    theta: Option<ReplObject>,
    primary: bool,
    /// Barrier output the current primary epoch crossed with.
    crossed: Option<u64>,
    leader: bool,
    seen: HashSet<OpId>,
    pending: VecDeque<Operation>,
    in_flight: HashSet<OpId>,
    replies: HashMap<ClientId, Reply>,
    next_value: u64,
    halted: bool,
}

impl Replica {
    pub fn new(cfg: ReplicaConfig, bcast: Box<dyn PoBroadcast>) -> Self {
        assert!(cfg.batch_cap >= 1);
        Replica {
            cfg,
            bcast,
            sigma: ReplObject::new(),
            theta: None,
            primary: false,
            crossed: None,
            leader: false,
            seen: HashSet::new(),
            pending: VecDeque::new(),
            in_flight: HashSet::new(),
            replies: HashMap::new(),
            next_value: 0,
            halted: false,
        }
    }

    pub fn sigma(&self) -> &ReplObject {
        &self.sigma
    }

    pub fn halted(&self) -> bool {
        self.halted
    }

    pub fn is_primary(&self) -> bool {
        self.primary
    }

    pub fn broadcast_layer(&self) -> &dyn PoBroadcast {
        self.bcast.as_ref()
    }

    pub fn on_omega(&mut self, ctx: &mut Context<'_, NetMsg>, leader: ProcessId) {
        if self.halted {
            return;
        }
        self.leader = leader == self.cfg.me;
        if !self.leader {
            self.pending.clear();
        }
        self.bcast.on_omega(leader);
        self.step(ctx);
    }

    pub fn on_message(&mut self, ctx: &mut Context<'_, NetMsg>, from: ActorId, msg: NetMsg) {
        if self.halted {
            return;
        }
        match msg {
            NetMsg::Paxos(m) => self.bcast.handle(ProcessId(from.0), m),
            NetMsg::Request(op) => self.on_request(ctx, op),
            NetMsg::Reply(_) => {}
        }
        self.step(ctx);
    }

    fn on_request(&mut self, ctx: &mut Context<'_, NetMsg>, op: Operation) {
        if self.seen.insert(op.id) {
            ctx.emit(EventKind::Request { op: op.id });
        }
        if let Some(r) = self.replies.get(&op.id.client) {
            if r.id.seq >= op.id.seq {
                if r.id == op.id {
                    ctx.send(
                        client_actor(self.cfg.n, op.id.client),
                        NetMsg::Reply(r.clone()),
                    );
                }
                return;
            }
        }
        let accepting = self.theta.is_some() || (self.cfg.sequential && self.leader);
        if !accepting
            || self.in_flight.contains(&op.id)
            || self.pending.iter().any(|p| p.id == op.id)
        {
            return;
        }
        self.pending.push_back(op);
    }

    /// Runs after every input: consumes decisions, applies deliveries,
    /// tracks primary transitions and flushes the request queue.
    fn step(&mut self, ctx: &mut Context<'_, NetMsg>) {
        self.bcast.poll();
        self.emit_layer(ctx);
        for d in self.bcast.drain_deliveries() {
            for u in &d.batch.updates {
                if !self.deliver(ctx, d.batch.id, u) {
                    // Messages produced before ⊥ still go out; nothing after.
                    self.send_outbox(ctx);
                    return;
                }
            }
        }
        self.transition(ctx);
        self.flush(ctx);
        self.send_outbox(ctx);
    }

    fn deliver(&mut self, ctx: &mut Context<'_, NetMsg>, value: ValueId, u: &Update) -> bool {
        let ok = self.sigma.apply(&u.delta).is_ok();
        ctx.emit(EventKind::Apply {
            value,
            op: u.reply.id,
            pre: u.delta.pre,
            state: self.sigma.digest(),
            ok,
        });
        if !ok {
            self.halted = true;
            return false;
        }
        self.in_flight.remove(&u.reply.id);
        let mut reply = u.reply.clone();
        if self.cfg.faults.corrupt_reply_table {
            reply.result = corrupt(reply.result);
        }
        ctx.send(
            client_actor(self.cfg.n, reply.id.client),
            NetMsg::Reply(reply.clone()),
        );
        self.replies.insert(reply.id.client, reply);
        true
    }

    fn transition(&mut self, ctx: &mut Context<'_, NetMsg>) {
        let now = self.bcast.is_primary();
        // A barrier that moves while primary means values of an earlier
        // primary were delivered since Θ was taken, so the epoch restarts.
        if now && self.primary && self.bcast.primary_info().tau != self.crossed {
            self.end_epoch(ctx);
        }
        if now && !self.primary {
            self.theta = Some(self.sigma.clone());
            let info = self.bcast.primary_info();
            self.crossed = info.tau;
            ctx.emit(EventKind::PrimaryBegin {
                tau: info.tau,
                ballot: info.ballot,
                epoch: info.epoch,
            });
            self.primary = true;
        } else if !now && self.primary {
            self.end_epoch(ctx);
        }
    }

    fn end_epoch(&mut self, ctx: &mut Context<'_, NetMsg>) {
        // Θ's undelivered suffix is discarded; a later epoch starts over
        // from Σ and retransmitted operations get executed afresh.
        self.theta = None;
        self.in_flight.clear();
        self.primary = false;
        ctx.emit(EventKind::PrimaryEnd);
    }

    fn flush(&mut self, ctx: &mut Context<'_, NetMsg>) {
        while self.theta.is_some() && !self.pending.is_empty() {
            let ready = self.cfg.sequential
                || self.bcast.outstanding() == 0
                || self.pending.len() >= self.cfg.batch_cap;
            if !ready {
                break;
            }
            let take = self.pending.len().min(self.cfg.batch_cap);
            let theta = self.theta.as_mut().expect("checked");
            let mut updates = Vec::with_capacity(take);
            for op in self.pending.drain(..take) {
                // Answered by a delivery since it was queued.
                if self
                    .replies
                    .get(&op.id.client)
                    .is_some_and(|r| r.id.seq >= op.id.seq)
                {
                    continue;
                }
                let seed = op.nondet_seed.unwrap_or(0)
                    ^ (self.cfg.me.0 as u64 + 1).wrapping_mul(0x9e37_79b9);
                // Malformed commands are rejected before execution.
                if let Ok((result, delta)) = theta.execute(&op.cmd, seed) {
                    self.in_flight.insert(op.id);
                    updates.push(Update {
                        delta,
                        reply: Reply { id: op.id, result },
                    });
                }
            }
            if updates.is_empty() {
                continue;
            }
            let batch = Batch {
                id: ValueId(self.cfg.me, self.next_value),
                updates,
            };
            self.next_value += 1;
            self.bcast
                .poabcast(batch)
                .expect("initialized implies primary");
            self.emit_layer(ctx);
            self.transition(ctx);
        }
    }

    fn emit_layer(&mut self, ctx: &mut Context<'_, NetMsg>) {
        for k in self.bcast.drain_trace() {
            ctx.emit(k);
        }
    }

    fn send_outbox(&mut self, ctx: &mut Context<'_, NetMsg>) {
        self.emit_layer(ctx);
        for (dest, m) in self.bcast.drain_outbox() {
            match dest {
                Dest::All => ctx.broadcast(NetMsg::Paxos(m)),
                Dest::Others => {
                    for p in 0..self.cfg.n as u32 {
                        if p != self.cfg.me.0 {
                            ctx.send(ActorId(p), NetMsg::Paxos(m.clone()));
                        }
                    }
                }
                Dest::To(p) => ctx.send(p.into(), NetMsg::Paxos(m)),
            }
        }
    }
}

fn corrupt(r: OpResult) -> OpResult {
    match r {
        OpResult::Appended { index } => OpResult::Appended { index: index + 1 },
        OpResult::AppendedNondet { index, draw } => OpResult::AppendedNondet {
            index: index + 1,
            draw,
        },
        OpResult::Length { len } => OpResult::Length { len: len + 1 },
    }
}

/// One client operation; it is invoked no earlier than `at` and only after
/// the previous operation of the same client completed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlannedOp {
    pub at: u64,
    pub cmd: Command,
    pub nondet_seed: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct ClientConfig {
    pub id: ClientId,
    pub n: usize,
    /// Ticks between retransmissions of an unanswered request.
    pub retry: u64,
    pub ops: Vec<PlannedOp>,
}

const TIMER_INVOKE: u64 = 0;
const TIMER_RETRY: u64 = 1 << 63;

pub struct Client {
    cfg: ClientConfig,
    next: usize,
    current: Option<Operation>,
    completed: usize,
}

impl Client {
    pub fn new(cfg: ClientConfig) -> Self {
        Client {
            cfg,
            next: 0,
            current: None,
            completed: 0,
        }
    }

    pub fn completed(&self) -> usize {
        self.completed
    }

    pub fn pending(&self) -> usize {
        self.cfg.ops.len() - self.completed
    }

    pub fn on_start(&mut self, ctx: &mut Context<'_, NetMsg>) {
        self.schedule_next(ctx);
    }

    fn schedule_next(&mut self, ctx: &mut Context<'_, NetMsg>) {
        if let Some(p) = self.cfg.ops.get(self.next) {
            let now = ctx.now().ticks();
            if p.at <= now {
                self.invoke(ctx);
            } else {
                ctx.set_timer(p.at - now, TIMER_INVOKE);
            }
        }
    }

    fn invoke(&mut self, ctx: &mut Context<'_, NetMsg>) {
        let p = self.cfg.ops[self.next].clone();
        self.next += 1;
        let id = OpId {
            client: self.cfg.id,
            seq: self.next as u64,
        };
        ctx.emit(EventKind::Invoke {
            client: id.client,
            seq: id.seq,
            cmd: p.cmd.clone(),
        });
        let op = Operation {
            id,
            cmd: p.cmd,
            nondet_seed: p.nondet_seed,
        };
        ctx.broadcast(NetMsg::Request(op.clone()));
        ctx.set_timer(self.cfg.retry, TIMER_RETRY | id.seq);
        self.current = Some(op);
    }

    pub fn on_timer(&mut self, ctx: &mut Context<'_, NetMsg>, tag: u64) {
        if tag == TIMER_INVOKE {
            if self.current.is_none() {
                self.invoke(ctx);
            }
            return;
        }
        let seq = tag & !TIMER_RETRY;
        if let Some(op) = &self.current {
            if op.id.seq == seq {
                ctx.broadcast(NetMsg::Request(op.clone()));
                ctx.set_timer(self.cfg.retry, tag);
            }
        }
    }

    pub fn on_message(&mut self, ctx: &mut Context<'_, NetMsg>, msg: NetMsg) {
        let NetMsg::Reply(r) = msg else { return };
        if self.current.as_ref().map(|op| op.id) != Some(r.id) {
            return;
        }
        self.current = None;
        self.completed += 1;
        ctx.emit(EventKind::Response {
            client: r.id.client,
            seq: r.id.seq,
            result: r.result,
        });
        self.schedule_next(ctx);
    }
}
