use super::{ActorId, CrashSchedule, NetConfig, OmegaScript, ProcessId, SimError, VirtualTime};
use crate::trace::{EventKind, TraceEvent};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

/// Bytes a message occupies on the wire, for the serialization cost model.
pub trait WireSize {
    fn wire_size(&self) -> usize;
}

/// A simulated participant. Handlers run to completion; all effects go
/// through the [`Context`].
pub trait Actor {
    type Msg: Clone + WireSize;

    fn on_start(&mut self, _ctx: &mut Context<'_, Self::Msg>) {}
    fn on_message(&mut self, ctx: &mut Context<'_, Self::Msg>, from: ActorId, msg: Self::Msg);
    fn on_timer(&mut self, _ctx: &mut Context<'_, Self::Msg>, _tag: u64) {}
    /// Ω at this process changed to `leader`.
    fn on_omega(&mut self, _ctx: &mut Context<'_, Self::Msg>, _leader: ProcessId) {}
}

pub struct Context<'a, M> {
    now: VirtualTime,
    me: ActorId,
    n: usize,
    omega: Option<ProcessId>,
    outbox: Vec<(ActorId, M)>,
    timers: Vec<(u64, u64)>,
    trace: &'a mut Vec<TraceEvent>,
}

impl<'a, M: Clone> Context<'a, M> {
    pub fn now(&self) -> VirtualTime {
        self.now
    }

    pub fn me(&self) -> ActorId {
        self.me
    }

    /// Number of replica processes.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Current Ω output at this process; `None` for clients.
    pub fn omega(&self) -> Option<ProcessId> {
        self.omega
    }

    pub fn send(&mut self, to: ActorId, msg: M) {
        self.outbox.push((to, msg));
    }

    /// Sends to every replica process, including this one if it is one.
    pub fn broadcast(&mut self, msg: M) {
        for p in 0..self.n as u32 {
            self.outbox.push((ActorId(p), msg.clone()));
        }
    }

    /// Fires `on_timer(tag)` after `delay` ticks.
    pub fn set_timer(&mut self, delay: u64, tag: u64) {
        self.timers.push((delay, tag));
    }

    pub fn emit(&mut self, kind: EventKind) {
        self.trace.push(TraceEvent {
            t: self.now.0,
            p: self.me.0,
            kind,
        });
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u64);

#[derive(Clone, Debug)]
pub struct Envelope<M> {
    pub from: ActorId,
    pub to: ActorId,
    pub payload: M,
    pub send_time: VirtualTime,
    pub deliver_time: VirtualTime,
    pub seq: u64,
}

enum Kind<M> {
    Deliver(Envelope<M>),
    Timer { actor: ActorId, tag: u64 },
    Omega(usize),
    Crash(ProcessId),
    Start(ActorId),
}

struct Queued<M> {
    at: VirtualTime,
    seq: u64,
    kind: Kind<M>,
}

impl<M> PartialEq for Queued<M> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl<M> Eq for Queued<M> {}
impl<M> PartialOrd for Queued<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<M> Ord for Queued<M> {
    // Reversed: BinaryHeap is a max-heap, we pop the earliest.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunStats {
    pub events_processed: u64,
    pub end_time: VirtualTime,
    pub messages_sent: u64,
    pub messages_dropped: u64,
}

pub struct Simulation<A: Actor> {
    now: VirtualTime,
    n: usize,
    actors: Vec<A>,
    net: NetConfig,
    omega: OmegaScript,
    crashes: CrashSchedule,
    queue: BinaryHeap<Queued<A::Msg>>,
    next_seq: u64,
    next_msg: u64,
    uplink_free: Vec<VirtualTime>,
    last_arrival: HashMap<(ActorId, ActorId), VirtualTime>,
    trace: Vec<TraceEvent>,
    stats: RunStats,
}

impl<A: Actor> Simulation<A> {
    /// `actors[..n]` are the replica processes, the rest are clients.
    pub fn new(
        n: usize,
        actors: Vec<A>,
        net: NetConfig,
        omega: OmegaScript,
        crashes: CrashSchedule,
    ) -> Result<Self, SimError> {
        net.delay.validate()?;
        crashes.validate(n)?;
        omega.validate(n, &crashes)?;
        if actors.len() < n {
            return Err(SimError::InvalidCrash(format!(
                "{} actors for {n} processes",
                actors.len()
            )));
        }
        let mut sim = Simulation {
            now: VirtualTime::ZERO,
            n,
            uplink_free: vec![VirtualTime::ZERO; actors.len()],
            actors,
            net,
            omega,
            crashes,
            queue: BinaryHeap::new(),
            next_seq: 0,
            next_msg: 0,
            last_arrival: HashMap::new(),
            trace: Vec::new(),
            stats: RunStats::default(),
        };
        let crashes: Vec<_> = sim.crashes.crashes.iter().map(|(p, t)| (*p, *t)).collect();
        for (p, t) in crashes {
            sim.push(t, Kind::Crash(p));
        }
        for a in 0..sim.actors.len() {
            sim.push(VirtualTime::ZERO, Kind::Start(ActorId(a as u32)));
        }
        for i in 0..sim.omega.segments.len() {
            let from = sim.omega.segments[i].from;
            sim.push(from, Kind::Omega(i));
        }
        Ok(sim)
    }

    fn push(&mut self, at: VirtualTime, kind: Kind<A::Msg>) -> EventId {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Queued { at, seq, kind });
        EventId(seq)
    }

    pub fn now(&self) -> VirtualTime {
        self.now
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn actors(&self) -> &[A] {
        &self.actors
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn into_parts(self) -> (Vec<A>, Vec<TraceEvent>, RunStats) {
        (self.actors, self.trace, self.stats)
    }

    pub fn schedule_timer(
        &mut self,
        actor: ActorId,
        at: VirtualTime,
        tag: u64,
    ) -> Result<EventId, SimError> {
        if at < self.now {
            return Err(SimError::SchedulingInPast { at, now: self.now });
        }
        Ok(self.push(at, Kind::Timer { actor, tag }))
    }

    fn is_down(&self, a: ActorId, t: VirtualTime) -> bool {
        (a.index()) < self.n && self.crashes.crashed_by(ProcessId(a.0), t)
    }

    fn omega_of(&self, a: ActorId) -> Option<ProcessId> {
        (a.index() < self.n).then(|| self.omega.omega(ProcessId(a.0), self.now))
    }

    /// Executes every event scheduled at or before `until`.
    pub fn run_until(&mut self, until: VirtualTime) -> RunStats {
        while let Some(top) = self.queue.peek() {
            if top.at > until {
                break;
            }
            let ev = self.queue.pop().expect("peeked");
            debug_assert!(ev.at >= self.now);
            self.now = ev.at;
            self.stats.events_processed += 1;
            self.dispatch(ev.kind);
        }
        if self.now < until {
            self.now = until;
        }
        self.stats.end_time = self.now;
        self.stats
    }

    fn dispatch(&mut self, kind: Kind<A::Msg>) {
        match kind {
            Kind::Crash(p) => {
                self.trace.push(TraceEvent {
                    t: self.now.0,
                    p: p.0,
                    kind: EventKind::Crash,
                });
            }
            Kind::Start(a) => {
                if !self.is_down(a, self.now) {
                    self.with_actor(a, |actor, ctx| actor.on_start(ctx));
                }
            }
            Kind::Timer { actor, tag } => {
                if !self.is_down(actor, self.now) {
                    self.with_actor(actor, |a, ctx| a.on_timer(ctx, tag));
                }
            }
            Kind::Deliver(env) => {
                if self.is_down(env.to, self.now) {
                    self.stats.messages_dropped += 1;
                } else {
                    let from = env.from;
                    self.with_actor(env.to, move |a, ctx| a.on_message(ctx, from, env.payload));
                }
            }
            Kind::Omega(i) => {
                for p in 0..self.n {
                    let pid = ProcessId(p as u32);
                    if self.crashes.crashed_by(pid, self.now) {
                        continue;
                    }
                    let out = self.omega.segments[i].outputs[p];
                    let changed = i == 0 || self.omega.segments[i - 1].outputs[p] != out;
                    if changed {
                        self.trace.push(TraceEvent {
                            t: self.now.0,
                            p: pid.0,
                            kind: EventKind::Omega { leader: out.0 },
                        });
                        self.with_actor(pid.into(), |a, ctx| a.on_omega(ctx, out));
                    }
                }
            }
        }
    }

    fn with_actor<F>(&mut self, id: ActorId, f: F)
    where
        F: FnOnce(&mut A, &mut Context<'_, A::Msg>),
    {
        let omega = self.omega_of(id);
        let mut ctx = Context {
            now: self.now,
            me: id,
            n: self.n,
            omega,
            outbox: Vec::new(),
            timers: Vec::new(),
            trace: &mut self.trace,
        };
        f(&mut self.actors[id.index()], &mut ctx);
        let Context { outbox, timers, .. } = ctx;
        for (delay, tag) in timers {
            self.push(self.now + delay, Kind::Timer { actor: id, tag });
        }
        for (to, msg) in outbox {
            self.send(id, to, msg);
        }
    }

    fn send(&mut self, from: ActorId, to: ActorId, payload: A::Msg) {
        if to.index() >= self.actors.len() {
            return;
        }
        let seq = self.next_msg;
        self.next_msg += 1;
        self.stats.messages_sent += 1;
        let deliver_time = if from == to {
            self.now
        } else {
            let start = self.now.max(self.uplink_free[from.index()]);
            let done = start + payload.wire_size() as u64 * self.net.per_byte;
            self.uplink_free[from.index()] = done;
            let mut at = done + self.net.propagation(from, to, self.now, seq);
            if !self.net.reorder {
                let last = self
                    .last_arrival
                    .entry((from, to))
                    .or_insert(VirtualTime::ZERO);
                at = at.max(*last);
                *last = at;
            }
            at
        };
        if self.is_down(to, deliver_time) {
            self.stats.messages_dropped += 1;
            return;
        }
        let env = Envelope {
            from,
            to,
            payload,
            send_time: self.now,
            deliver_time,
            seq,
        };
        self.push(deliver_time, Kind::Deliver(env));
    }
}
