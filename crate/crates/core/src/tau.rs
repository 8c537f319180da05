//! τ-based POabcast: broadcast over consensus, gated by a barrier function.

use crate::broadcast::{consensus_trace, Delivery, Msg, NotPrimary, PoBroadcast, PrimaryInfo};
use crate::paxos::{Consensus, Decree, Dest, Driver, Phase, WhiteBoxConsensus};
use crate::sim::ProcessId;
use crate::trace::EventKind;
use crate::value::{Batch, ProtoValue};
use std::collections::BTreeSet;

/// Output of a barrier function. `Top` exceeds every instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tau {
    At(u64),
    Top,
}

impl Tau {
    pub fn crossed(self, dec: u64) -> bool {
        matches!(self, Tau::At(t) if dec >= t)
    }
}

pub trait Barrier<C> {
    fn tau(&self, c: &C, prop: u64, dec: u64, leader: bool) -> Tau;

    /// Whether a primary epoch abandons its undecided proposals when it
    /// ends and restarts `prop` from `dec` when it begins.
    fn fresh_epochs(&self) -> bool;

    /// Whether a `Top` to `At` transition while leader re-runs gap handling.
    fn retrigger(&self) -> bool {
        false
    }
}

/// `max(prop, dec)`. Needs nothing from consensus but its decisions.
#[derive(Clone, Copy, Debug, Default)]
pub struct TauSeq;

impl<C: Consensus<ProtoValue>> Barrier<C> for TauSeq {
    fn tau(&self, _c: &C, prop: u64, dec: u64, _leader: bool) -> Tau {
        Tau::At(prop.max(dec))
    }

    fn fresh_epochs(&self) -> bool {
        false
    }
}

/// `read(p)` once the leader is writing, `Top` otherwise.
#[derive(Clone, Copy, Debug, Default)]
pub struct TauPaxos;

impl<C: WhiteBoxConsensus<ProtoValue>> Barrier<C> for TauPaxos {
    fn tau(&self, c: &C, _prop: u64, _dec: u64, leader: bool) -> Tau {
        let obs = c.observe();
        if leader && obs.phase == Phase::Writing {
            Tau::At(obs.watermark)
        } else {
            Tau::Top
        }
    }

    fn fresh_epochs(&self) -> bool {
        true
    }

    fn retrigger(&self) -> bool {
        true
    }
}

/// No barrier at all: `isPrimary` degenerates to `Ω = p`. The unsafe
/// control variant.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoBarrier;

impl<C> Barrier<C> for NoBarrier {
    fn tau(&self, _c: &C, _prop: u64, _dec: u64, _leader: bool) -> Tau {
        Tau::At(0)
    }

    fn fresh_epochs(&self) -> bool {
        true
    }
}

pub struct TauLayer<B, C> {
    me: ProcessId,
    barrier: B,
    c: C,
    prop: u64,
    dec: u64,
    leader: bool,
    gap_pending: bool,
    was_top: bool,
    was_primary: bool,
    apps: BTreeSet<u64>,
    skips: BTreeSet<u64>,
    deliveries: Vec<Delivery>,
    trace: Vec<EventKind>,
}

impl<B, C> TauLayer<B, C>
where
    B: Barrier<C>,
    C: Consensus<ProtoValue> + Driver<ProtoValue>,
{
    pub fn new(me: ProcessId, barrier: B, consensus: C) -> Self {
        TauLayer {
            me,
            barrier,
            c: consensus,
            prop: 0,
            dec: 0,
            leader: false,
            gap_pending: false,
            was_top: true,
            was_primary: false,
            apps: BTreeSet::new(),
            skips: BTreeSet::new(),
            deliveries: Vec::new(),
            trace: Vec::new(),
        }
    }

    pub fn consensus(&self) -> &C {
        &self.c
    }

    pub fn prop(&self) -> u64 {
        self.prop
    }

    pub fn dec(&self) -> u64 {
        self.dec
    }

    pub fn tau(&self) -> Tau {
        self.barrier.tau(&self.c, self.prop, self.dec, self.leader)
    }

    fn consume(&mut self) {
        consensus_trace(&mut self.c, &mut self.trace);
        while let Some(d) = self.c.decision(self.dec + 1) {
            let i = self.dec + 1;
            match d {
                Decree::Value(ProtoValue::Skip { upto }) => self.dec = i.max(*upto),
                Decree::Value(ProtoValue::App(batch)) => {
                    self.trace.push(EventKind::Deliver {
                        value: batch.id,
                        instance: i,
                        epoch: None,
                        seqno: None,
                    });
                    self.deliveries.push(Delivery {
                        batch: batch.clone(),
                        instance: i,
                        epoch: None,
                        seqno: None,
                    });
                    self.dec = i;
                }
                _ => self.dec = i,
            }
        }
        let dec = self.dec;
        self.apps.retain(|i| *i > dec);
        self.skips.retain(|i| *i > dec);
    }

    fn gap_handling(&mut self) {
        let tau = self.tau();
        let top = tau == Tau::Top;
        if let Tau::At(t) = tau {
            if self.leader && (self.gap_pending || (self.barrier.retrigger() && self.was_top)) {
                self.gap_pending = false;
                for i in self.dec + 1..=t {
                    self.c.propose(i, ProtoValue::Skip { upto: t });
                    self.skips.insert(i);
                    self.trace.push(EventKind::SkipProposed {
                        instance: i,
                        tau: t,
                    });
                }
            }
        }
        self.was_top = top;
    }

    fn abandon(&mut self, set: BTreeSet<u64>) {
        for i in set {
            self.c.withdraw(i);
        }
    }
}

impl<B, C> PoBroadcast for TauLayer<B, C>
where
    B: Barrier<C>,
    C: Consensus<ProtoValue> + Driver<ProtoValue>,
{
    fn on_omega(&mut self, leader: ProcessId) {
        let now = leader == self.me;
        if now && !self.leader {
            self.gap_pending = true;
        }
        if !now && self.leader {
            self.gap_pending = false;
            let skips = std::mem::take(&mut self.skips);
            self.abandon(skips);
        }
        self.leader = now;
        self.c.on_omega(leader);
    }

    fn handle(&mut self, from: ProcessId, msg: Msg) {
        self.c.handle(from, msg);
    }

    fn poll(&mut self) {
        self.consume();
        self.gap_handling();
        let primary = self.is_primary();
        if primary != self.was_primary && self.barrier.fresh_epochs() {
            if primary {
                self.prop = self.dec;
            } else {
                let apps = std::mem::take(&mut self.apps);
                let skips = std::mem::take(&mut self.skips);
                self.abandon(apps);
                self.abandon(skips);
            }
        }
        self.was_primary = primary;
    }

    fn is_primary(&self) -> bool {
        self.leader && self.tau().crossed(self.dec)
    }

    fn poabcast(&mut self, batch: Batch) -> Result<u64, NotPrimary> {
        if !self.is_primary() {
            return Err(NotPrimary);
        }
        self.prop = (self.prop + 1).max(self.dec + 1);
        self.trace.push(EventKind::Broadcast {
            value: batch.id,
            instance: self.prop,
        });
        self.c.propose(self.prop, ProtoValue::App(batch));
        self.apps.insert(self.prop);
        Ok(self.prop)
    }

    fn outstanding(&self) -> usize {
        self.apps.len()
    }

    fn primary_info(&self) -> PrimaryInfo {
        let tau = match self.tau() {
            Tau::At(t) => Some(t),
            Tau::Top => None,
        };
        PrimaryInfo {
            tau,
            ballot: self.c.ballot().map(|b| b.0),
            epoch: None,
        }
    }

    fn drain_deliveries(&mut self) -> Vec<Delivery> {
        std::mem::take(&mut self.deliveries)
    }

    fn drain_trace(&mut self) -> Vec<EventKind> {
        let mut out = std::mem::take(&mut self.trace);
        consensus_trace(&mut self.c, &mut out);
        out
    }

    fn drain_outbox(&mut self) -> Vec<(Dest, Msg)> {
        self.c.drain_outbox()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paxos::{Mode, Paxos, PaxosConfig};
    use crate::value::ValueId;

    fn paxos(me: u32, mode: Mode) -> Paxos<ProtoValue> {
        Paxos::new(PaxosConfig {
            me: ProcessId(me),
            n: 3,
            first_instance: 1,
            mode,
            fill_gaps: false,
        })
    }

    fn batch(k: u64) -> Batch {
        Batch {
            id: ValueId(ProcessId(0), k),
            updates: vec![],
        }
    }

    /// Three layers in lockstep with instantaneous, ordered delivery.
    fn run<L: PoBroadcast>(layers: &mut [L]) {
        loop {
            let mut moved = false;
            for p in 0..layers.len() {
                layers[p].poll();
                for (dest, msg) in layers[p].drain_outbox() {
                    moved = true;
                    let tos: Vec<usize> = match dest {
                        Dest::All => (0..layers.len()).collect(),
                        Dest::Others => (0..layers.len()).filter(|q| *q != p).collect(),
                        Dest::To(q) => vec![q.index()],
                    };
                    for q in tos {
                        layers[q].handle(ProcessId(p as u32), msg.clone());
                        layers[q].poll();
                    }
                }
            }
            if !moved {
                return;
            }
        }
    }

    #[test]
    fn tau_values() {
        let l = TauLayer::new(ProcessId(0), TauSeq, paxos(0, Mode::Sequential));
        assert_eq!(l.tau(), Tau::At(0));
        assert!(Tau::At(0).crossed(0));
        assert!(!Tau::Top.crossed(u64::MAX));
        let l = TauLayer::new(ProcessId(0), TauPaxos, paxos(0, Mode::Parallel));
        assert_eq!(l.tau(), Tau::Top);
    }

    #[test]
    fn fresh_tau_seq_leader_is_primary_until_it_broadcasts() {
        let mut ls: Vec<_> = (0..3)
            .map(|p| TauLayer::new(ProcessId(p), TauSeq, paxos(p, Mode::Sequential)))
            .collect();
        for l in &mut ls {
            l.on_omega(ProcessId(0));
        }
        run(&mut ls);
        assert!(ls[0].is_primary());
        assert_eq!(ls[0].poabcast(batch(1)), Ok(1));
        assert!(!ls[0].is_primary(), "prop=1 > dec=0");
        assert_eq!(ls[0].poabcast(batch(2)), Err(NotPrimary));
        run(&mut ls);
        assert!(ls[0].is_primary());
        for l in &mut ls {
            let d = l.drain_deliveries();
            assert_eq!(d.len(), 1);
            assert_eq!(d[0].instance, 1);
        }
    }

    #[test]
    fn prop_skips_past_dec() {
        let mut ls: Vec<_> = (0..3)
            .map(|p| TauLayer::new(ProcessId(p), TauPaxos, paxos(p, Mode::Parallel)))
            .collect();
        for l in &mut ls {
            l.on_omega(ProcessId(0));
        }
        run(&mut ls);
        for k in 1..=5 {
            assert_eq!(ls[0].poabcast(batch(k)), Ok(k));
        }
        assert_eq!(ls[0].outstanding(), 5);
        run(&mut ls);
        assert_eq!(ls[1].drain_deliveries().len(), 5);
        assert_eq!(ls[0].dec(), 5);
    }

    #[test]
    fn tau_paxos_is_top_while_reading() {
        let mut l = TauLayer::new(ProcessId(0), TauPaxos, paxos(0, Mode::Parallel));
        l.on_omega(ProcessId(0));
        l.poll();
        assert_eq!(l.tau(), Tau::Top);
        assert!(!l.is_primary());
        assert_eq!(l.poabcast(batch(1)), Err(NotPrimary));
    }

    #[test]
    fn decided_skip_moves_dec_and_hides_values() {
        let mut l = TauLayer::new(ProcessId(1), TauSeq, paxos(1, Mode::Sequential));
        let mut feed = |i: u64, v: ProtoValue| {
            l.handle(
                ProcessId(0),
                Msg::Decided {
                    instance: i,
                    decree: Decree::Value(v),
                },
            );
            l.poll();
        };
        feed(1, ProtoValue::App(batch(1)));
        feed(2, ProtoValue::App(batch(2)));
        feed(3, ProtoValue::Skip { upto: 5 });
        feed(4, ProtoValue::App(batch(4)));
        feed(5, ProtoValue::App(batch(5)));
        feed(6, ProtoValue::App(batch(6)));
        let got: Vec<_> = l.drain_deliveries().iter().map(|d| d.instance).collect();
        assert_eq!(got, vec![1, 2, 6]);
        assert_eq!(l.dec(), 6);
    }

    #[test]
    fn out_of_order_decisions_are_buffered() {
        let mut l = TauLayer::new(ProcessId(1), TauSeq, paxos(1, Mode::Sequential));
        for i in [2, 1] {
            l.handle(
                ProcessId(0),
                Msg::Decided {
                    instance: i,
                    decree: Decree::Value(ProtoValue::App(batch(i))),
                },
            );
            l.poll();
        }
        let got: Vec<_> = l.drain_deliveries().iter().map(|d| d.instance).collect();
        assert_eq!(got, vec![1, 2]);
    }
}
