//! Barrier-free POabcast: primaries are elected through consensus itself
//! by deciding a NEW-EPOCH tuple; values travel as VAL tuples tagged with
//! the sender's epoch and a sequence number.
//!
//! Variable names follow the pseudocode. In the correctness lemmas the
//! same state is called `da` (dec-array), `ta` (prop-array), `ls`
//! (seqno/prop) and `s` (deliv-seqno).

use crate::broadcast::{consensus_trace, Delivery, Msg, NotPrimary, PoBroadcast, PrimaryInfo};
use crate::paxos::{Consensus, Decree, Dest, Driver};
use crate::sim::ProcessId;
use crate::trace::EventKind;
use crate::value::{Batch, Epoch, ProtoValue};
use std::collections::BTreeMap;

pub struct BarrierFree<C> {
    me: ProcessId,
    n: usize,
    c: C,
    leader: bool,
    attempts: u64,
    tent_epoch: Option<Epoch>,
    epoch: Option<Epoch>,
    dec: u64,
    prop: u64,
    seqno: u64,
    deliv_seqno: u64,
    dec_array: BTreeMap<u64, (Batch, u64)>,
    prop_array: BTreeMap<u64, (Batch, u64)>,
    primary: bool,
    deliveries: Vec<Delivery>,
    trace: Vec<EventKind>,
}

impl<C> BarrierFree<C>
where
    C: Consensus<ProtoValue> + Driver<ProtoValue>,
{
    pub fn new(me: ProcessId, n: usize, consensus: C) -> Self {
        BarrierFree {
            me,
            n,
            c: consensus,
            leader: false,
            attempts: 0,
            tent_epoch: None,
            epoch: None,
            dec: 0,
            prop: 0,
            seqno: 0,
            deliv_seqno: 0,
            dec_array: BTreeMap::new(),
            prop_array: BTreeMap::new(),
            primary: false,
            deliveries: Vec::new(),
            trace: Vec::new(),
        }
    }

    pub fn consensus(&self) -> &C {
        &self.c
    }

    pub fn epoch(&self) -> Option<Epoch> {
        self.epoch
    }

    pub fn dec(&self) -> u64 {
        self.dec
    }

    pub fn prop(&self) -> u64 {
        self.prop
    }

    pub fn deliv_seqno(&self) -> u64 {
        self.deliv_seqno
    }

    pub fn prop_array_len(&self) -> usize {
        self.prop_array.len()
    }

    fn try_primary(&mut self) {
        let e = Epoch::new(self.attempts, self.me, self.n);
        self.attempts += 1;
        self.tent_epoch = Some(e);
        self.c.propose(self.dec, ProtoValue::NewEpoch { epoch: e });
        self.trace.push(EventKind::NewEpochProposed {
            epoch: e,
            instance: self.dec,
        });
    }

    fn on_new_epoch(&mut self, e: Epoch) {
        let at = self.dec;
        self.dec += 1;
        self.epoch = Some(e);
        self.dec_array.clear();
        self.prop_array.clear();
        self.deliv_seqno = self.dec;
        self.trace.push(EventKind::EpochEstablished {
            epoch: e,
            instance: at,
        });
        if self.leader {
            if self.tent_epoch == Some(e) {
                self.prop = self.dec;
                self.seqno = self.dec;
                self.primary = true;
            } else {
                self.primary = false;
                self.try_primary();
            }
        }
    }

    /// A VAL decision, or a no-op, which behaves like a VAL from an epoch
    /// that is never current.
    fn on_val(&mut self, val: Option<(Batch, Epoch, u64)>) {
        let mut foreign = true;
        if let Some((batch, e, s)) = val {
            if Some(e) == self.epoch {
                foreign = false;
                if s >= self.deliv_seqno {
                    self.dec_array.insert(s, (batch, self.dec));
                }
                while let Some((b, instance)) = self.dec_array.remove(&self.deliv_seqno) {
                    let seqno = Some(self.deliv_seqno);
                    self.trace.push(EventKind::Deliver {
                        value: b.id,
                        instance,
                        epoch: Some(e),
                        seqno,
                    });
                    self.deliveries.push(Delivery {
                        batch: b,
                        instance,
                        epoch: Some(e),
                        seqno,
                    });
                    self.deliv_seqno += 1;
                }
            }
        }
        if self.primary && foreign {
            if let Some((b, s)) = self.prop_array.get(&self.dec).cloned() {
                let epoch = self.epoch.expect("primary has an epoch");
                self.trace.push(EventKind::ValResent {
                    value: b.id,
                    epoch,
                    seqno: s,
                    instance: self.prop,
                });
                self.c.propose(
                    self.prop,
                    ProtoValue::Val {
                        batch: b.clone(),
                        epoch,
                        seqno: s,
                    },
                );
                self.prop_array.insert(self.prop, (b, s));
                self.prop += 1;
            }
        }
        self.dec += 1;
        if self.primary && self.prop < self.dec {
            self.prop = self.dec;
        }
        if !self.primary && self.leader {
            self.try_primary();
        }
    }

    fn consume(&mut self) {
        consensus_trace(&mut self.c, &mut self.trace);
        while let Some(d) = self.c.decision(self.dec) {
            match d.clone() {
                Decree::Value(ProtoValue::NewEpoch { epoch }) => self.on_new_epoch(epoch),
                Decree::Value(ProtoValue::Val {
                    batch,
                    epoch,
                    seqno,
                }) => self.on_val(Some((batch, epoch, seqno))),
                _ => self.on_val(None),
            }
        }
        let dec = self.dec;
        self.prop_array.retain(|i, _| *i >= dec);
    }
}

impl<C> PoBroadcast for BarrierFree<C>
where
    C: Consensus<ProtoValue> + Driver<ProtoValue>,
{
    fn on_omega(&mut self, leader: ProcessId) {
        let now = leader == self.me;
        let was = self.leader;
        self.leader = now;
        self.c.on_omega(leader);
        if now && !was {
            self.try_primary();
        }
        if !now && was {
            self.primary = false;
        }
    }

    fn handle(&mut self, from: ProcessId, msg: Msg) {
        self.c.handle(from, msg);
    }

    fn poll(&mut self) {
        self.consume();
    }

    fn is_primary(&self) -> bool {
        self.primary
    }

    fn poabcast(&mut self, batch: Batch) -> Result<u64, NotPrimary> {
        if !self.primary {
            return Err(NotPrimary);
        }
        let epoch = self.epoch.expect("primary has an epoch");
        let at = self.prop;
        self.trace.push(EventKind::Broadcast {
            value: batch.id,
            instance: at,
        });
        self.trace.push(EventKind::ValProposed {
            value: batch.id,
            epoch,
            seqno: self.seqno,
            instance: at,
        });
        self.c.propose(
            at,
            ProtoValue::Val {
                batch: batch.clone(),
                epoch,
                seqno: self.seqno,
            },
        );
        self.prop_array.insert(at, (batch, self.seqno));
        self.prop += 1;
        self.seqno += 1;
        Ok(at)
    }

    fn outstanding(&self) -> usize {
        if self.primary {
            (self.seqno - self.deliv_seqno) as usize
        } else {
            0
        }
    }

    fn primary_info(&self) -> PrimaryInfo {
        PrimaryInfo {
            tau: None,
            ballot: self.c.ballot().map(|b| b.0),
            epoch: self.epoch,
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

    fn layer(me: u32) -> BarrierFree<Paxos<ProtoValue>> {
        let px = Paxos::new(PaxosConfig {
            me: ProcessId(me),
            n: 3,
            first_instance: 0,
            mode: Mode::Parallel,
            fill_gaps: true,
        });
        BarrierFree::new(ProcessId(me), 3, px)
    }

    fn batch(k: u64) -> Batch {
        Batch {
            id: ValueId(ProcessId(0), k),
            updates: vec![],
        }
    }

    fn decide(l: &mut BarrierFree<Paxos<ProtoValue>>, i: u64, v: ProtoValue) {
        l.handle(
            ProcessId(2),
            Msg::Decided {
                instance: i,
                decree: Decree::Value(v),
            },
        );
        l.poll();
    }

    #[test]
    fn own_epoch_established_makes_primary() {
        let mut l = layer(1);
        l.on_omega(ProcessId(1));
        let e = Epoch::new(0, ProcessId(1), 3);
        assert_eq!(
            l.drain_trace()[0],
            EventKind::NewEpochProposed {
                epoch: e,
                instance: 0
            }
        );
        decide(&mut l, 0, ProtoValue::App(batch(0)));
        // Lost instance 0; retried at 1 with a fresh epoch.
        let e1 = Epoch::new(1, ProcessId(1), 3);
        assert!(l.drain_trace().contains(&EventKind::NewEpochProposed {
            epoch: e1,
            instance: 1
        }));
        decide(&mut l, 1, ProtoValue::NewEpoch { epoch: e1 });
        assert!(l.is_primary());
        assert_eq!((l.dec(), l.prop(), l.deliv_seqno()), (2, 2, 2));
        let at: Vec<_> = (0..3).map(|k| l.poabcast(batch(k)).unwrap()).collect();
        assert_eq!(at, vec![2, 3, 4]);
    }

    #[test]
    fn follower_buffers_out_of_order_values() {
        let mut l = layer(2);
        let e = Epoch(7);
        decide(&mut l, 0, ProtoValue::NewEpoch { epoch: e });
        assert!(!l.is_primary());
        assert_eq!(l.deliv_seqno(), 1);
        decide(
            &mut l,
            1,
            ProtoValue::Val {
                batch: batch(2),
                epoch: e,
                seqno: 2,
            },
        );
        assert!(l.drain_deliveries().is_empty());
        decide(
            &mut l,
            2,
            ProtoValue::Val {
                batch: batch(1),
                epoch: e,
                seqno: 1,
            },
        );
        let got: Vec<_> = l
            .drain_deliveries()
            .iter()
            .map(|d| (d.batch.id.1, d.seqno.unwrap()))
            .collect();
        assert_eq!(got, vec![(1, 1), (2, 2)]);
    }

    #[test]
    fn stale_value_is_ignored_and_skipped_value_resent() {
        let mut l = layer(0);
        l.on_omega(ProcessId(0));
        let e = Epoch::new(0, ProcessId(0), 3);
        decide(&mut l, 0, ProtoValue::NewEpoch { epoch: e });
        assert!(l.is_primary());
        l.poabcast(batch(10)).unwrap(); // instance 1, seqno 1
        l.poabcast(batch(11)).unwrap(); // instance 2, seqno 2
        l.drain_trace();
        decide(
            &mut l,
            1,
            ProtoValue::Val {
                batch: batch(99),
                epoch: Epoch(5),
                seqno: 4,
            },
        );
        let tr = l.drain_trace();
        assert!(
            tr.contains(&EventKind::ValResent {
                value: batch(10).id,
                epoch: e,
                seqno: 1,
                instance: 3
            }),
            "{tr:?}"
        );
        assert_eq!(
            l.consensus()
                .own_proposals()
                .map(|(i, _)| *i)
                .collect::<Vec<_>>(),
            vec![2, 3]
        );
        decide(
            &mut l,
            2,
            ProtoValue::Val {
                batch: batch(11),
                epoch: e,
                seqno: 2,
            },
        );
        decide(
            &mut l,
            3,
            ProtoValue::Val {
                batch: batch(10),
                epoch: e,
                seqno: 1,
            },
        );
        let got: Vec<_> = l.drain_deliveries().iter().map(|d| d.batch.id.1).collect();
        assert_eq!(got, vec![10, 11]);
    }

    #[test]
    fn omega_loss_clears_primary() {
        let mut l = layer(0);
        l.on_omega(ProcessId(0));
        decide(
            &mut l,
            0,
            ProtoValue::NewEpoch {
                epoch: Epoch::new(0, ProcessId(0), 3),
            },
        );
        assert!(l.is_primary());
        l.on_omega(ProcessId(1));
        assert!(!l.is_primary());
        assert_eq!(l.poabcast(batch(1)), Err(NotPrimary));
    }

    #[test]
    fn prop_never_targets_decided_instance() {
        let mut l = layer(0);
        l.on_omega(ProcessId(0));
        decide(
            &mut l,
            0,
            ProtoValue::NewEpoch {
                epoch: Epoch::new(0, ProcessId(0), 3),
            },
        );
        decide(
            &mut l,
            1,
            ProtoValue::Val {
                batch: batch(5),
                epoch: Epoch(40),
                seqno: 9,
            },
        );
        assert_eq!(l.poabcast(batch(1)), Ok(2));
    }
}
