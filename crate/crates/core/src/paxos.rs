//! Multi-instance Paxos with a leader-wide promise.
//!
//! The black-box surface is [`Consensus`]: propose, withdraw, look up a
//! decision. [`WhiteBoxConsensus`] adds the one extra observation the
//! τ_Paxos barrier needs. A layer that only holds a `Consensus` bound
//! cannot see phase or watermark.
//!
//! Write-acks go to the ballot owner only; the owner broadcasts the
//! decision. Decisions reach correct processes because a handler's sends
//! are never lost unless the receiver crashes.
//!
//! Recovery after a read phase is one `Sync` message carrying every
//! recovered entry. An acceptor that takes it drops its own entries from
//! older ballots that the new leader did not recover, and reports the sync
//! in later read-acks. Those entries were provably never chosen; without
//! the cut a later leader could revive one after the syncing leader's
//! values, which reorders primaries.

use crate::sim::{ProcessId, WireSize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ballot(pub u64);

impl Ballot {
    /// Reported for decided instances so they win every pick.
    pub const DECIDED: Ballot = Ballot(u64::MAX);

    pub fn new(round: u64, owner: ProcessId, n: usize) -> Self {
        Ballot(round * n as u64 + owner.0 as u64)
    }

    pub fn round(self, n: usize) -> u64 {
        self.0 / n as u64
    }

    pub fn owner(self, n: usize) -> ProcessId {
        ProcessId((self.0 % n as u64) as u32)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decree<V> {
    /// Reserved filler, never delivered.
    NoOp,
    Value(V),
}

impl<V: WireSize> WireSize for Decree<V> {
    fn wire_size(&self) -> usize {
        match self {
            Decree::NoOp => 1,
            Decree::Value(v) => v.wire_size(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// At most one own proposal in flight.
    Sequential,
    Parallel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Idle,
    Reading,
    Writing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Observation {
    pub phase: Phase,
    /// Highest instance for which the last read picked a value.
    pub watermark: u64,
}

/// `(ballot, from)` of the last sync an acceptor took.
pub type SyncMark = Option<(Ballot, u64)>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PaxosMsg<V> {
    Read {
        ballot: Ballot,
        from: u64,
    },
    ReadAck {
        ballot: Ballot,
        synced: SyncMark,
        accepted: Vec<(u64, Ballot, Decree<V>)>,
    },
    Sync {
        ballot: Ballot,
        from: u64,
        entries: Vec<(u64, Decree<V>)>,
    },
    SyncAck {
        ballot: Ballot,
    },
    Write {
        ballot: Ballot,
        instance: u64,
        decree: Decree<V>,
    },
    WriteAck {
        ballot: Ballot,
        instance: u64,
    },
    Nack {
        ballot: Ballot,
        promised: Ballot,
    },
    Decided {
        instance: u64,
        decree: Decree<V>,
    },
}

impl<V: WireSize> WireSize for PaxosMsg<V> {
    fn wire_size(&self) -> usize {
        match self {
            PaxosMsg::Read { .. }
            | PaxosMsg::WriteAck { .. }
            | PaxosMsg::SyncAck { .. }
            | PaxosMsg::Nack { .. } => 24,
            PaxosMsg::ReadAck { accepted, .. } => {
                40 + accepted
                    .iter()
                    .map(|(_, _, d)| 16 + d.wire_size())
                    .sum::<usize>()
            }
            PaxosMsg::Sync { entries, .. } => {
                24 + entries
                    .iter()
                    .map(|(_, d)| 8 + d.wire_size())
                    .sum::<usize>()
            }
            PaxosMsg::Write { decree, .. } => 24 + decree.wire_size(),
            // Learners already hold the accepted value; only the id travels.
            PaxosMsg::Decided { .. } => 16,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dest {
    All,
    Others,
    To(ProcessId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PaxosEvent {
    ReadPhase {
        ballot: Ballot,
    },
    WritePhase {
        ballot: Ballot,
        watermark: u64,
    },
    /// A write went out; the decree is available through [`Paxos::written`].
    Propose {
        instance: u64,
    },
    Decided {
        instance: u64,
    },
}

#[derive(Clone, Debug)]
pub struct PaxosConfig {
    pub me: ProcessId,
    pub n: usize,
    pub first_instance: u64,
    pub mode: Mode,
    /// Fill read-phase gaps with no-ops instead of leaving them to the
    /// layer above.
    pub fill_gaps: bool,
}

pub trait Consensus<V> {
    /// `propose(v, i)`. Proposals made outside the write phase are held
    /// until it is reached, across ballots; a second proposal for the same
    /// instance is ignored.
    fn propose(&mut self, instance: u64, value: V);
    /// Abandons a not-yet-decided own proposal.
    fn withdraw(&mut self, instance: u64);
    fn decision(&self, instance: u64) -> Option<&Decree<V>>;
}

pub trait WhiteBoxConsensus<V>: Consensus<V> {
    fn observe(&self) -> Observation;
}

/// Event plumbing shared by every consensus implementation a broadcast
/// layer can sit on.
pub trait Driver<V> {
    fn on_omega(&mut self, leader: ProcessId);
    fn handle(&mut self, from: ProcessId, msg: PaxosMsg<V>);
    fn drain_outbox(&mut self) -> Vec<(Dest, PaxosMsg<V>)>;
    fn drain_events(&mut self) -> Vec<PaxosEvent>;
    fn written(&self, instance: u64) -> Option<&Decree<V>>;
    fn ballot(&self) -> Option<Ballot>;
}

pub struct Paxos<V> {
    cfg: PaxosConfig,
    // acceptor
    promised: Option<Ballot>,
    synced: SyncMark,
    accepted: BTreeMap<u64, (Ballot, Decree<V>)>,
    /// Writes for the promised ballot that overtook its sync.
    early: Vec<(ProcessId, Ballot, u64, Decree<V>)>,
    // learner
    decided: BTreeMap<u64, Decree<V>>,
    next_undecided: u64,
    // leader
    leading: bool,
    max_round: u64,
    ballot: Option<Ballot>,
    phase: Phase,
    read_from: u64,
    read_acks: BTreeMap<ProcessId, (SyncMark, Vec<(u64, Ballot, Decree<V>)>)>,
    watermark: u64,
    sync_acks: BTreeSet<ProcessId>,
    synced_entries: BTreeSet<u64>,
    written: BTreeMap<u64, Decree<V>>,
    write_acks: BTreeMap<u64, BTreeSet<ProcessId>>,
    own: BTreeMap<u64, V>,
    own_inflight: BTreeSet<u64>,
    outbox: Vec<(Dest, PaxosMsg<V>)>,
    events: Vec<PaxosEvent>,
}

impl<V: Clone + PartialEq> Paxos<V> {
    pub fn new(cfg: PaxosConfig) -> Self {
        let next_undecided = cfg.first_instance;
        Paxos {
            cfg,
            promised: None,
            synced: None,
            accepted: BTreeMap::new(),
            early: Vec::new(),
            decided: BTreeMap::new(),
            next_undecided,
            leading: false,
            max_round: 0,
            ballot: None,
            phase: Phase::Idle,
            read_from: 0,
            read_acks: BTreeMap::new(),
            watermark: 0,
            sync_acks: BTreeSet::new(),
            synced_entries: BTreeSet::new(),
            written: BTreeMap::new(),
            write_acks: BTreeMap::new(),
            own: BTreeMap::new(),
            own_inflight: BTreeSet::new(),
            outbox: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn config(&self) -> &PaxosConfig {
        &self.cfg
    }

    pub fn quorum(&self) -> usize {
        self.cfg.n / 2 + 1
    }

    pub fn ballot(&self) -> Option<Ballot> {
        self.ballot
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn lowest_undecided(&self) -> u64 {
        self.next_undecided
    }

    pub fn written(&self, instance: u64) -> Option<&Decree<V>> {
        self.written.get(&instance)
    }

    pub fn own_proposals(&self) -> impl Iterator<Item = (&u64, &V)> {
        self.own.iter()
    }

    /// Own proposals with a write outstanding under the current ballot.
    pub fn inflight(&self) -> usize {
        self.own_inflight.len()
    }

    pub fn drain_outbox(&mut self) -> Vec<(Dest, PaxosMsg<V>)> {
        std::mem::take(&mut self.outbox)
    }

    pub fn drain_events(&mut self) -> Vec<PaxosEvent> {
        std::mem::take(&mut self.events)
    }

    /// Ω at this process changed.
    pub fn on_omega(&mut self, leader: ProcessId) {
        let me = leader == self.cfg.me;
        if me && !self.leading {
            self.leading = true;
            self.begin_read();
        } else if !me && self.leading {
            self.leading = false;
            self.step_down();
        }
    }

    fn step_down(&mut self) {
        self.phase = Phase::Idle;
        self.ballot = None;
        self.watermark = 0;
        self.read_acks.clear();
        self.sync_acks.clear();
        self.synced_entries.clear();
        self.written.clear();
        self.write_acks.clear();
        self.own_inflight.clear();
    }

    fn observe_ballot(&mut self, b: Ballot) {
        if b != Ballot::DECIDED {
            self.max_round = self.max_round.max(b.round(self.cfg.n));
        }
    }

    /// Starts a read phase with a ballot above every one seen so far.
    pub fn begin_read(&mut self) {
        self.step_down();
        self.max_round += 1;
        let b = Ballot::new(self.max_round, self.cfg.me, self.cfg.n);
        self.ballot = Some(b);
        self.phase = Phase::Reading;
        self.read_from = self.next_undecided;
        self.events.push(PaxosEvent::ReadPhase { ballot: b });
        self.outbox.push((
            Dest::All,
            PaxosMsg::Read {
                ballot: b,
                from: self.read_from,
            },
        ));
    }

    pub fn handle(&mut self, from: ProcessId, msg: PaxosMsg<V>) {
        match msg {
            PaxosMsg::Read { ballot, from: lo } => self.on_read(from, ballot, lo),
            PaxosMsg::ReadAck {
                ballot,
                synced,
                accepted,
            } => self.on_read_ack(from, ballot, synced, accepted),
            PaxosMsg::Sync {
                ballot,
                from: lo,
                entries,
            } => self.on_sync(from, ballot, lo, entries),
            PaxosMsg::SyncAck { ballot } => self.on_sync_ack(from, ballot),
            PaxosMsg::Write {
                ballot,
                instance,
                decree,
            } => self.on_write(from, ballot, instance, decree),
            PaxosMsg::WriteAck { ballot, instance } => self.on_write_ack(from, ballot, instance),
            PaxosMsg::Nack { ballot, promised } => self.on_nack(ballot, promised),
            PaxosMsg::Decided { instance, decree } => self.learn(instance, decree),
        }
    }

    /// Raises the promise to `ballot`, or nacks and returns false.
    fn promise(&mut self, from: ProcessId, ballot: Ballot) -> bool {
        self.observe_ballot(ballot);
        if let Some(p) = self.promised.filter(|p| ballot < *p) {
            self.outbox.push((
                Dest::To(from),
                PaxosMsg::Nack {
                    ballot,
                    promised: p,
                },
            ));
            return false;
        }
        if self.promised != Some(ballot) {
            self.early.clear();
        }
        self.promised = Some(ballot);
        true
    }

    fn on_read(&mut self, from: ProcessId, ballot: Ballot, lo: u64) {
        if !self.promise(from, ballot) {
            return;
        }
        let mut report: Vec<_> = self
            .accepted
            .range(lo..)
            .map(|(i, (b, d))| (*i, *b, d.clone()))
            .collect();
        report.extend(
            self.decided
                .range(lo..)
                .map(|(i, d)| (*i, Ballot::DECIDED, d.clone())),
        );
        report.sort_by_key(|r| r.0);
        let synced = self.synced;
        self.outbox.push((
            Dest::To(from),
            PaxosMsg::ReadAck {
                ballot,
                synced,
                accepted: report,
            },
        ));
    }

    fn on_read_ack(
        &mut self,
        from: ProcessId,
        ballot: Ballot,
        synced: SyncMark,
        accepted: Vec<(u64, Ballot, Decree<V>)>,
    ) {
        if self.phase != Phase::Reading || self.ballot != Some(ballot) {
            return;
        }
        self.read_acks.insert(from, (synced, accepted));
        if self.read_acks.len() >= self.quorum() {
            self.complete_read();
        }
    }

    fn complete_read(&mut self) {
        let ballot = self.ballot.expect("reading has a ballot");
        let acks = std::mem::take(&mut self.read_acks);
        // Entries older than the newest reported sync, at or above its
        // start, were cut by that sync.
        let cut = acks.values().filter_map(|(s, _)| *s).max();
        let mut picked: BTreeMap<u64, (Ballot, Decree<V>)> = BTreeMap::new();
        for (i, b, d) in acks.into_values().flat_map(|(_, a)| a) {
            if i < self.read_from {
                continue;
            }
            if let Some((cb, cfrom)) = cut {
                if b < cb && i >= cfrom {
                    continue;
                }
            }
            match picked.get(&i) {
                Some((pb, _)) if *pb >= b => {}
                _ => {
                    picked.insert(i, (b, d));
                }
            }
        }
        for (i, (b, d)) in &picked {
            if *b == Ballot::DECIDED {
                self.learn(*i, d.clone());
            }
        }
        // Instances below the read start are already decided here.
        let below = self.read_from.saturating_sub(1);
        self.watermark = picked.keys().next_back().copied().unwrap_or(0).max(below);
        let mut entries = Vec::new();
        if let Some(&top) = picked.keys().next_back() {
            for i in self.read_from..=top {
                if self.decided.contains_key(&i) {
                    continue;
                }
                let decree = if let Some((_, d)) = picked.remove(&i) {
                    d
                } else if let Some(v) = self.own.get(&i) {
                    self.own_inflight.insert(i);
                    Decree::Value(v.clone())
                } else if self.cfg.fill_gaps {
                    Decree::NoOp
                } else {
                    continue;
                };
                entries.push((i, decree));
            }
        }
        self.phase = Phase::Writing;
        self.events.push(PaxosEvent::WritePhase {
            ballot,
            watermark: self.watermark,
        });
        for (i, d) in &entries {
            self.written.insert(*i, d.clone());
            self.synced_entries.insert(*i);
            self.events.push(PaxosEvent::Propose { instance: *i });
        }
        self.outbox.push((
            Dest::All,
            PaxosMsg::Sync {
                ballot,
                from: self.read_from,
                entries,
            },
        ));
        self.pump();
    }

    fn on_sync(
        &mut self,
        from: ProcessId,
        ballot: Ballot,
        lo: u64,
        entries: Vec<(u64, Decree<V>)>,
    ) {
        if !self.promise(from, ballot) {
            return;
        }
        let keep: BTreeSet<u64> = entries.iter().map(|(i, _)| *i).collect();
        self.accepted
            .retain(|i, (b, _)| *i < lo || *b >= ballot || keep.contains(i));
        for (i, d) in entries {
            if !self.decided.contains_key(&i) {
                self.accepted.insert(i, (ballot, d));
            }
        }
        self.synced = Some((ballot, lo));
        self.outbox
            .push((Dest::To(from), PaxosMsg::SyncAck { ballot }));
        for (f, b, i, d) in std::mem::take(&mut self.early) {
            self.on_write(f, b, i, d);
        }
    }

    fn on_sync_ack(&mut self, from: ProcessId, ballot: Ballot) {
        if self.phase != Phase::Writing || self.ballot != Some(ballot) {
            return;
        }
        self.sync_acks.insert(from);
        if self.sync_acks.len() == self.quorum() {
            let done: Vec<_> = std::mem::take(&mut self.synced_entries)
                .into_iter()
                .filter_map(|i| self.written.get(&i).map(|d| (i, d.clone())))
                .collect();
            for (instance, decree) in done {
                self.outbox.push((
                    Dest::Others,
                    PaxosMsg::Decided {
                        instance,
                        decree: decree.clone(),
                    },
                ));
                self.learn(instance, decree);
            }
        }
    }

    /// Sends own proposals that are not yet in flight, respecting the mode.
    fn pump(&mut self) {
        if self.phase != Phase::Writing {
            return;
        }
        let ballot = self.ballot.expect("writing has a ballot");
        let ready: Vec<u64> = self
            .own
            .keys()
            .copied()
            .filter(|i| !self.written.contains_key(i) && !self.decided.contains_key(i))
            .collect();
        for instance in ready {
            if self.cfg.mode == Mode::Sequential && !self.own_inflight.is_empty() {
                break;
            }
            let decree = Decree::Value(self.own[&instance].clone());
            self.own_inflight.insert(instance);
            self.written.insert(instance, decree.clone());
            self.write_acks.insert(instance, BTreeSet::new());
            self.events.push(PaxosEvent::Propose { instance });
            self.outbox.push((
                Dest::All,
                PaxosMsg::Write {
                    ballot,
                    instance,
                    decree,
                },
            ));
        }
    }

    fn on_write(&mut self, from: ProcessId, ballot: Ballot, instance: u64, decree: Decree<V>) {
        if !self.promise(from, ballot) {
            return;
        }
        if self.synced.map(|s| s.0) != Some(ballot) {
            self.early.push((from, ballot, instance, decree));
            return;
        }
        if !self.decided.contains_key(&instance) {
            self.accepted.insert(instance, (ballot, decree));
        }
        self.outbox
            .push((Dest::To(from), PaxosMsg::WriteAck { ballot, instance }));
    }

    fn on_write_ack(&mut self, from: ProcessId, ballot: Ballot, instance: u64) {
        if self.phase != Phase::Writing || self.ballot != Some(ballot) {
            return;
        }
        let Some(acks) = self.write_acks.get_mut(&instance) else {
            return;
        };
        acks.insert(from);
        if acks.len() >= self.quorum() {
            let decree = self.written[&instance].clone();
            self.outbox.push((
                Dest::Others,
                PaxosMsg::Decided {
                    instance,
                    decree: decree.clone(),
                },
            ));
            self.learn(instance, decree);
        }
    }

    fn on_nack(&mut self, ballot: Ballot, promised: Ballot) {
        self.observe_ballot(promised);
        if self.ballot != Some(ballot) || self.phase == Phase::Idle {
            return;
        }
        if self.leading {
            self.begin_read();
        } else {
            self.step_down();
        }
    }

    fn learn(&mut self, instance: u64, decree: Decree<V>) {
        if self.decided.contains_key(&instance) {
            return;
        }
        self.accepted.remove(&instance);
        self.written.remove(&instance);
        self.write_acks.remove(&instance);
        self.synced_entries.remove(&instance);
        self.own_inflight.remove(&instance);
        self.own.remove(&instance);
        self.decided.insert(instance, decree);
        while self.decided.contains_key(&self.next_undecided) {
            self.next_undecided += 1;
        }
        self.events.push(PaxosEvent::Decided { instance });
        self.pump();
    }
}

impl<V: Clone + PartialEq> Consensus<V> for Paxos<V> {
    fn propose(&mut self, instance: u64, value: V) {
        if instance < self.cfg.first_instance
            || self.decided.contains_key(&instance)
            || self.own.contains_key(&instance)
            || self.written.contains_key(&instance)
        {
            return;
        }
        self.own.insert(instance, value);
        self.pump();
    }

    fn withdraw(&mut self, instance: u64) {
        self.own.remove(&instance);
    }

    fn decision(&self, instance: u64) -> Option<&Decree<V>> {
        self.decided.get(&instance)
    }
}

impl<V: Clone + PartialEq> Driver<V> for Paxos<V> {
    fn on_omega(&mut self, leader: ProcessId) {
        Paxos::on_omega(self, leader)
    }
    fn handle(&mut self, from: ProcessId, msg: PaxosMsg<V>) {
        Paxos::handle(self, from, msg)
    }
    fn drain_outbox(&mut self) -> Vec<(Dest, PaxosMsg<V>)> {
        Paxos::drain_outbox(self)
    }
    fn drain_events(&mut self) -> Vec<PaxosEvent> {
        Paxos::drain_events(self)
    }
    fn written(&self, instance: u64) -> Option<&Decree<V>> {
        Paxos::written(self, instance)
    }
    fn ballot(&self) -> Option<Ballot> {
        Paxos::ballot(self)
    }
}

impl<V: Clone + PartialEq> WhiteBoxConsensus<V> for Paxos<V> {
    fn observe(&self) -> Observation {
        if !self.leading {
            return Observation {
                phase: Phase::Idle,
                watermark: 0,
            };
        }
        let watermark = if self.phase == Phase::Writing {
            self.watermark
        } else {
            0
        };
        Observation {
            phase: self.phase,
            watermark,
        }
    }
}
