use crate::trace::{EventKind, Trace};
use crate::value::{DecreeTag, Epoch, ValueId};
use std::collections::{BTreeMap, HashMap};

#[derive(Clone, Debug)]
pub struct Broadcast {
    pub p: usize,
    pub idx: usize,
    /// Primary epoch (index into [`Index::epochs`]) it was broadcast in.
    pub epoch: Option<usize>,
    /// Position among the epoch's broadcasts.
    pub pos: usize,
    pub instance: u64,
}

#[derive(Clone, Debug)]
pub struct Delivery {
    pub value: ValueId,
    pub idx: usize,
    pub instance: u64,
    pub epoch: Option<Epoch>,
    pub seqno: Option<u64>,
}

/// A maximal interval during which `isPrimary` held at one process.
#[derive(Clone, Debug)]
pub struct PrimaryEpoch {
    pub p: usize,
    pub begin: usize,
    pub end: Option<usize>,
    pub tau: Option<u64>,
    pub ballot: Option<u64>,
    pub epoch: Option<Epoch>,
    pub values: Vec<ValueId>,
}

#[derive(Clone, Debug)]
pub struct Decision {
    pub p: usize,
    pub idx: usize,
    pub decree: DecreeTag,
}

/// Structured view of a trace.
pub struct Index<'a> {
    pub trace: &'a Trace,
    pub n: usize,
    pub broadcasts: HashMap<ValueId, Broadcast>,
    pub deliveries: Vec<Vec<Delivery>>,
    pub epochs: Vec<PrimaryEpoch>,
    pub decisions: BTreeMap<u64, Vec<Decision>>,
    pub proposals: BTreeMap<u64, Vec<(usize, DecreeTag)>>,
    /// Barrier-free epoch establishment: (process, event index, epoch, instance).
    pub established: Vec<(usize, usize, Epoch, u64)>,
    /// Broadcasts that happened outside any primary epoch.
    pub stray: Vec<usize>,
}

impl<'a> Index<'a> {
    pub fn new(trace: &'a Trace) -> Self {
        let n = trace.meta.n as usize;
        let mut ix = Index {
            trace,
            n,
            broadcasts: HashMap::new(),
            deliveries: vec![Vec::new(); n],
            epochs: Vec::new(),
            decisions: BTreeMap::new(),
            proposals: BTreeMap::new(),
            established: Vec::new(),
            stray: Vec::new(),
        };
        let mut open: Vec<Option<usize>> = vec![None; n];
        for (idx, e) in trace.events.iter().enumerate() {
            let p = e.p as usize;
            if p >= n {
                continue;
            }
            match &e.kind {
                EventKind::PrimaryBegin { tau, ballot, epoch } => {
                    open[p] = Some(ix.epochs.len());
                    ix.epochs.push(PrimaryEpoch {
                        p,
                        begin: idx,
                        end: None,
                        tau: *tau,
                        ballot: *ballot,
                        epoch: *epoch,
                        values: Vec::new(),
                    });
                }
                EventKind::PrimaryEnd | EventKind::Crash => {
                    if let Some(k) = open[p].take() {
                        ix.epochs[k].end = Some(idx);
                    }
                }
                EventKind::Broadcast { value, instance } => {
                    let (epoch, pos) = match open[p] {
                        Some(k) => {
                            ix.epochs[k].values.push(*value);
                            (Some(k), ix.epochs[k].values.len() - 1)
                        }
                        None => {
                            ix.stray.push(idx);
                            (None, 0)
                        }
                    };
                    ix.broadcasts.insert(
                        *value,
                        Broadcast {
                            p,
                            idx,
                            epoch,
                            pos,
                            instance: *instance,
                        },
                    );
                }
                EventKind::Deliver {
                    value,
                    instance,
                    epoch,
                    seqno,
                } => ix.deliveries[p].push(Delivery {
                    value: *value,
                    idx,
                    instance: *instance,
                    epoch: *epoch,
                    seqno: *seqno,
                }),
                EventKind::Decide { instance, decree } => {
                    ix.decisions.entry(*instance).or_default().push(Decision {
                        p,
                        idx,
                        decree: *decree,
                    })
                }
                EventKind::Propose { instance, decree } => ix
                    .proposals
                    .entry(*instance)
                    .or_default()
                    .push((p, *decree)),
                EventKind::EpochEstablished { epoch, instance } => {
                    ix.established.push((p, idx, *epoch, *instance))
                }
                _ => {}
            }
        }
        ix
    }

    /// Epoch of a value's broadcast, if it was broadcast inside one.
    pub fn epoch_of(&self, v: &ValueId) -> Option<usize> {
        self.broadcasts.get(v).and_then(|b| b.epoch)
    }

    /// Instances at which some process decided `v`.
    pub fn decided_instances(&self) -> HashMap<ValueId, Vec<u64>> {
        let mut out: HashMap<ValueId, Vec<u64>> = HashMap::new();
        for (i, ds) in &self.decisions {
            if let Some(v) = ds.first().and_then(|d| d.decree.value()) {
                out.entry(v).or_default().push(*i);
            }
        }
        out
    }

    pub fn crash_time(&self, p: usize) -> Option<u64> {
        self.trace.meta.crash_time(p as u32)
    }

    pub fn correct(&self) -> Vec<usize> {
        (0..self.n)
            .filter(|p| self.crash_time(*p).is_none() && !self.halted(*p))
            .collect()
    }

    /// Whether `p` reached ⊥ and stopped.
    pub fn halted(&self, p: usize) -> bool {
        self.trace
            .events
            .iter()
            .any(|e| e.p as usize == p && matches!(e.kind, EventKind::Apply { ok: false, .. }))
    }
}
