use super::index::Index;
use super::{Property, Verdict};
use crate::protocol::Protocol;
use crate::trace::EventKind;
use crate::value::ValueId;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

/// Primary mapping: a rank for every primary epoch with a delivered value.
/// Lower ranks come first in the primary order.
#[derive(Clone, Debug, Default)]
pub struct Lambda {
    pub rank: HashMap<usize, u64>,
}

impl Lambda {
    pub fn of(&self, epoch: usize) -> Option<u64> {
        self.rank.get(&epoch).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LambdaError {
    Ambiguous {
        id: u64,
        epochs: [usize; 2],
        events: [usize; 2],
    },
    Missing {
        epoch: usize,
        event: usize,
    },
}

impl LambdaError {
    pub fn events(&self) -> Vec<usize> {
        match self {
            LambdaError::Ambiguous { events, .. } => events.to_vec(),
            LambdaError::Missing { event, .. } => vec![*event],
        }
    }
}

impl fmt::Display for LambdaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaError::Ambiguous { id, epochs, .. } => {
                write!(
                    f,
                    "primary epochs {} and {} both claim identifier {id}",
                    epochs[0], epochs[1]
                )
            }
            LambdaError::Missing { epoch, .. } => {
                write!(f, "primary epoch {epoch} has no identifier")
            }
        }
    }
}

/// Derives Λ the way each protocol's correctness argument does: the
/// instance of the delivered value for τ_seq, the ballot for τ_Paxos (and
/// the naive control), and the instance of the NEW-EPOCH decision for the
/// barrier-free protocol.
pub fn derive_primary_mapping(ix: &Index<'_>, protocol: Protocol) -> Result<Lambda, LambdaError> {
    let mut delivered: HashMap<usize, u64> = HashMap::new();
    for ds in &ix.deliveries {
        for d in ds {
            if let Some(k) = ix.epoch_of(&d.value) {
                let e = delivered.entry(k).or_insert(d.instance);
                *e = (*e).min(d.instance);
            }
        }
    }
    let established: HashMap<_, u64> = ix.established.iter().map(|(_, _, e, i)| (*e, *i)).collect();
    let mut lambda = Lambda::default();
    let mut owner: BTreeMap<u64, usize> = BTreeMap::new();
    let mut keys: Vec<usize> = delivered.keys().copied().collect();
    keys.sort_unstable();
    for k in keys {
        let ep = &ix.epochs[k];
        let id = match protocol {
            Protocol::TauSeq => Some(delivered[&k]),
            Protocol::TauPaxos | Protocol::AbcastNaive => ep.ballot,
            Protocol::BarrierFree => ep.epoch.and_then(|e| established.get(&e).copied()),
        };
        let id = id.ok_or(LambdaError::Missing {
            epoch: k,
            event: ep.begin,
        })?;
        if let Some(&other) = owner.get(&id) {
            return Err(LambdaError::Ambiguous {
                id,
                epochs: [other, k],
                events: [ix.epochs[other].begin, ep.begin],
            });
        }
        owner.insert(id, k);
        lambda.rank.insert(k, id);
    }
    Ok(lambda)
}

pub fn check(ix: &Index<'_>, lambda: &Lambda) -> Vec<Verdict> {
    vec![
        local_order(ix),
        global_order(ix, lambda),
        primary_integrity(ix, lambda),
    ]
}

/// Within one primary, values are delivered in broadcast order with no
/// value skipped.
fn local_order(ix: &Index<'_>) -> Verdict {
    for (p, ds) in ix.deliveries.iter().enumerate() {
        let mut next: HashMap<usize, usize> = HashMap::new();
        let mut seen = HashSet::new();
        for d in ds {
            let Some(b) = ix.broadcasts.get(&d.value) else {
                continue;
            };
            let Some(k) = b.epoch else { continue };
            if !seen.insert(d.value) {
                continue;
            }
            let want = next.entry(k).or_insert(0);
            if b.pos != *want {
                let missing = ix.epochs[k].values[*want];
                return Verdict::violated(
                    Property::LocalPrimaryOrder,
                    format!(
                        "p{p} delivers {} before {} of the same primary",
                        d.value, missing
                    ),
                    vec![ix.broadcasts[&missing].idx, b.idx, d.idx],
                );
            }
            *want += 1;
        }
    }
    Verdict::pass(Property::LocalPrimaryOrder)
}

fn rank_of(ix: &Index<'_>, lambda: &Lambda, v: &ValueId) -> Option<u64> {
    ix.epoch_of(v).and_then(|k| lambda.of(k))
}

/// Values of earlier primaries are delivered before values of later ones.
fn global_order(ix: &Index<'_>, lambda: &Lambda) -> Verdict {
    for (p, ds) in ix.deliveries.iter().enumerate() {
        let mut highest: Option<(u64, usize)> = None;
        for d in ds {
            let Some(r) = rank_of(ix, lambda, &d.value) else {
                continue;
            };
            if let Some((hr, hidx)) = highest {
                if r < hr {
                    return Verdict::violated(
                        Property::GlobalPrimaryOrder,
                        format!("p{p} delivers a value of primary {r} after one of primary {hr}"),
                        vec![hidx, d.idx],
                    );
                }
            }
            if highest.is_none_or(|(hr, _)| r > hr) {
                highest = Some((r, d.idx));
            }
        }
    }
    Verdict::pass(Property::GlobalPrimaryOrder)
}

/// A primary delivers every delivered value of earlier primaries before it
/// broadcasts anything.
fn primary_integrity(ix: &Index<'_>, lambda: &Lambda) -> Verdict {
    if let Some(&i) = ix.stray.first() {
        return Verdict::violated(
            Property::PrimaryIntegrity,
            "broadcast outside a primary epoch",
            vec![i],
        );
    }
    let mut delivered: Vec<(u64, ValueId, usize)> = Vec::new();
    let mut seen = HashSet::new();
    for ds in &ix.deliveries {
        for d in ds {
            if let Some(r) = rank_of(ix, lambda, &d.value) {
                if seen.insert(d.value) {
                    delivered.push((r, d.value, d.idx));
                }
            }
        }
    }
    for (&k, &r) in &lambda.rank {
        let ep = &ix.epochs[k];
        let Some(first) = ep.values.first() else {
            continue;
        };
        let bidx = ix.broadcasts[first].idx;
        let mine: HashMap<ValueId, usize> = ix.deliveries[ep.p]
            .iter()
            .map(|d| (d.value, d.idx))
            .collect();
        for (vr, v, didx) in &delivered {
            if *vr >= r {
                continue;
            }
            match mine.get(v) {
                Some(&at) if at < bidx => {}
                _ => {
                    return Verdict::violated(
                        Property::PrimaryIntegrity,
                        format!(
                            "primary {r} at p{} broadcasts {first} before delivering {v} of earlier primary {vr}",
                            ep.p
                        ),
                        vec![*didx, bidx],
                    )
                }
            }
        }
    }
    Verdict::pass(Property::PrimaryIntegrity)
}

/// τ must cover every instance at which a value proposed by an earlier
/// primary is decided. Only primaries with a delivered value are bound.
pub fn check_barrier(ix: &Index<'_>, lambda: &Lambda, protocol: Protocol) -> Verdict {
    if !matches!(
        protocol,
        Protocol::TauSeq | Protocol::TauPaxos | Protocol::AbcastNaive
    ) {
        return Verdict::skipped(Property::BarrierContract, "no barrier function");
    }
    let decided = ix.decided_instances();
    let mut undecided = 0;
    let mut by_rank: Vec<(u64, u64, usize)> = Vec::new();
    for (&k, &r) in &lambda.rank {
        for v in &ix.epochs[k].values {
            match decided.get(v) {
                Some(is) => {
                    let i = *is.iter().max().expect("non-empty");
                    let idx = ix.decisions[&i][0].idx;
                    by_rank.push((r, i, idx));
                }
                None => undecided += 1,
            }
        }
    }
    for (&k, &r) in &lambda.rank {
        let ep = &ix.epochs[k];
        let Some(tau) = ep.tau else {
            return Verdict::violated(
                Property::BarrierContract,
                "primary epoch without a τ value",
                vec![ep.begin],
            );
        };
        if let Some(&(er, i, idx)) = by_rank
            .iter()
            .filter(|(er, i, _)| *er < r && *i > tau)
            .max_by_key(|x| x.1)
        {
            return Verdict::violated(
                Property::BarrierContract,
                format!("primary {r} crossed with τ={tau}, but instance {i} decides a value of earlier primary {er}"),
                vec![ep.begin, idx],
            );
        }
    }
    let v = Verdict::pass(Property::BarrierContract);
    if undecided > 0 {
        v.with_note(format!(
            "{undecided} broadcast value(s) of mapped primaries undecided at the horizon"
        ))
    } else {
        v
    }
}

/// In τ_seq a primary never has more than one application value in flight.
pub fn check_sequential(ix: &Index<'_>) -> Verdict {
    // Per process: own values whose instance is not yet decided there.
    let mut open: Vec<Vec<(ValueId, u64, usize)>> = vec![Vec::new(); ix.n];
    for (idx, e) in ix.trace.events.iter().enumerate() {
        let p = e.p as usize;
        if p >= ix.n {
            continue;
        }
        match &e.kind {
            EventKind::Broadcast { value, instance } => {
                if let Some(&(other, _, oidx)) = open[p].first() {
                    return Verdict::violated(
                        Property::Sequentiality,
                        format!("p{p} broadcasts {value} while {other} is undecided"),
                        vec![oidx, idx],
                    );
                }
                open[p].push((*value, *instance, idx));
            }
            EventKind::Decide { instance, .. } => open[p].retain(|(_, i, _)| i != instance),
            _ => {}
        }
    }
    Verdict::pass(Property::Sequentiality)
}
