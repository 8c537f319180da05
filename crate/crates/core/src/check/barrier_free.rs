//! Invariants specific to the barrier-free protocol, taken from its
//! correctness lemmas.

use super::index::Index;
use super::{Property, Verdict};
use crate::trace::EventKind;
use crate::value::{Epoch, ValueId};
use std::collections::HashMap;

pub fn check(ix: &Index<'_>) -> Vec<Verdict> {
    vec![gap_free(ix), symmetry(ix), epoch_order(ix)]
}

/// Each process delivers the values of its current epoch with consecutive
/// sequence numbers starting right after the NEW-EPOCH instance.
fn gap_free(ix: &Index<'_>) -> Verdict {
    let mut current: Vec<Option<(Epoch, u64)>> = vec![None; ix.n];
    for (idx, e) in ix.trace.events.iter().enumerate() {
        let p = e.p as usize;
        if p >= ix.n {
            continue;
        }
        match &e.kind {
            EventKind::EpochEstablished { epoch, instance } => {
                current[p] = Some((*epoch, instance + 1))
            }
            EventKind::Deliver {
                value,
                epoch,
                seqno,
                ..
            } => {
                let (Some(de), Some(s)) = (epoch, seqno) else {
                    return Verdict::violated(
                        Property::EpochGapFree,
                        format!("{value} delivered without epoch"),
                        vec![idx],
                    );
                };
                match &mut current[p] {
                    Some((ce, next)) if ce == de && *next == *s => *next += 1,
                    Some((ce, next)) => {
                        return Verdict::violated(
                            Property::EpochGapFree,
                            format!(
                                "p{p} delivers ({}, {s}) while expecting ({}, {next})",
                                de.0, ce.0
                            ),
                            vec![idx],
                        )
                    }
                    None => {
                        return Verdict::violated(
                            Property::EpochGapFree,
                            format!("p{p} delivers before any epoch"),
                            vec![idx],
                        )
                    }
                }
            }
            _ => {}
        }
    }
    Verdict::pass(Property::EpochGapFree)
}

/// The slot (epoch, seqno) holds the same value at every process, and a
/// value occupies the same slot everywhere.
fn symmetry(ix: &Index<'_>) -> Verdict {
    let mut slot: HashMap<(Epoch, u64), (ValueId, usize)> = HashMap::new();
    let mut of_value: HashMap<ValueId, ((Epoch, u64), usize)> = HashMap::new();
    for ds in &ix.deliveries {
        for d in ds {
            let (Some(e), Some(s)) = (d.epoch, d.seqno) else {
                continue;
            };
            let (v, first) = *slot.entry((e, s)).or_insert((d.value, d.idx));
            if v != d.value {
                return Verdict::violated(
                    Property::DeliverySymmetry,
                    format!("slot ({}, {s}) holds {v} and {}", e.0, d.value),
                    vec![first, d.idx],
                );
            }
            let (at, first) = *of_value.entry(d.value).or_insert(((e, s), d.idx));
            if at != (e, s) {
                return Verdict::violated(
                    Property::DeliverySymmetry,
                    format!(
                        "{} delivered in slots ({}, {}) and ({}, {s})",
                        d.value, at.0 .0, at.1, e.0
                    ),
                    vec![first, d.idx],
                );
            }
        }
    }
    Verdict::pass(Property::DeliverySymmetry)
}

/// Epochs are ordered by the instance their NEW-EPOCH tuple was decided
/// at, identically at every process, and a process only becomes primary of
/// an epoch it owns after that epoch was established locally.
fn epoch_order(ix: &Index<'_>) -> Verdict {
    let mut at: HashMap<Epoch, (u64, usize)> = HashMap::new();
    let mut holder: HashMap<u64, (Epoch, usize)> = HashMap::new();
    let mut last: Vec<Option<(u64, Epoch)>> = vec![None; ix.n];
    for &(p, idx, e, i) in &ix.established {
        let (inst, first) = *at.entry(e).or_insert((i, idx));
        if inst != i {
            return Verdict::violated(
                Property::EpochOrder,
                format!("epoch {} established at instances {inst} and {i}", e.0),
                vec![first, idx],
            );
        }
        let (he, first) = *holder.entry(i).or_insert((e, idx));
        if he != e {
            return Verdict::violated(
                Property::EpochOrder,
                format!("instance {i} establishes two epochs"),
                vec![first, idx],
            );
        }
        if let Some((li, _)) = last[p] {
            if li >= i {
                return Verdict::violated(
                    Property::EpochOrder,
                    format!("p{p} establishes epochs out of order"),
                    vec![idx],
                );
            }
        }
        last[p] = Some((i, e));
    }
    for ep in &ix.epochs {
        let ok = ep.epoch.is_some_and(|e| {
            e.owner(ix.n).index() == ep.p
                && ix
                    .established
                    .iter()
                    .any(|&(p, idx, ee, _)| p == ep.p && ee == e && idx < ep.begin)
        });
        if !ok {
            return Verdict::violated(
                Property::EpochOrder,
                "primary epoch without a matching NEW-EPOCH decision",
                vec![ep.begin],
            );
        }
    }
    Verdict::pass(Property::EpochOrder)
}
