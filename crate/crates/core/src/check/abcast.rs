use super::index::Index;
use super::{Property, Verdict};
use crate::value::ValueId;
use std::collections::{HashMap, HashSet};

pub fn check(ix: &Index<'_>) -> Vec<Verdict> {
    vec![integrity(ix), total_order(ix), agreement(ix)]
}

/// Delivered values were broadcast, and no process delivers one twice.
fn integrity(ix: &Index<'_>) -> Verdict {
    let mut found = None;
    'outer: for ds in &ix.deliveries {
        let mut seen = HashMap::new();
        for d in ds {
            match ix.broadcasts.get(&d.value) {
                Some(b) if b.idx < d.idx => {}
                _ => {
                    found = Some((
                        format!("{} delivered but never broadcast", d.value),
                        vec![d.idx],
                    ));
                    break 'outer;
                }
            }
            if let Some(first) = seen.insert(d.value, d.idx) {
                found = Some((format!("{} delivered twice", d.value), vec![first, d.idx]));
                break 'outer;
            }
        }
    }
    Verdict::first(Property::Integrity, found)
}

fn positions(ix: &Index<'_>) -> Vec<HashMap<ValueId, usize>> {
    ix.deliveries
        .iter()
        .map(|ds| {
            let mut m = HashMap::new();
            for (k, d) in ds.iter().enumerate() {
                m.entry(d.value).or_insert(k);
            }
            m
        })
        .collect()
}

/// Any two processes deliver their common values in the same order.
fn total_order(ix: &Index<'_>) -> Verdict {
    let pos = positions(ix);
    for p in 0..ix.n {
        for q in 0..ix.n {
            if p == q {
                continue;
            }
            let mut last: Option<(usize, usize)> = None;
            for (k, d) in ix.deliveries[p].iter().enumerate() {
                let Some(&kq) = pos[q].get(&d.value) else {
                    continue;
                };
                if let Some((lk, lq)) = last {
                    if kq < lq {
                        let prev = &ix.deliveries[p][lk];
                        return Verdict::violated(
                            Property::TotalOrder,
                            format!(
                                "p{p} delivers {} before {}, p{q} the other way round",
                                prev.value, d.value
                            ),
                            vec![
                                prev.idx,
                                d.idx,
                                ix.deliveries[q][kq].idx,
                                ix.deliveries[q][lq].idx,
                            ],
                        );
                    }
                }
                last = Some((k, kq));
            }
        }
    }
    Verdict::pass(Property::TotalOrder)
}

/// If p delivers v and q delivers v', then p delivers v' or q delivers v.
fn agreement(ix: &Index<'_>) -> Verdict {
    let sets: Vec<HashSet<ValueId>> = ix
        .deliveries
        .iter()
        .map(|ds| ds.iter().map(|d| d.value).collect())
        .collect();
    for p in 0..ix.n {
        for q in p + 1..ix.n {
            let only_p = ix.deliveries[p]
                .iter()
                .find(|d| !sets[q].contains(&d.value));
            let only_q = ix.deliveries[q]
                .iter()
                .find(|d| !sets[p].contains(&d.value));
            if let (Some(a), Some(b)) = (only_p, only_q) {
                return Verdict::violated(
                    Property::Agreement,
                    format!(
                        "p{p} alone delivers {}, p{q} alone delivers {}",
                        a.value, b.value
                    ),
                    vec![a.idx, b.idx],
                );
            }
        }
    }
    Verdict::pass(Property::Agreement)
}
