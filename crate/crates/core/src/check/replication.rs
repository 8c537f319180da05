use super::index::Index;
use super::{Property, Verdict};
use crate::object::StateDigest;
use crate::trace::EventKind;
use crate::value::{OpId, ValueId};
use std::collections::HashMap;

pub fn check(ix: &Index<'_>) -> Vec<Verdict> {
    let mut bottom = None;
    let mut applies: Vec<Vec<(ValueId, OpId, StateDigest, usize)>> = vec![Vec::new(); ix.n];
    let mut carriers: HashMap<OpId, (ValueId, usize)> = HashMap::new();
    let mut twice = None;
    for (idx, e) in ix.trace.events.iter().enumerate() {
        let EventKind::Apply {
            value,
            op,
            state,
            ok,
            ..
        } = &e.kind
        else {
            continue;
        };
        let p = e.p as usize;
        if !ok {
            bottom.get_or_insert((
                format!("p{p} reaches ⊥ applying {op:?} of {value}"),
                vec![idx],
            ));
            continue;
        }
        applies[p].push((*value, *op, *state, idx));
        match carriers.get(op) {
            Some(&(v, first)) if v != *value => {
                twice.get_or_insert((
                    format!("{op:?} executed twice, in {v} and {value}"),
                    vec![first, idx],
                ));
            }
            None => {
                carriers.insert(*op, (*value, idx));
            }
            _ => {}
        }
    }
    for (p, a) in applies.iter().enumerate() {
        let mut seen = HashMap::new();
        for (_, op, _, idx) in a {
            if let Some(first) = seen.insert(*op, *idx) {
                twice.get_or_insert((format!("p{p} applies {op:?} twice"), vec![first, *idx]));
            }
        }
    }
    let mut diverged = None;
    'pairs: for p in 0..ix.n {
        for q in p + 1..ix.n {
            for (a, b) in applies[p].iter().zip(&applies[q]) {
                if (a.0, a.1) != (b.0, b.1) {
                    break;
                }
                if a.2 != b.2 {
                    diverged = Some((
                        format!("p{p} and p{q} reach different states after the same updates"),
                        vec![a.3, b.3],
                    ));
                    break 'pairs;
                }
            }
        }
    }
    vec![
        Verdict::first(Property::BottomFreedom, bottom),
        Verdict::first(Property::AtMostOnce, twice),
        Verdict::first(Property::DigestConvergence, diverged),
    ]
}
