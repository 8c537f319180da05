use super::index::Index;
use super::{Property, Verdict};
use crate::value::DecreeTag;
use std::collections::HashSet;

pub fn check(ix: &Index<'_>) -> Vec<Verdict> {
    let mut agreement = None;
    let mut validity = None;
    let mut integrity = None;
    for (i, ds) in &ix.decisions {
        let first = &ds[0];
        if agreement.is_none() {
            if let Some(d) = ds.iter().find(|d| d.decree != first.decree) {
                agreement = Some((
                    format!(
                        "instance {i} decided differently by p{} and p{}",
                        first.p, d.p
                    ),
                    vec![first.idx, d.idx],
                ));
            }
        }
        if integrity.is_none() {
            let mut seen = HashSet::new();
            if let Some(d) = ds.iter().find(|d| !seen.insert(d.p)) {
                integrity = Some((format!("p{} decides instance {i} twice", d.p), vec![d.idx]));
            }
        }
        if validity.is_none() && first.decree != DecreeTag::NoOp {
            let proposed = ix
                .proposals
                .get(i)
                .is_some_and(|ps| ps.iter().any(|(_, t)| *t == first.decree));
            if !proposed {
                validity = Some((
                    format!(
                        "instance {i} decides {:?}, which nobody proposed there",
                        first.decree
                    ),
                    vec![first.idx],
                ));
            }
        }
    }
    vec![
        Verdict::first(Property::ConsensusAgreement, agreement),
        Verdict::first(Property::ConsensusValidity, validity),
        Verdict::first(Property::ConsensusIntegrity, integrity),
    ]
}
