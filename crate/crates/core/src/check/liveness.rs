use super::index::Index;
use super::{Property, Verdict};
use std::collections::HashSet;

/// Ticks, in units of Δ, the run is given to settle after the last Ω
/// change and after each broadcast.
pub const SLACK_DELTAS: u64 = 100;

pub fn check(ix: &Index<'_>) -> Vec<Verdict> {
    let meta = &ix.trace.meta;
    let slack = SLACK_DELTAS * meta.delta.max(1);
    let settled = meta.horizon.saturating_sub(slack);
    let short = meta.final_segment_start + slack > settled;
    let fail = |p: Property, d: String, ev: Vec<usize>| {
        if short {
            Verdict::inconclusive(p, format!("horizon too short to decide: {d}"))
        } else {
            Verdict::violated(p, d, ev)
        }
    };
    let events = &ix.trace.events;
    let leader = meta.final_leader as usize;

    // The final leader's last primary epoch stands for the eventual single
    // primary: nobody may follow it and everything it broadcasts arrives.
    let single = {
        let last = ix
            .epochs
            .iter()
            .filter(|ep| {
                ep.p == leader
                    && ep
                        .end
                        .is_none_or(|e| events[e].t >= meta.final_segment_start)
            })
            .max_by_key(|ep| ep.begin);
        let delivered: HashSet<_> = ix.deliveries.iter().flatten().map(|d| d.value).collect();
        match last {
            None => fail(
                Property::EventualSinglePrimary,
                format!("final leader p{leader} never became primary"),
                Vec::new(),
            ),
            Some(ep) => {
                let later = ix.epochs.iter().find(|o| {
                    o.p != leader
                        && o.begin > ep.begin
                        && events[o.begin].t >= meta.final_segment_start
                });
                let lost = ep
                    .values
                    .iter()
                    .map(|v| (v, ix.broadcasts[v].idx))
                    .find(|(v, idx)| events[*idx].t <= settled && !delivered.contains(v));
                if let Some(o) = later {
                    fail(
                        Property::EventualSinglePrimary,
                        format!(
                            "p{} becomes primary after the final leader's last epoch",
                            o.p
                        ),
                        vec![ep.begin, o.begin],
                    )
                } else if let Some((v, idx)) = lost {
                    fail(
                        Property::EventualSinglePrimary,
                        format!("{v} broadcast by the final primary is never delivered"),
                        vec![idx],
                    )
                } else {
                    Verdict::pass(Property::EventualSinglePrimary)
                }
            }
        }
    };

    let delivery = {
        let correct = ix.correct();
        let sets: Vec<HashSet<_>> = ix
            .deliveries
            .iter()
            .map(|ds| ds.iter().map(|d| d.value).collect())
            .collect();
        let missing = ix
            .deliveries
            .iter()
            .flatten()
            .filter(|d| events[d.idx].t <= settled)
            .find_map(|d| {
                correct
                    .iter()
                    .find(|q| !sets[**q].contains(&d.value))
                    .map(|q| (d, *q))
            });
        match missing {
            Some((d, q)) => fail(
                Property::DeliveryLiveness,
                format!("{} never delivered at correct p{q}", d.value),
                vec![d.idx],
            ),
            None => Verdict::pass(Property::DeliveryLiveness),
        }
    };

    let s = &ix.trace.summary;
    let progress = if s.pending_ops > 0 {
        fail(
            Property::ClientProgress,
            format!(
                "{} client operation(s) still pending at the horizon",
                s.pending_ops
            ),
            Vec::new(),
        )
    } else {
        Verdict::pass(Property::ClientProgress)
    };
    vec![single, delivery, progress]
}
