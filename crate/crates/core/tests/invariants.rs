//! Randomized invariants over the scenario generator.

use poabcast::check::{self, Property, Status};
use poabcast::protocol::Protocol;
use poabcast::runner;
use poabcast::scenario::Scenario;
use poabcast::trace::{EventKind, Trace};
use proptest::prelude::*;

const SAFE: [Protocol; 3] = [Protocol::TauSeq, Protocol::TauPaxos, Protocol::BarrierFree];

fn protocol() -> impl Strategy<Value = Protocol> {
    prop::sample::select(SAFE.to_vec())
}

fn run(p: Protocol, seed: u64) -> Trace {
    runner::run(&Scenario::random(p, seed))
        .expect("random scenarios run")
        .trace
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn runs_are_deterministic(p in protocol(), seed in any::<u64>()) {
        prop_assert_eq!(run(p, seed).to_lines(), run(p, seed).to_lines());
    }

    #[test]
    fn checking_is_pure(p in protocol(), seed in any::<u64>()) {
        let t = run(p, seed);
        prop_assert_eq!(check::check_all(&t), check::check_all(&t.clone()));
    }

    #[test]
    fn safe_variants_are_safe(p in protocol(), seed in any::<u64>()) {
        let r = check::check_all(&run(p, seed));
        let bad: Vec<_> = r.safety_violations().map(|v| v.property.name()).collect();
        prop_assert!(bad.is_empty(), "{} seed {}: {:?}", p.name(), seed, bad);
        prop_assert_eq!(r.status(Property::ImpliedGlobalOrder), Some(Status::Pass));
    }

    #[test]
    fn crashed_processes_stay_silent(p in protocol(), seed in any::<u64>()) {
        let t = run(p, seed);
        let mut crashed = vec![false; t.meta.n as usize];
        for e in t.events.iter().filter(|e| e.p < t.meta.n) {
            prop_assert!(!crashed[e.p as usize], "p{} acts after crashing: {:?}", e.p, e);
            if e.kind == EventKind::Crash {
                prop_assert_eq!(t.meta.crash_time(e.p), Some(e.t));
                crashed[e.p as usize] = true;
            }
        }
    }

    #[test]
    fn omega_settles_on_a_correct_leader(p in protocol(), seed in any::<u64>()) {
        let t = run(p, seed);
        prop_assert!(t.meta.crash_time(t.meta.final_leader).is_none());
        for q in t.meta.correct() {
            let last = t.events.iter().rev().find_map(|e| match e.kind {
                EventKind::Omega { leader } if e.p == q => Some(leader),
                _ => None,
            });
            prop_assert_eq!(last, Some(t.meta.final_leader), "p{}", q);
        }
    }

    #[test]
    fn sequential_primary_has_one_proposal_in_flight(seed in any::<u64>()) {
        let r = check::check_all(&run(Protocol::TauSeq, seed));
        prop_assert_eq!(r.status(Property::Sequentiality), Some(Status::Pass));
    }

    #[test]
    fn replicas_never_reach_bottom(p in protocol(), seed in any::<u64>()) {
        let t = run(p, seed);
        let bottom = t.events.iter().any(|e| matches!(e.kind, EventKind::Apply { ok: false, .. }));
        prop_assert!(!bottom, "{} seed {} reached bottom", p.name(), seed);
    }
}

#[test]
fn naive_control_reaches_bottom_on_the_counterexample() {
    let s = poabcast::scenario::bundled("fig2-naive-abcast").expect("bundled");
    let t = runner::run(&s).expect("runs").trace;
    assert!(t
        .events
        .iter()
        .any(|e| matches!(e.kind, EventKind::Apply { ok: false, .. })));
    assert_eq!(
        check::check_all(&t).status(Property::BottomFreedom),
        Some(Status::Violated)
    );
}
