//! Executes a scenario and packages the trace.

use crate::node::Participant;
use crate::object::StateDigest;
use crate::replication::{Client, Replica};
use crate::scenario::Scenario;
use crate::sim::{ProcessId, RunStats, SimError, Simulation, VirtualTime};
use crate::trace::{RunSummary, Trace, TraceMeta};

pub struct RunOutcome {
    pub trace: Trace,
    pub stats: RunStats,
    /// Final committed-state digest per process, `None` for halted ones.
    pub digests: Vec<Option<StateDigest>>,
}

pub fn build(s: &Scenario) -> Result<Simulation<Participant>, SimError> {
    let mut actors: Vec<Participant> = (0..s.n as u32)
        .map(|p| Participant::replica(s.protocol, s.replica_config(ProcessId(p))))
        .collect();
    actors.extend(
        s.client_configs()
            .into_iter()
            .map(|c| Participant::Client(Client::new(c))),
    );
    Simulation::new(
        s.n,
        actors,
        s.net_config(),
        s.omega_script(),
        s.crash_schedule(),
    )
}

pub fn meta(s: &Scenario) -> TraceMeta {
    let omega = s.omega_script();
    let crashes = s.crash_schedule();
    let correct = (0..s.n as u32)
        .map(ProcessId)
        .filter(|p| !crashes.crashes(*p));
    TraceMeta {
        scenario: s.name.clone(),
        protocol: s.protocol,
        n: s.n as u32,
        clients: s.clients(),
        seed: s.seed,
        horizon: s.horizon,
        delta: s.delta(),
        crashes: s.crashes.iter().map(|c| (c.p, c.at)).collect(),
        final_leader: omega.final_leader(correct).map(|p| p.0).unwrap_or(0),
        final_segment_start: omega.last().from.ticks(),
        expect_violation: s.expect_violation,
    }
}

pub fn run(s: &Scenario) -> Result<RunOutcome, SimError> {
    let mut sim = build(s)?;
    sim.run_until(VirtualTime(s.horizon));
    let (actors, events, stats) = sim.into_parts();
    let clients: Vec<&Client> = actors.iter().filter_map(Participant::as_client).collect();
    let completed: usize = clients.iter().map(|c| c.completed()).sum();
    let pending: usize = clients.iter().map(|c| c.pending()).sum();
    let crashes = s.crash_schedule();
    let digests = actors
        .iter()
        .filter_map(Participant::as_replica)
        .enumerate()
        .map(|(p, r): (usize, &Replica)| {
            (!r.halted() && !crashes.crashes(ProcessId(p as u32))).then(|| r.sigma().digest())
        })
        .collect();
    let summary = RunSummary {
        events_processed: stats.events_processed,
        end_time: stats.end_time.ticks(),
        pending_ops: pending as u64,
        completed_ops: completed as u64,
        liveness_timeout: pending > 0,
    };
    Ok(RunOutcome {
        trace: Trace {
            meta: meta(s),
            events,
            summary,
        },
        stats,
        digests,
    })
}
