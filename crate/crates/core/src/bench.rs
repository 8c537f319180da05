//! Latency and throughput measurements over generated scenarios, and the
//! time-complexity formulas they are compared against.

use crate::protocol::Protocol;
use crate::runner;
use crate::scenario::{CrashSpec, NetSpec, ReplicaSpec, Scenario, ScriptOp, SegmentSpec, Workload};
use crate::sim::SimError;
use crate::trace::{EventKind, Trace};
use crate::value::OpId;
use serde::Serialize;
use std::collections::HashMap;

/// One line of benchmark output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub scenario: String,
    pub protocol: Protocol,
    pub clients: u32,
    pub request_size: usize,
    pub latency_min: u64,
    pub latency_mean: f64,
    pub latency_p99: u64,
    pub latency_max: u64,
    /// Operations applied at the leader per 1000 ticks.
    pub throughput: f64,
    pub leader_change_idle: Option<u64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LatencyStats {
    pub min: u64,
    pub mean: f64,
    pub p99: u64,
    pub max: u64,
}

impl LatencyStats {
    pub fn of(samples: &[u64]) -> LatencyStats {
        if samples.is_empty() {
            return LatencyStats::default();
        }
        let mut s = samples.to_vec();
        s.sort_unstable();
        // Nearest-rank percentile.
        let rank = (s.len() * 99).div_ceil(100).max(1);
        LatencyStats {
            min: s[0],
            mean: s.iter().sum::<u64>() as f64 / s.len() as f64,
            p99: s[rank - 1],
            max: s[s.len() - 1],
        }
    }
}

/// Stable-period latency: the last of `c` simultaneous requests is
/// delivered 2Δ·c after arrival under τ_seq and 2Δ otherwise.
pub fn expected_stable_latency(protocol: Protocol, delta: u64, c: u32) -> u64 {
    match protocol {
        Protocol::TauSeq => 2 * delta * c as u64,
        _ => 2 * delta,
    }
}

/// Idle time after a leader change: a read phase alone for plain abcast,
/// a read and one write for the others.
pub fn expected_leader_change(protocol: Protocol, delta: u64) -> u64 {
    match protocol {
        Protocol::AbcastNaive => 2 * delta,
        _ => 4 * delta,
    }
}

fn base(name: String, protocol: Protocol, delta: u64, horizon: u64) -> Scenario {
    Scenario {
        name,
        protocol,
        n: 3,
        seed: 0,
        horizon,
        expect_violation: false,
        net: NetSpec {
            delta: Some(delta),
            ..NetSpec::default()
        },
        omega: vec![SegmentSpec {
            from: 0,
            leader: Some(0),
            outputs: None,
        }],
        crashes: Vec::new(),
        workload: Workload::default(),
        replica: ReplicaSpec {
            batch_cap: 1,
            corrupt_reply_table: false,
        },
    }
}

fn script(client: u32, at: u64) -> ScriptOp {
    ScriptOp {
        client,
        at,
        append: Some(format!("c{client}@{at}")),
        read: false,
    }
}

/// Leader 0 throughout; `c` clients each send one request at 10Δ, well
/// after every variant has become primary.
pub fn stable_scenario(protocol: Protocol, delta: u64, c: u32) -> Scenario {
    let mut s = base(
        format!("table1-stable-{}-c{c}", protocol.name()),
        protocol,
        delta,
        40 * delta + 4 * delta * c as u64,
    );
    s.workload.script = (0..c).map(|k| script(k, 10 * delta)).collect();
    s
}

/// Leader 0 hands over to 1 at 20Δ and crashes at the same instant. With
/// `pending`, p0 has just proposed a value the acceptors hold but nobody
/// has decided; otherwise the log is quiet. Client 1 asks the new leader
/// for service 10Δ after the change.
pub fn leader_change_scenario(protocol: Protocol, delta: u64, pending: bool) -> Scenario {
    let change = 20 * delta;
    let kind = if pending { "pending" } else { "clean" };
    let mut s = base(
        format!("table1-change-{kind}-{}", protocol.name()),
        protocol,
        delta,
        change + 60 * delta,
    );
    s.omega.push(SegmentSpec {
        from: change,
        leader: Some(1),
        outputs: None,
    });
    s.crashes.push(CrashSpec { p: 0, at: change });
    let first = if pending {
        change - 2 * delta
    } else {
        5 * delta
    };
    s.workload.script = vec![script(0, first), script(1, change + 10 * delta)];
    s
}

/// Which leader-change scenario a protocol is measured on. τ layers pay
/// their barrier only when the old primary left something undecided; the
/// barrier-free protocol and plain abcast pay theirs on every change.
pub fn leader_change_pending(protocol: Protocol) -> bool {
    matches!(protocol, Protocol::TauSeq | Protocol::TauPaxos)
}

/// Per-operation latency from the request reaching `leader` to the leader
/// applying it.
pub fn request_latencies(trace: &Trace, leader: u32) -> Vec<u64> {
    let mut arrived: HashMap<OpId, u64> = HashMap::new();
    let mut out = Vec::new();
    for e in trace.events.iter().filter(|e| e.p == leader) {
        match &e.kind {
            EventKind::Request { op } => {
                arrived.entry(*op).or_insert(e.t);
            }
            EventKind::Apply { op, ok: true, .. } => {
                if let Some(t0) = arrived.remove(op) {
                    out.push(e.t - t0);
                }
            }
            _ => {}
        }
    }
    out
}

/// Ticks from `leader`'s Ω output naming itself, at or after `from`, until
/// it could broadcast values that will be delivered: its write phase has
/// started and it is in the primary epoch that carries its first delivered
/// broadcast.
pub fn leader_change_idle(trace: &Trace, leader: u32, from: u64) -> Option<u64> {
    let mine = || {
        trace
            .events
            .iter()
            .enumerate()
            .filter(|(_, e)| e.p == leader && e.t >= from)
    };
    let elected = mine().find_map(|(_, e)| {
        matches!(e.kind, EventKind::Omega { leader: l } if l == leader).then_some(e.t)
    })?;
    let writing =
        mine().find_map(|(_, e)| matches!(e.kind, EventKind::WritePhase { .. }).then_some(e.t))?;
    let delivered: std::collections::HashSet<_> = trace
        .events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::Deliver { value, .. } if e.p == leader => Some(value),
            _ => None,
        })
        .collect();
    let (first, _) = mine().find(
        |(_, e)| matches!(e.kind, EventKind::Broadcast { value, .. } if delivered.contains(&value)),
    )?;
    let began = trace.events[..first]
        .iter()
        .rev()
        .find(|e| e.p == leader && matches!(e.kind, EventKind::PrimaryBegin { .. }))?
        .t;
    Some(writing.max(began).saturating_sub(elected))
}

/// Stable-period latency for each client count plus the leader-change idle
/// time, one row per protocol and client count.
pub fn table1(delta: u64, c_values: &[u32]) -> Result<Vec<MetricsRow>, SimError> {
    let mut rows = Vec::new();
    for protocol in Protocol::ALL {
        let lc = leader_change_scenario(protocol, delta, leader_change_pending(protocol));
        let lc_trace = runner::run(&lc)?.trace;
        let idle = leader_change_idle(&lc_trace, 1, lc.omega[1].from);
        for &c in c_values {
            let s = stable_scenario(protocol, delta, c);
            let trace = runner::run(&s)?.trace;
            let stats = LatencyStats::of(&request_latencies(&trace, 0));
            rows.push(MetricsRow {
                scenario: s.name.clone(),
                protocol,
                clients: c,
                request_size: s.workload.size,
                latency_min: stats.min,
                latency_mean: stats.mean,
                latency_p99: stats.p99,
                latency_max: stats.max,
                throughput: 0.0,
                leader_change_idle: idle,
            });
        }
    }
    Ok(rows)
}

/// Summary metrics of an arbitrary run, seen from the final leader.
pub fn run_metrics(s: &Scenario, trace: &Trace) -> MetricsRow {
    let leader = trace.meta.final_leader;
    let stats = LatencyStats::of(&request_latencies(trace, leader));
    let applies: Vec<u64> = trace
        .events
        .iter()
        .filter(|e| e.p == leader && matches!(e.kind, EventKind::Apply { ok: true, .. }))
        .map(|e| e.t)
        .collect();
    let throughput = match (applies.first(), applies.last()) {
        (Some(a), Some(b)) if applies.len() > 1 => {
            (applies.len() - 1) as f64 * 1000.0 / (b - a).max(1) as f64
        }
        _ => 0.0,
    };
    let idle = (s.omega.len() > 1)
        .then(|| leader_change_idle(trace, leader, trace.meta.final_segment_start))
        .flatten();
    MetricsRow {
        scenario: s.name.clone(),
        protocol: s.protocol,
        clients: s.clients(),
        request_size: s.workload.size,
        latency_min: stats.min,
        latency_mean: stats.mean,
        latency_p99: stats.p99,
        latency_max: stats.max,
        throughput,
        leader_change_idle: idle,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostModel {
    pub delta: u64,
    pub per_byte: u64,
    pub batch_cap: usize,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            delta: 10,
            per_byte: 0,
            batch_cap: 50,
        }
    }
}

/// Cost model of the throughput comparison: 1 tick = 1 ns, a 1 byte/ns
/// uplink and 100 µs one-way latency.
pub const THROUGHPUT_COST: CostModel = CostModel {
    delta: 100_000,
    per_byte: 1,
    batch_cap: 50,
};
pub const THROUGHPUT_CLIENTS: [u32; 6] = [1, 8, 32, 64, 128, 256];
pub const THROUGHPUT_OPS_PER_CLIENT: u32 = 20;

/// Closed-loop clients against a stable leader; each client keeps one
/// request outstanding.
pub fn throughput_scenario(
    protocol: Protocol,
    c: u32,
    size: usize,
    cost: CostModel,
    ops_per_client: u32,
) -> Scenario {
    let name = format!(
        "throughput-{}-c{c}-s{size}-pb{}",
        protocol.name(),
        cost.per_byte
    );
    // The run ends when the clients are done.
    let mut s = base(name, protocol, cost.delta, u64::MAX / 8);
    s.net.per_byte = cost.per_byte;
    // Sequential instances take everything queued while the previous one
    // ran; the cap only bounds pipelined batches.
    s.replica.batch_cap = if protocol.sequential() {
        usize::MAX
    } else {
        cost.batch_cap
    };
    s.workload = Workload {
        clients: c,
        ops_per_client,
        size,
        start: 10 * cost.delta,
        retry: u64::MAX / 4,
        ..Workload::default()
    };
    s
}

/// Runs until the clients finish and reports throughput over
/// the middle half of the leader's applies so that ramp-up and the drain
/// at the end are excluded.
pub fn throughput_row(s: &Scenario) -> Result<MetricsRow, SimError> {
    let trace = runner::run(s)?.trace;
    let applies: Vec<u64> = trace
        .events
        .iter()
        .filter(|e| e.p == 0 && matches!(e.kind, EventKind::Apply { ok: true, .. }))
        .map(|e| e.t)
        .collect();
    let throughput = match applies.len() {
        0..=3 => 0.0,
        k => {
            let (lo, hi) = (k / 4, 3 * k / 4);
            let span = (applies[hi] - applies[lo]).max(1);
            (hi - lo) as f64 * 1000.0 / span as f64
        }
    };
    let stats = LatencyStats::of(&request_latencies(&trace, 0));
    Ok(MetricsRow {
        scenario: s.name.clone(),
        protocol: s.protocol,
        clients: s.workload.clients,
        request_size: s.workload.size,
        latency_min: stats.min,
        latency_mean: stats.mean,
        latency_p99: stats.p99,
        latency_max: stats.max,
        throughput,
        leader_change_idle: None,
    })
}

pub fn bench_throughput(
    protocols: &[Protocol],
    clients: &[u32],
    size: usize,
    cost: CostModel,
    ops_per_client: u32,
) -> Result<Vec<MetricsRow>, SimError> {
    let mut rows = Vec::new();
    for &p in protocols {
        for &c in clients {
            rows.push(throughput_row(&throughput_scenario(
                p,
                c,
                size,
                cost,
                ops_per_client,
            ))?);
        }
    }
    Ok(rows)
}

/// Highest throughput among the rows of one protocol.
pub fn peak(rows: &[MetricsRow], protocol: Protocol) -> f64 {
    rows.iter()
        .filter(|r| r.protocol == protocol)
        .map(|r| r.throughput)
        .fold(0.0, f64::max)
}

pub fn write_csv<W: std::io::Write>(rows: &[MetricsRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
