use poabcast::bench::{self, LatencyStats};
use poabcast::protocol::Protocol;

#[test]
fn table1_is_exact_for_every_delta() {
    for delta in [1, 7, 10, 25] {
        for r in bench::table1(delta, &[1, 3, 5]).expect("runs") {
            assert_eq!(
                r.latency_max,
                bench::expected_stable_latency(r.protocol, delta, r.clients),
                "{r:?}"
            );
            assert_eq!(
                r.leader_change_idle,
                Some(bench::expected_leader_change(r.protocol, delta)),
                "{r:?}"
            );
        }
    }
}

#[test]
fn csv_is_stable_across_runs() {
    let render = || {
        let mut out = Vec::new();
        bench::write_csv(&bench::table1(10, &[1, 2]).unwrap(), &mut out).unwrap();
        String::from_utf8(out).unwrap()
    };
    let a = render();
    assert_eq!(a, render());
    assert_eq!(
        a.lines().next().unwrap(),
        "scenario,protocol,clients,request_size,latency_min,latency_mean,latency_p99,latency_max,throughput,leader_change_idle"
    );
}

#[test]
fn p99_uses_nearest_rank() {
    let samples: Vec<u64> = (1..=200).collect();
    let s = LatencyStats::of(&samples);
    assert_eq!((s.min, s.max, s.p99), (1, 200, 198));
    assert_eq!(s.mean, 100.5);
}

#[test]
fn empty_requests_reach_peak_parity() {
    let rows = bench::bench_throughput(
        &[Protocol::TauSeq, Protocol::TauPaxos],
        &bench::THROUGHPUT_CLIENTS,
        0,
        bench::THROUGHPUT_COST,
        bench::THROUGHPUT_OPS_PER_CLIENT,
    )
    .unwrap();
    let ratio = bench::peak(&rows, Protocol::TauPaxos) / bench::peak(&rows, Protocol::TauSeq);
    assert!((ratio - 1.0).abs() <= 0.1, "ratio {ratio}");
}
