//! Declarative run descriptions, read from TOML.

use crate::object::Command;
use crate::protocol::Protocol;
use crate::replication::{ClientConfig, Faults, PlannedOp, ReplicaConfig};
use crate::sim::{
    CrashSchedule, DelayModel, LinkRule, NetConfig, OmegaScript, OmegaSegment, ProcessId,
    VirtualTime,
};
use crate::value::ClientId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub protocol: Protocol,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    pub horizon: u64,
    /// Safety violations are the point of this run (counterexamples).
    #[serde(default)]
    pub expect_violation: bool,
    pub net: NetSpec,
    pub omega: Vec<SegmentSpec>,
    #[serde(default)]
    pub crashes: Vec<CrashSpec>,
    #[serde(default)]
    pub workload: Workload,
    #[serde(default)]
    pub replica: ReplicaSpec,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSpec {
    /// Fixed one-way delay Δ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<u64>,
    /// Uniform delay in `[min, max]`, seeded from the scenario seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter: Option<[u64; 2]>,
    #[serde(default)]
    pub reorder: bool,
    #[serde(default)]
    pub per_byte: u64,
    #[serde(default)]
    pub rules: Vec<LinkRule>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub from: u64,
    /// Every process outputs this leader.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leader: Option<u32>,
    /// Per-process outputs, for segments where processes disagree.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<Vec<u32>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrashSpec {
    pub p: u32,
    pub at: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workload {
    #[serde(default)]
    pub clients: u32,
    #[serde(default)]
    pub ops_per_client: u32,
    /// Bytes per append.
    #[serde(default = "default_size")]
    pub size: usize,
    #[serde(default)]
    pub nondet: bool,
    /// Time the generated operations become eligible.
    #[serde(default)]
    pub start: u64,
    /// Retransmission period; 0 picks `20 * delta`.
    #[serde(default)]
    pub retry: u64,
    #[serde(default)]
    pub script: Vec<ScriptOp>,
}

impl Default for Workload {
    fn default() -> Self {
        Workload {
            clients: 0,
            ops_per_client: 0,
            size: default_size(),
            nondet: false,
            start: 0,
            retry: 0,
            script: Vec::new(),
        }
    }
}

fn default_size() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptOp {
    pub client: u32,
    pub at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub append: Option<String>,
    #[serde(default)]
    pub read: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicaSpec {
    #[serde(default = "default_batch_cap")]
    pub batch_cap: usize,
    #[serde(default)]
    pub corrupt_reply_table: bool,
}

impl Default for ReplicaSpec {
    fn default() -> Self {
        ReplicaSpec {
            batch_cap: default_batch_cap(),
            corrupt_reply_table: false,
        }
    }
}

fn default_batch_cap() -> usize {
    50
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Invalid(msg.into()))
}

impl Scenario {
    pub fn from_toml(src: &str) -> Result<Scenario, ScenarioError> {
        let s: Scenario = toml::from_str(src)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n == 0 {
            return invalid("n must be >= 1");
        }
        if self.replica.batch_cap == 0 {
            return invalid("batch_cap must be >= 1");
        }
        if self.workload.size == 0 {
            return invalid("workload.size must be >= 1");
        }
        match (self.net.delta, self.net.jitter) {
            (Some(_), Some(_)) => return invalid("net: give either delta or jitter, not both"),
            (None, None) => return invalid("net: one of delta or jitter is required"),
            _ => {}
        }
        for r in &self.net.rules {
            if r.from as usize >= self.n + self.clients() as usize
                || r.to as usize >= self.n + self.clients() as usize
            {
                return invalid(format!(
                    "link rule {}->{} names an unknown actor",
                    r.from, r.to
                ));
            }
            if r.delay == 0 {
                return invalid("link rule delay must be >= 1");
            }
        }
        for s in &self.omega {
            if s.leader.is_some() == s.outputs.is_some() {
                return invalid(format!(
                    "omega segment at {}: give exactly one of leader or outputs",
                    s.from
                ));
            }
        }
        let mut seen = BTreeMap::new();
        for c in &self.crashes {
            if c.p as usize >= self.n {
                return invalid(format!("crash of unknown process {}", c.p));
            }
            if seen.insert(c.p, c.at).is_some() {
                return invalid(format!("process {} crashes twice", c.p));
            }
        }
        for op in &self.workload.script {
            if op.append.is_some() == op.read {
                return invalid("script op: give exactly one of append or read");
            }
            if op.append.as_deref() == Some("") {
                return invalid("script op: empty append");
            }
        }
        self.net_config()
            .delay
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        let crashes = self.crash_schedule();
        crashes
            .validate(self.n)
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        self.omega_script()
            .validate(self.n, &crashes)
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn delta(&self) -> u64 {
        self.net_config().delay.nominal()
    }

    pub fn net_config(&self) -> NetConfig {
        let delay = match (self.net.delta, self.net.jitter) {
            (_, Some([min, max])) => DelayModel::Jitter {
                min,
                max,
                seed: self.seed,
            },
            (Some(delta), None) => DelayModel::Fixed { delta },
            (None, None) => DelayModel::Fixed { delta: 0 },
        };
        NetConfig {
            delay,
            reorder: self.net.reorder,
            per_byte: self.net.per_byte,
            rules: self.net.rules.clone(),
        }
    }

    pub fn omega_script(&self) -> OmegaScript {
        let segments = self
            .omega
            .iter()
            .map(|s| match (s.leader, &s.outputs) {
                (Some(l), _) => OmegaSegment::uniform(s.from, self.n, l),
                (None, Some(o)) => OmegaSegment {
                    from: VirtualTime(s.from),
                    outputs: o.iter().map(|p| ProcessId(*p)).collect(),
                },
                (None, None) => OmegaSegment {
                    from: VirtualTime(s.from),
                    outputs: Vec::new(),
                },
            })
            .collect();
        OmegaScript { segments }
    }

    pub fn crash_schedule(&self) -> CrashSchedule {
        CrashSchedule {
            crashes: self
                .crashes
                .iter()
                .map(|c| (ProcessId(c.p), VirtualTime(c.at)))
                .collect(),
        }
    }

    /// Number of client actors, including those named only by the script.
    pub fn clients(&self) -> u32 {
        let scripted = self
            .workload
            .script
            .iter()
            .map(|o| o.client + 1)
            .max()
            .unwrap_or(0);
        self.workload.clients.max(scripted)
    }

    pub fn replica_config(&self, me: ProcessId) -> ReplicaConfig {
        ReplicaConfig {
            me,
            n: self.n,
            sequential: self.protocol.sequential(),
            batch_cap: self.replica.batch_cap,
            faults: Faults {
                corrupt_reply_table: self.replica.corrupt_reply_table,
            },
        }
    }

    pub fn client_configs(&self) -> Vec<ClientConfig> {
        let w = &self.workload;
        let retry = if w.retry == 0 {
            20 * self.delta()
        } else {
            w.retry
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x00c1_1e47);
        (0..self.clients())
            .map(|c| {
                let mut ops: Vec<PlannedOp> = (0..w.ops_per_client)
                    .map(|t| {
                        let mut data = format!("c{c}.{t}:").into_bytes();
                        data.resize(w.size.max(data.len()), b'.');
                        let nondet_seed = w.nondet.then(|| rng.gen());
                        let cmd = if w.nondet {
                            Command::AppendNondet { data }
                        } else {
                            Command::Append { data }
                        };
                        PlannedOp {
                            at: w.start,
                            cmd,
                            nondet_seed,
                        }
                    })
                    .collect();
                let mut scripted: Vec<&ScriptOp> =
                    w.script.iter().filter(|o| o.client == c).collect();
                scripted.sort_by_key(|o| o.at);
                ops.extend(scripted.into_iter().map(|o| PlannedOp {
                    at: o.at,
                    cmd: match &o.append {
                        Some(s) => Command::Append {
                            data: s.clone().into_bytes(),
                        },
                        None => Command::Read,
                    },
                    nondet_seed: None,
                }));
                ClientConfig {
                    id: ClientId(c),
                    n: self.n,
                    retry,
                    ops,
                }
            })
            .collect()
    }

    pub fn total_ops(&self) -> usize {
        self.clients() as usize * self.workload.ops_per_client as usize + self.workload.script.len()
    }

    /// A randomized adversarial scenario: jittered reordering links, Ω
    /// flapping with segments where processes disagree, and crashes of a
    /// minority. The final segment is stable on a correct process and long
    /// enough for the run to settle.
    pub fn random(protocol: Protocol, seed: u64) -> Scenario {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = if rng.gen_bool(0.5) { 3 } else { 5 };
        let max_crashes = (n - 1) / 2;
        let ncrash = rng.gen_range(0..=max_crashes);
        let mut procs: Vec<u32> = (0..n as u32).collect();
        for i in (1..procs.len()).rev() {
            procs.swap(i, rng.gen_range(0..=i));
        }
        let crashed: Vec<u32> = procs[..ncrash].to_vec();
        let correct: Vec<u32> = procs[ncrash..].to_vec();

        let nseg = rng.gen_range(1..=5);
        let mut omega = Vec::new();
        let mut t = 0;
        for i in 0..nseg {
            let seg = if i > 0 && rng.gen_bool(0.35) {
                SegmentSpec {
                    from: t,
                    leader: None,
                    outputs: Some((0..n).map(|_| rng.gen_range(0..n as u32)).collect()),
                }
            } else {
                SegmentSpec {
                    from: t,
                    leader: Some(rng.gen_range(0..n as u32)),
                    outputs: None,
                }
            };
            omega.push(seg);
            t += rng.gen_range(15..120);
        }
        let final_leader = correct[rng.gen_range(0..correct.len())];
        omega.push(SegmentSpec {
            from: t,
            leader: Some(final_leader),
            outputs: None,
        });
        let crashes = crashed
            .iter()
            .map(|&p| CrashSpec {
                p,
                at: rng.gen_range(0..t + 40),
            })
            .collect();

        let clients = rng.gen_range(1..=3);
        let ops_per_client = rng.gen_range(1..=10 / clients);
        Scenario {
            name: format!("random-{}-{seed}", protocol.name()),
            protocol,
            n,
            seed,
            horizon: t + 3000,
            expect_violation: false,
            net: NetSpec {
                delta: None,
                jitter: Some([3, 15]),
                reorder: true,
                per_byte: 0,
                rules: Vec::new(),
            },
            omega,
            crashes,
            workload: Workload {
                clients,
                ops_per_client,
                size: 8,
                nondet: rng.gen_bool(0.5),
                start: rng.gen_range(0..60),
                retry: 150,
                script: Vec::new(),
            },
            replica: ReplicaSpec {
                batch_cap: rng.gen_range(1..=4),
                corrupt_reply_table: false,
            },
        }
    }
}

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../scenarios/", $name, ".toml")))),*]
    };
}

/// Scenario files shipped with the crate, by name.
pub const BUNDLED: &[(&str, &str)] = bundled![
    "fig2-naive-abcast",
    "fig2-tau-seq",
    "fig2-tau-paxos",
    "fig2-barrier-free",
    "stable-abcast-naive",
    "stable-tau-seq",
    "stable-tau-paxos",
    "stable-barrier-free",
    "leaderchange-tau-seq",
    "leaderchange-tau-paxos",
    "leaderchange-barrier-free",
    "dual-leader-sigma3",
];

pub fn bundled(name: &str) -> Option<Scenario> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, src)| {
        Scenario::from_toml(src).unwrap_or_else(|e| panic!("bundled scenario {name}: {e}"))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
protocol = "tau-paxos"
n = 3
horizon = 100
net = { delta = 10 }
omega = [{ from = 0, leader = 0 }]
"#;

    #[test]
    fn minimal_file_parses_with_defaults() {
        let s = Scenario::from_toml(MINIMAL).unwrap();
        assert_eq!(s.replica.batch_cap, 50);
        assert_eq!(s.delta(), 10);
        assert_eq!(s.clients(), 0);
    }

    #[test]
    fn parse_error_names_the_line() {
        let err = Scenario::from_toml("name = \"x\"\nn = \"three\"\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn validation_catches_bad_omega_and_crashes() {
        let bad = MINIMAL.replace("leader = 0", "leader = 7");
        assert!(matches!(
            Scenario::from_toml(&bad),
            Err(ScenarioError::Invalid(_))
        ));
        let crash_leader = format!("{MINIMAL}crashes = [{{ p = 0, at = 5 }}]\n");
        assert!(matches!(
            Scenario::from_toml(&crash_leader),
            Err(ScenarioError::Invalid(_))
        ));
    }

    #[test]
    fn random_scenarios_validate_and_round_trip() {
        for seed in 0..200 {
            for p in Protocol::ALL {
                let s = Scenario::random(p, seed);
                s.validate().unwrap_or_else(|e| panic!("seed {seed}: {e}"));
                assert!(s.total_ops() <= 10);
                assert_eq!(Scenario::from_toml(&s.to_toml()).unwrap(), s);
            }
        }
    }

    #[test]
    fn bundled_scenarios_parse() {
        for (name, _) in BUNDLED {
            assert_eq!(bundled(name).unwrap().name, *name);
        }
    }
}
