use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Broadcast layer under the replicas.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Control variant: `isPrimary := Ω = p` over plain Paxos abcast.
    AbcastNaive,
    TauSeq,
    TauPaxos,
    BarrierFree,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [
        Protocol::AbcastNaive,
        Protocol::TauSeq,
        Protocol::TauPaxos,
        Protocol::BarrierFree,
    ];
    pub const SAFE: [Protocol; 3] = [Protocol::TauSeq, Protocol::TauPaxos, Protocol::BarrierFree];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::AbcastNaive => "abcast-naive",
            Protocol::TauSeq => "tau-seq",
            Protocol::TauPaxos => "tau-paxos",
            Protocol::BarrierFree => "barrier-free",
        }
    }

    /// Whether consensus instances run one at a time.
    pub fn sequential(self) -> bool {
        self == Protocol::TauSeq
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown protocol {s:?}"))
    }
}
