//! Execution traces: a globally ordered event list, serialized one JSON
//! record per line. The first line carries run metadata, the last line the
//! run summary.

use crate::object::{Command, OpResult, StateDigest};
use crate::protocol::Protocol;
use crate::value::{ClientId, DecreeTag, Epoch, OpId, ValueId};
use serde::{Deserialize, Serialize};
use std::io::{self, BufRead, Write};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EventKind {
    Omega {
        leader: u32,
    },
    Crash,
    /// First receipt of an operation at a replica.
    Request {
        op: OpId,
    },
    Broadcast {
        value: ValueId,
        /// Consensus instance the value was first proposed at.
        instance: u64,
    },
    Deliver {
        value: ValueId,
        instance: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epoch: Option<Epoch>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seqno: Option<u64>,
    },
    Propose {
        instance: u64,
        decree: DecreeTag,
    },
    Decide {
        instance: u64,
        decree: DecreeTag,
    },
    ReadPhase {
        ballot: u64,
    },
    WritePhase {
        ballot: u64,
        watermark: u64,
    },
    PrimaryBegin {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tau: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ballot: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epoch: Option<Epoch>,
    },
    PrimaryEnd,
    SkipProposed {
        instance: u64,
        tau: u64,
    },
    NewEpochProposed {
        epoch: Epoch,
        instance: u64,
    },
    EpochEstablished {
        epoch: Epoch,
        instance: u64,
    },
    ValProposed {
        value: ValueId,
        epoch: Epoch,
        seqno: u64,
        instance: u64,
    },
    ValResent {
        value: ValueId,
        epoch: Epoch,
        seqno: u64,
        instance: u64,
    },
    /// `apply(δ, Σ)` at a replica; `ok == false` is ⊥.
    Apply {
        value: ValueId,
        op: OpId,
        pre: StateDigest,
        state: StateDigest,
        ok: bool,
    },
    Invoke {
        client: ClientId,
        seq: u64,
        cmd: Command,
    },
    Response {
        client: ClientId,
        seq: u64,
        result: OpResult,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t: u64,
    /// Actor index: processes first, then clients.
    pub p: u32,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub scenario: String,
    pub protocol: Protocol,
    pub n: u32,
    pub clients: u32,
    pub seed: u64,
    pub horizon: u64,
    /// Nominal one-way delay.
    pub delta: u64,
    pub crashes: Vec<(u32, u64)>,
    pub final_leader: u32,
    pub final_segment_start: u64,
    #[serde(default)]
    pub expect_violation: bool,
}

impl TraceMeta {
    pub fn crash_time(&self, p: u32) -> Option<u64> {
        self.crashes.iter().find(|(q, _)| *q == p).map(|(_, t)| *t)
    }

    pub fn correct(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.n).filter(|p| self.crash_time(*p).is_none())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub events_processed: u64,
    pub end_time: u64,
    pub pending_ops: u64,
    pub completed_ops: u64,
    /// Operations were still outstanding when the horizon was reached.
    pub liveness_timeout: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub meta: TraceMeta,
    pub events: Vec<TraceEvent>,
    pub summary: RunSummary,
}

#[derive(Serialize, Deserialize)]
struct MetaLine {
    meta: TraceMeta,
}

#[derive(Serialize, Deserialize)]
struct SummaryLine {
    summary: RunSummary,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("trace is missing its {0} line")]
    Missing(&'static str),
}

impl Trace {
    pub fn write_lines<W: Write>(&self, mut w: W) -> io::Result<()> {
        serde_json::to_writer(
            &mut w,
            &MetaLine {
                meta: self.meta.clone(),
            },
        )?;
        w.write_all(b"\n")?;
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(
            &mut w,
            &SummaryLine {
                summary: self.summary.clone(),
            },
        )?;
        w.write_all(b"\n")
    }

    pub fn to_lines(&self) -> String {
        let mut buf = Vec::new();
        self.write_lines(&mut buf).expect("write to vec");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_lines<R: BufRead>(r: R) -> Result<Trace, TraceError> {
        let lines: Vec<String> = r.lines().collect::<Result<_, _>>()?;
        let lines: Vec<(usize, &String)> = lines
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .collect();
        let (&(first_no, first), rest) = lines.split_first().ok_or(TraceError::Missing("meta"))?;
        let meta: MetaLine = serde_json::from_str(first).map_err(|source| TraceError::Parse {
            line: first_no + 1,
            source,
        })?;
        let (&(last_no, last), body) = rest.split_last().ok_or(TraceError::Missing("summary"))?;
        let summary: SummaryLine =
            serde_json::from_str(last).map_err(|source| TraceError::Parse {
                line: last_no + 1,
                source,
            })?;
        let events = body
            .iter()
            .map(|(no, l)| {
                serde_json::from_str(l).map_err(|source| TraceError::Parse {
                    line: no + 1,
                    source,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Trace {
            meta: meta.meta,
            events,
            summary: summary.summary,
        })
    }

    pub fn parse(s: &str) -> Result<Trace, TraceError> {
        Self::read_lines(s.as_bytes())
    }
}
