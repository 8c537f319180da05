//! Post-hoc property checks over traces.
//!
//! Every check is a pure function of the trace. Violations are results,
//! reported with the indices of the trace events that witness them.

mod abcast;
mod barrier_free;
mod consensus;
mod index;
pub mod linearizability;
mod liveness;
mod primary;
mod replication;

pub use index::{Index, PrimaryEpoch};
pub use primary::{derive_primary_mapping, Lambda, LambdaError};

use crate::protocol::Protocol;
use crate::trace::Trace;
use serde::Serialize;
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Property {
    Integrity,
    TotalOrder,
    Agreement,
    LocalPrimaryOrder,
    GlobalPrimaryOrder,
    PrimaryIntegrity,
    /// Global primary order follows from the other four; checked as a
    /// consistency condition on the checker itself.
    ImpliedGlobalOrder,
    BarrierContract,
    ConsensusAgreement,
    ConsensusValidity,
    ConsensusIntegrity,
    BottomFreedom,
    AtMostOnce,
    DigestConvergence,
    EpochGapFree,
    DeliverySymmetry,
    EpochOrder,
    Sequentiality,
    EventualSinglePrimary,
    DeliveryLiveness,
    ClientProgress,
    Linearizability,
}

impl Property {
    pub fn name(self) -> &'static str {
        match self {
            Property::Integrity => "integrity",
            Property::TotalOrder => "total-order",
            Property::Agreement => "agreement",
            Property::LocalPrimaryOrder => "local-primary-order",
            Property::GlobalPrimaryOrder => "global-primary-order",
            Property::PrimaryIntegrity => "primary-integrity",
            Property::ImpliedGlobalOrder => "implied-global-order",
            Property::BarrierContract => "barrier-contract",
            Property::ConsensusAgreement => "consensus-agreement",
            Property::ConsensusValidity => "consensus-validity",
            Property::ConsensusIntegrity => "consensus-integrity",
            Property::BottomFreedom => "bottom-freedom",
            Property::AtMostOnce => "at-most-once",
            Property::DigestConvergence => "digest-convergence",
            Property::EpochGapFree => "epoch-gap-free",
            Property::DeliverySymmetry => "delivery-symmetry",
            Property::EpochOrder => "epoch-order",
            Property::Sequentiality => "sequentiality",
            Property::EventualSinglePrimary => "eventual-single-primary",
            Property::DeliveryLiveness => "delivery-liveness",
            Property::ClientProgress => "client-progress",
            Property::Linearizability => "linearizability",
        }
    }

    /// The six broadcast safety properties.
    pub const POABCAST: [Property; 6] = [
        Property::Integrity,
        Property::TotalOrder,
        Property::Agreement,
        Property::LocalPrimaryOrder,
        Property::GlobalPrimaryOrder,
        Property::PrimaryIntegrity,
    ];

    pub fn is_liveness(self) -> bool {
        matches!(
            self,
            Property::EventualSinglePrimary | Property::DeliveryLiveness | Property::ClientProgress
        )
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Violated,
    /// The trace is too short to decide.
    Inconclusive,
    /// Not applicable to this protocol or trace.
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub property: Property,
    pub status: Status,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
    /// Trace event indices witnessing a violation.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<usize>,
}

impl Verdict {
    pub fn pass(property: Property) -> Self {
        Verdict {
            property,
            status: Status::Pass,
            detail: String::new(),
            events: Vec::new(),
        }
    }

    pub fn violated(property: Property, detail: impl Into<String>, events: Vec<usize>) -> Self {
        Verdict {
            property,
            status: Status::Violated,
            detail: detail.into(),
            events,
        }
    }

    pub fn skipped(property: Property, why: impl Into<String>) -> Self {
        Verdict {
            property,
            status: Status::Skipped,
            detail: why.into(),
            events: Vec::new(),
        }
    }

    pub fn inconclusive(property: Property, why: impl Into<String>) -> Self {
        Verdict {
            property,
            status: Status::Inconclusive,
            detail: why.into(),
            events: Vec::new(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.detail = note.into();
        self
    }

    /// The first violation found, or a pass.
    fn first(property: Property, found: Option<(String, Vec<usize>)>) -> Self {
        match found {
            Some((d, ev)) => Verdict::violated(property, d, ev),
            None => Verdict::pass(property),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Report {
    pub verdicts: Vec<Verdict>,
}

impl Report {
    pub fn get(&self, p: Property) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.property == p)
    }

    pub fn status(&self, p: Property) -> Option<Status> {
        self.get(p).map(|v| v.status)
    }

    pub fn violations(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts
            .iter()
            .filter(|v| v.status == Status::Violated)
    }

    pub fn safety_violations(&self) -> impl Iterator<Item = &Verdict> {
        self.violations().filter(|v| !v.property.is_liveness())
    }

    pub fn liveness_failed(&self) -> bool {
        self.violations().any(|v| v.property.is_liveness())
    }

    pub fn inconclusive(&self) -> bool {
        self.verdicts
            .iter()
            .any(|v| v.status == Status::Inconclusive)
    }

    pub fn safe(&self) -> bool {
        self.safety_violations().next().is_none()
    }

    /// Human-readable rendering; `trace` resolves witness indices.
    pub fn render(&self, trace: &Trace) -> String {
        let mut out = String::new();
        for v in &self.verdicts {
            let status = match v.status {
                Status::Pass => "pass",
                Status::Violated => "VIOLATED",
                Status::Inconclusive => "inconclusive",
                Status::Skipped => "skipped",
            };
            out.push_str(&format!("{:<24} {status}", v.property.name()));
            if !v.detail.is_empty() {
                out.push_str(&format!("  {}", v.detail));
            }
            out.push('\n');
            if v.status == Status::Violated {
                for &i in v.events.iter().take(4) {
                    if let Some(e) = trace.events.get(i) {
                        let json = serde_json::to_string(e).unwrap_or_default();
                        out.push_str(&format!("    #{i} {json}\n"));
                    }
                }
            }
        }
        out
    }
}

/// Runs every check that applies to the trace's protocol.
pub fn check_all(trace: &Trace) -> Report {
    let ix = Index::new(trace);
    let mut verdicts = Vec::new();
    verdicts.extend(abcast::check(&ix));
    match derive_primary_mapping(&ix, trace.meta.protocol) {
        Ok(lambda) => {
            verdicts.extend(primary::check(&ix, &lambda));
            verdicts.push(primary::check_barrier(&ix, &lambda, trace.meta.protocol));
        }
        Err(e) => {
            for p in [
                Property::LocalPrimaryOrder,
                Property::GlobalPrimaryOrder,
                Property::PrimaryIntegrity,
            ] {
                verdicts.push(Verdict::violated(
                    p,
                    format!("no primary mapping: {e}"),
                    e.events(),
                ));
            }
        }
    }
    let implied_ok = verdicts.iter().filter(|v| {
        matches!(
            v.property,
            Property::Integrity
                | Property::TotalOrder
                | Property::LocalPrimaryOrder
                | Property::PrimaryIntegrity
        )
    });
    let premises = implied_ok.clone().all(|v| v.status == Status::Pass) && implied_ok.count() == 4;
    let gpo = verdicts
        .iter()
        .find(|v| v.property == Property::GlobalPrimaryOrder)
        .map(|v| v.status);
    verdicts.push(if premises && gpo == Some(Status::Violated) {
        Verdict::violated(
            Property::ImpliedGlobalOrder,
            "GPO violated although its premises hold",
            Vec::new(),
        )
    } else {
        Verdict::pass(Property::ImpliedGlobalOrder)
    });
    verdicts.extend(consensus::check(&ix));
    verdicts.extend(replication::check(&ix));
    if trace.meta.protocol == Protocol::BarrierFree {
        verdicts.extend(barrier_free::check(&ix));
    }
    verdicts.push(if trace.meta.protocol == Protocol::TauSeq {
        primary::check_sequential(&ix)
    } else {
        Verdict::skipped(Property::Sequentiality, "parallel protocol")
    });
    verdicts.extend(liveness::check(&ix));
    verdicts.push(linearizability::check_trace(trace));
    Report { verdicts }
}
