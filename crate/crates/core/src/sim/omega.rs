use super::{ProcessId, SimError, VirtualTime};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One stretch of leader-oracle outputs, effective from `from` (inclusive)
/// until the next segment starts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OmegaSegment {
    pub from: VirtualTime,
    /// `outputs[p]` is what the oracle at `p` returns.
    pub outputs: Vec<ProcessId>,
}

impl OmegaSegment {
    pub fn uniform(from: u64, n: usize, leader: u32) -> Self {
        OmegaSegment {
            from: VirtualTime(from),
            outputs: vec![ProcessId(leader); n],
        }
    }
}

/// Scripted Ω: a piecewise-constant function of time per process.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OmegaScript {
    pub segments: Vec<OmegaSegment>,
}

impl OmegaScript {
    pub fn stable(n: usize, leader: u32) -> Self {
        OmegaScript {
            segments: vec![OmegaSegment::uniform(0, n, leader)],
        }
    }

    pub fn omega(&self, p: ProcessId, t: VirtualTime) -> ProcessId {
        let seg = self
            .segments
            .iter()
            .take_while(|s| s.from <= t)
            .last()
            .expect("validated script starts at 0");
        seg.outputs[p.index()]
    }

    pub fn last(&self) -> &OmegaSegment {
        self.segments.last().expect("validated script is non-empty")
    }

    /// The common leader of the final segment among `correct` processes, if
    /// they agree.
    pub fn final_leader(&self, correct: impl IntoIterator<Item = ProcessId>) -> Option<ProcessId> {
        let last = self.last();
        let mut leader = None;
        for p in correct {
            let out = last.outputs[p.index()];
            match leader {
                None => leader = Some(out),
                Some(l) if l != out => return None,
                _ => {}
            }
        }
        leader
    }

    pub fn validate(&self, n: usize, crashes: &CrashSchedule) -> Result<(), SimError> {
        if n == 0 {
            return Err(SimError::InvalidOmega("n must be >= 1".into()));
        }
        let first = self
            .segments
            .first()
            .ok_or_else(|| SimError::InvalidOmega("script has no segments".into()))?;
        if first.from != VirtualTime::ZERO {
            return Err(SimError::InvalidOmega(
                "first segment must start at 0".into(),
            ));
        }
        for w in self.segments.windows(2) {
            if w[1].from <= w[0].from {
                return Err(SimError::InvalidOmega(format!(
                    "segment starts must strictly increase ({} then {})",
                    w[0].from, w[1].from
                )));
            }
        }
        for s in &self.segments {
            if s.outputs.len() != n {
                return Err(SimError::InvalidOmega(format!(
                    "segment at {} has {} outputs for {n} processes",
                    s.from,
                    s.outputs.len()
                )));
            }
            if let Some(bad) = s.outputs.iter().find(|o| o.index() >= n) {
                return Err(SimError::InvalidOmega(format!("output {bad} out of range")));
            }
        }
        let correct: Vec<_> = (0..n as u32)
            .map(ProcessId)
            .filter(|p| !crashes.crashes(*p))
            .collect();
        let leader = self.final_leader(correct.iter().copied()).ok_or_else(|| {
            SimError::InvalidOmega("final segment disagrees among correct processes".into())
        })?;
        if crashes.crashes(leader) {
            return Err(SimError::InvalidOmega(format!(
                "final leader {leader} crashes"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashSchedule {
    pub crashes: BTreeMap<ProcessId, VirtualTime>,
}

impl CrashSchedule {
    pub fn none() -> Self {
        CrashSchedule::default()
    }

    pub fn crash_time(&self, p: ProcessId) -> Option<VirtualTime> {
        self.crashes.get(&p).copied()
    }

    pub fn crashes(&self, p: ProcessId) -> bool {
        self.crashes.contains_key(&p)
    }

    pub fn crashed_by(&self, p: ProcessId, t: VirtualTime) -> bool {
        self.crash_time(p).is_some_and(|c| c <= t)
    }

    pub fn validate(&self, n: usize) -> Result<(), SimError> {
        if let Some(p) = self.crashes.keys().find(|p| p.index() >= n) {
            return Err(SimError::InvalidCrash(format!("{p} out of range")));
        }
        if 2 * self.crashes.len() >= n {
            return Err(SimError::InvalidCrash(format!(
                "{} crashes leave no correct majority of {n}",
                self.crashes.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn script() -> OmegaScript {
        OmegaScript {
            segments: vec![
                OmegaSegment::uniform(0, 3, 1),
                OmegaSegment::uniform(100, 3, 2),
            ],
        }
    }

    #[test]
    fn segment_lookup_is_inclusive_at_boundary() {
        let s = script();
        assert_eq!(s.omega(ProcessId(2), VirtualTime(50)), ProcessId(1));
        assert_eq!(s.omega(ProcessId(2), VirtualTime(99)), ProcessId(1));
        assert_eq!(s.omega(ProcessId(2), VirtualTime(100)), ProcessId(2));
    }

    #[test]
    fn divergent_segment_allows_two_leaders() {
        let s = OmegaScript {
            segments: vec![
                OmegaSegment {
                    from: VirtualTime(0),
                    outputs: vec![ProcessId(0), ProcessId(1), ProcessId(1)],
                },
                OmegaSegment::uniform(50, 3, 1),
            ],
        };
        assert!(s.validate(3, &CrashSchedule::none()).is_ok());
        assert_eq!(s.omega(ProcessId(0), VirtualTime(0)), ProcessId(0));
        assert_eq!(s.omega(ProcessId(1), VirtualTime(0)), ProcessId(1));
    }

    #[test]
    fn validation_rejects_bad_scripts() {
        let none = CrashSchedule::none();
        let mut s = script();
        s.segments[1].from = VirtualTime(0);
        assert!(s.validate(3, &none).is_err());

        let s = OmegaScript {
            segments: vec![OmegaSegment::uniform(5, 3, 0)],
        };
        assert!(s.validate(3, &none).is_err());

        let s = OmegaScript {
            segments: vec![OmegaSegment {
                from: VirtualTime(0),
                outputs: vec![ProcessId(0), ProcessId(1), ProcessId(1)],
            }],
        };
        assert!(s.validate(3, &none).is_err(), "final segment must agree");

        let mut crashes = CrashSchedule::none();
        crashes.crashes.insert(ProcessId(2), VirtualTime(10));
        assert!(
            script().validate(3, &crashes).is_err(),
            "final leader crashes"
        );
    }

    #[test]
    fn crash_schedule_needs_correct_majority() {
        let mut c = CrashSchedule::none();
        c.crashes.insert(ProcessId(0), VirtualTime(1));
        assert!(c.validate(3).is_ok());
        c.crashes.insert(ProcessId(1), VirtualTime(1));
        assert!(c.validate(3).is_err());
        assert!(c.validate(5).is_ok());
        assert!(c.crashed_by(ProcessId(0), VirtualTime(1)));
        assert!(!c.crashed_by(ProcessId(0), VirtualTime(0)));
    }
}
