use super::{ActorId, SimError, VirtualTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Per-message propagation delay.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DelayModel {
    Fixed {
        delta: u64,
    },
    /// Uniform in `[min, max]`, drawn as a pure function of `(seed, seq)`.
    Jitter {
        min: u64,
        max: u64,
        seed: u64,
    },
}

impl DelayModel {
    pub fn validate(&self) -> Result<(), SimError> {
        match *self {
            DelayModel::Fixed { delta: 0 } => {
                Err(SimError::InvalidDelay("fixed delta must be >= 1".into()))
            }
            DelayModel::Jitter { min, max, .. } if min == 0 || min > max => Err(
                SimError::InvalidDelay(format!("jitter needs 1 <= min <= max, got {min}..{max}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn delay(&self, seq: u64) -> u64 {
        match *self {
            DelayModel::Fixed { delta } => delta,
            DelayModel::Jitter { min, max, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(seq);
                rng.gen_range(min..=max)
            }
        }
    }

    /// Nominal one-way delay, used by harness code for timeouts.
    pub fn nominal(&self) -> u64 {
        match *self {
            DelayModel::Fixed { delta } => delta,
            DelayModel::Jitter { max, .. } => max,
        }
    }
}

/// Overrides the delay of messages on one directed link sent during
/// `[sent_from, sent_until)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkRule {
    pub from: u32,
    pub to: u32,
    pub sent_from: u64,
    pub sent_until: u64,
    pub delay: u64,
}

impl LinkRule {
    fn matches(&self, from: ActorId, to: ActorId, now: VirtualTime) -> bool {
        self.from == from.0 && self.to == to.0 && now.0 >= self.sent_from && now.0 < self.sent_until
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub delay: DelayModel,
    /// Per-message reordering; off keeps every directed link FIFO.
    #[serde(default)]
    pub reorder: bool,
    /// Serialization cost at the sender, in ticks per byte. Each actor has
    /// one uplink; copies of a broadcast queue behind each other.
    #[serde(default)]
    pub per_byte: u64,
    #[serde(default)]
    pub rules: Vec<LinkRule>,
}

impl NetConfig {
    pub fn fixed(delta: u64) -> Self {
        NetConfig {
            delay: DelayModel::Fixed { delta },
            reorder: false,
            per_byte: 0,
            rules: Vec::new(),
        }
    }

    pub(crate) fn propagation(
        &self,
        from: ActorId,
        to: ActorId,
        now: VirtualTime,
        seq: u64,
    ) -> u64 {
        self.rules
            .iter()
            .find(|r| r.matches(from, to, now))
            .map(|r| r.delay)
            .unwrap_or_else(|| self.delay.delay(seq))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_is_pure_in_seed_and_seq() {
        let m = DelayModel::Jitter {
            min: 8,
            max: 12,
            seed: 1,
        };
        for seq in 0..200 {
            let d = m.delay(seq);
            assert!((8..=12).contains(&d));
            assert_eq!(d, m.delay(seq));
        }
        let spread: std::collections::BTreeSet<_> = (0..200).map(|s| m.delay(s)).collect();
        assert!(spread.len() > 1);
    }

    #[test]
    fn validation() {
        assert!(DelayModel::Fixed { delta: 0 }.validate().is_err());
        assert!(DelayModel::Fixed { delta: 1 }.validate().is_ok());
        assert!(DelayModel::Jitter {
            min: 0,
            max: 4,
            seed: 0
        }
        .validate()
        .is_err());
        assert!(DelayModel::Jitter {
            min: 5,
            max: 4,
            seed: 0
        }
        .validate()
        .is_err());
        assert!(DelayModel::Jitter {
            min: 4,
            max: 4,
            seed: 0
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn link_rule_window_is_half_open() {
        let mut net = NetConfig::fixed(10);
        net.rules.push(LinkRule {
            from: 0,
            to: 1,
            sent_from: 20,
            sent_until: 21,
            delay: 200,
        });
        assert_eq!(
            net.propagation(ActorId(0), ActorId(1), VirtualTime(20), 0),
            200
        );
        assert_eq!(
            net.propagation(ActorId(0), ActorId(1), VirtualTime(21), 0),
            10
        );
        assert_eq!(
            net.propagation(ActorId(0), ActorId(2), VirtualTime(20), 0),
            10
        );
    }
}
