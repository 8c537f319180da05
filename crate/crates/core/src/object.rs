//! The replicated test object: a hash-chained append log.
//!
//! State identity is the chain digest, so an update generated on one state
//! can be recognised as foreign on any other. This is the smallest object on
//! which applying updates in the wrong order is detectable.

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use std::fmt;

/// Commands accepted larger than this are malformed.
pub const MAX_RECORD_BYTES: usize = 1 << 20;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateDigest(#[serde(with = "hex_bytes")] pub [u8; 32]);

impl StateDigest {
    pub fn short(&self) -> String {
        hex::encode(&self.0[..6])
    }
}

impl fmt::Debug for StateDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.short())
    }
}

impl fmt::Display for StateDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.short())
    }
}

mod hex_bytes {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let v = hex::decode(s).map_err(D::Error::custom)?;
        v.try_into()
            .map_err(|_| D::Error::custom("digest must be 32 bytes"))
    }
}

/// Client command `o`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum Command {
    Append {
        data: Vec<u8>,
    },
    /// Appends `data` followed by a value the executing replica draws; two
    /// executions of the same operation may legitimately differ.
    AppendNondet {
        data: Vec<u8>,
    },
    Read,
}

impl Command {
    pub fn wire_size(&self) -> usize {
        match self {
            Command::Append { data } | Command::AppendNondet { data } => data.len() + 8,
            Command::Read => 8,
        }
    }
}

/// Reply `r`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "r", rename_all = "kebab-case")]
pub enum OpResult {
    Appended { index: u64 },
    AppendedNondet { index: u64, draw: u64 },
    Length { len: u64 },
}

/// Effect payload of a state update.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "e", rename_all = "kebab-case")]
pub enum Effect {
    Append { record: Vec<u8> },
    Nothing,
}

/// δ: applicable only on the state whose digest is `pre`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateUpdate {
    pub pre: StateDigest,
    pub effect: Effect,
    pub post: StateDigest,
}

impl StateUpdate {
    pub fn wire_size(&self) -> usize {
        64 + match &self.effect {
            Effect::Append { record } => record.len(),
            Effect::Nothing => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("malformed command: {0}")]
    Malformed(&'static str),
}

/// ⊥: an update applied on a state other than the one it was generated on.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("update generated on {expected} applied on {actual}")]
pub struct Bottom {
    pub expected: StateDigest,
    pub actual: StateDigest,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplObject {
    records: Vec<Vec<u8>>,
    digest: StateDigest,
}

impl Default for ReplObject {
    fn default() -> Self {
        Self::new()
    }
}

impl ReplObject {
    pub fn new() -> Self {
        ReplObject {
            records: Vec::new(),
            digest: StateDigest(Sha256::digest(b"append-log/v1").into()),
        }
    }

    pub fn digest(&self) -> StateDigest {
        self.digest
    }

    pub fn len(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Vec<u8>] {
        &self.records
    }

    /// Rebuilds an object from its record list; the digest is a pure
    /// function of the list.
    pub fn from_records<I: IntoIterator<Item = Vec<u8>>>(records: I) -> Self {
        let mut o = ReplObject::new();
        for r in records {
            o.push(r);
        }
        o
    }

    fn chain(prev: &StateDigest, record: &[u8]) -> StateDigest {
        let mut h = Sha256::new();
        h.update(prev.0);
        h.update((record.len() as u64).to_be_bytes());
        h.update(record);
        StateDigest(h.finalize().into())
    }

    fn push(&mut self, record: Vec<u8>) {
        self.digest = Self::chain(&self.digest, &record);
        self.records.push(record);
    }

    /// Tentatively executes `cmd`, mutating `self` and returning the reply
    /// and the update that reproduces the transition. `draw_seed` feeds the
    /// nondeterministic command.
    pub fn execute(
        &mut self,
        cmd: &Command,
        draw_seed: u64,
    ) -> Result<(OpResult, StateUpdate), ExecError> {
        let pre = self.digest;
        let (result, effect) = match cmd {
            Command::Append { data } => {
                check_data(data)?;
                (
                    OpResult::Appended {
                        index: self.len() + 1,
                    },
                    Effect::Append {
                        record: data.clone(),
                    },
                )
            }
            Command::AppendNondet { data } => {
                check_data(data)?;
                let draw = splitmix(draw_seed);
                let mut record = data.clone();
                record.extend_from_slice(&draw.to_be_bytes());
                (
                    OpResult::AppendedNondet {
                        index: self.len() + 1,
                        draw,
                    },
                    Effect::Append { record },
                )
            }
            Command::Read => (OpResult::Length { len: self.len() }, Effect::Nothing),
        };
        if let Effect::Append { record } = &effect {
            self.push(record.clone());
        }
        Ok((
            result,
            StateUpdate {
                pre,
                effect,
                post: self.digest,
            },
        ))
    }

    /// `apply(δ, S)`: the post state iff `S` is the state δ was generated on.
    pub fn apply(&mut self, update: &StateUpdate) -> Result<(), Bottom> {
        if self.digest != update.pre {
            return Err(Bottom {
                expected: update.pre,
                actual: self.digest,
            });
        }
        if let Effect::Append { record } = &update.effect {
            self.push(record.clone());
        }
        debug_assert_eq!(self.digest, update.post);
        Ok(())
    }
}

fn check_data(data: &[u8]) -> Result<(), ExecError> {
    if data.is_empty() {
        return Err(ExecError::Malformed("empty append"));
    }
    if data.len() > MAX_RECORD_BYTES {
        return Err(ExecError::Malformed("record too large"));
    }
    Ok(())
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn append(s: &str) -> Command {
        Command::Append {
            data: s.as_bytes().to_vec(),
        }
    }

    #[test]
    fn append_on_empty_state() {
        let mut o = ReplObject::new();
        let empty = o.digest();
        let (r, d) = o.execute(&append("x"), 0).unwrap();
        assert_eq!(r, OpResult::Appended { index: 1 });
        assert_eq!(d.pre, empty);
        assert_eq!(d.post, ReplObject::from_records([b"x".to_vec()]).digest());
        assert_eq!(
            d.effect,
            Effect::Append {
                record: b"x".to_vec()
            }
        );
    }

    #[test]
    fn divergent_chain_reaches_bottom() {
        // A -op1-> B -op2-> C on the old primary; A -op3-> D on the new one.
        let a = ReplObject::new();
        let mut theta = a.clone();
        let (_, ab) = theta.execute(&append("op1"), 0).unwrap();
        let (_, bc) = theta.execute(&append("op2"), 0).unwrap();
        let mut theta2 = a.clone();
        let (_, ad) = theta2.execute(&append("op3"), 0).unwrap();
        assert_eq!(ab.post, bc.pre);

        let mut sigma = a.clone();
        sigma.apply(&ab).unwrap();
        sigma.apply(&bc).unwrap();
        assert_eq!(sigma.digest(), theta.digest());

        let mut backup = a.clone();
        backup.apply(&ad).unwrap();
        let err = backup.apply(&bc).unwrap_err();
        assert_eq!(err.expected, ab.post);
        assert_eq!(err.actual, ad.post);
    }

    #[test]
    fn read_is_identity_update() {
        let mut o = ReplObject::from_records([b"a".to_vec()]);
        let before = o.digest();
        let (r, d) = o.execute(&Command::Read, 0).unwrap();
        assert_eq!(r, OpResult::Length { len: 1 });
        assert_eq!(d.pre, before);
        assert_eq!(d.post, before);
        let mut other = ReplObject::from_records([b"a".to_vec()]);
        other.apply(&d).unwrap();
        assert_eq!(other.digest(), before);
    }

    #[test]
    fn nondet_seeds_give_distinct_valid_updates() {
        let a = ReplObject::new();
        let cmd = Command::AppendNondet {
            data: b"n".to_vec(),
        };
        let (_, d1) = a.clone().execute(&cmd, 1).unwrap();
        let (_, d2) = a.clone().execute(&cmd, 2).unwrap();
        assert_eq!(d1.pre, d2.pre);
        assert_ne!(d1.post, d2.post);
        for d in [&d1, &d2] {
            let mut s = a.clone();
            s.apply(d).unwrap();
            assert_eq!(s.digest(), d.post);
        }
    }

    #[test]
    fn malformed_command_leaves_state_untouched() {
        let mut o = ReplObject::new();
        let before = o.clone();
        assert!(o.execute(&Command::Append { data: vec![] }, 0).is_err());
        assert_eq!(o, before);
    }

    proptest! {
        #[test]
        fn digest_is_function_of_records(recs in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 1..8), 0..8)) {
            let mut o = ReplObject::new();
            for r in &recs {
                o.execute(&Command::Append { data: r.clone() }, 0).unwrap();
            }
            prop_assert_eq!(o.digest(), ReplObject::from_records(recs.clone()).digest());
        }

        #[test]
        fn replaying_updates_reproduces_state(recs in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 1..8), 1..8)) {
            let mut primary = ReplObject::new();
            let updates: Vec<_> = recs
                .iter()
                .map(|r| primary.execute(&Command::Append { data: r.clone() }, 0).unwrap().1)
                .collect();
            let mut backup = ReplObject::new();
            for u in &updates {
                prop_assert!(backup.apply(u).is_ok());
            }
            prop_assert_eq!(backup.digest(), primary.digest());
            // Any update applied twice is foreign on the second try.
            prop_assert!(backup.apply(updates.last().unwrap()).is_err());
        }
    }
}
