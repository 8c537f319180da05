//! Brute-force linearizability of small client histories against the
//! sequential append-log model.

use super::{Property, Verdict};
use crate::object::{Command, OpResult};
use crate::trace::{EventKind, Trace};
use crate::value::ClientId;
use std::collections::{HashMap, HashSet};

/// Largest history the exhaustive search accepts.
pub const MAX_OPS: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HistOp {
    pub client: ClientId,
    pub seq: u64,
    pub cmd: Command,
    /// Trace position of the invocation and of the response, if any.
    pub invoke: usize,
    pub response: Option<(usize, OpResult)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct History {
    pub ops: Vec<HistOp>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum LinError {
    #[error("history of {0} operations exceeds the exhaustive-search cap of {MAX_OPS}")]
    TooLarge(usize),
}

pub fn history(trace: &Trace) -> History {
    let mut ops: Vec<HistOp> = Vec::new();
    let mut at: HashMap<(ClientId, u64), usize> = HashMap::new();
    for (idx, e) in trace.events.iter().enumerate() {
        match &e.kind {
            EventKind::Invoke { client, seq, cmd } => {
                at.insert((*client, *seq), ops.len());
                ops.push(HistOp {
                    client: *client,
                    seq: *seq,
                    cmd: cmd.clone(),
                    invoke: idx,
                    response: None,
                });
            }
            EventKind::Response {
                client,
                seq,
                result,
            } => {
                if let Some(&k) = at.get(&(*client, *seq)) {
                    ops[k].response.get_or_insert((idx, result.clone()));
                }
            }
            _ => {}
        }
    }
    History { ops }
}

/// Model step: the result the sequential object gives at length `len`, or
/// `None` if `got` is not a possible result there.
fn accepts(cmd: &Command, len: u64, got: Option<&OpResult>) -> Option<u64> {
    let (ok, next) = match (cmd, got) {
        (Command::Append { .. }, Some(OpResult::Appended { index })) => {
            (*index == len + 1, len + 1)
        }
        (Command::AppendNondet { .. }, Some(OpResult::AppendedNondet { index, .. })) => {
            (*index == len + 1, len + 1)
        }
        (Command::Read, Some(OpResult::Length { len: l })) => (*l == len, len),
        (Command::Append { .. } | Command::AppendNondet { .. }, None) => (true, len + 1),
        (Command::Read, None) => (true, len),
        _ => (false, len),
    };
    ok.then_some(next)
}

/// Whether some total order of the operations that respects real time
/// replays on the model with the observed results. Operations without a
/// response may take effect at any point after their invocation, or never.
pub fn check_linearizable(h: &History) -> Result<bool, LinError> {
    let n = h.ops.len();
    if n > MAX_OPS {
        return Err(LinError::TooLarge(n));
    }
    // before[i]: ops that responded before i was invoked.
    let before: Vec<u32> = h
        .ops
        .iter()
        .map(|op| {
            h.ops
                .iter()
                .enumerate()
                .filter(|(_, o)| o.response.as_ref().is_some_and(|(r, _)| *r < op.invoke))
                .fold(0u32, |m, (j, _)| m | 1 << j)
        })
        .collect();
    let complete: u32 = h
        .ops
        .iter()
        .enumerate()
        .filter(|(_, o)| o.response.is_some())
        .fold(0, |m, (j, _)| m | 1 << j);
    let mut dead = HashSet::new();
    Ok(search(h, &before, complete, 0, 0, &mut dead))
}

fn search(
    h: &History,
    before: &[u32],
    complete: u32,
    done: u32,
    len: u64,
    dead: &mut HashSet<u32>,
) -> bool {
    if done & complete == complete {
        return true;
    }
    if dead.contains(&done) {
        return false;
    }
    for (i, op) in h.ops.iter().enumerate() {
        let bit = 1 << i;
        if done & bit != 0 || before[i] & !done != 0 {
            continue;
        }
        if let Some(next) = accepts(&op.cmd, len, op.response.as_ref().map(|(_, r)| r)) {
            if search(h, before, complete, done | bit, next, dead) {
                return true;
            }
        }
    }
    dead.insert(done);
    false
}

pub fn check_trace(trace: &Trace) -> Verdict {
    let h = history(trace);
    match check_linearizable(&h) {
        Ok(true) => Verdict::pass(Property::Linearizability),
        Ok(false) => Verdict::violated(
            Property::Linearizability,
            "no linearization explains the client-visible results",
            h.ops
                .iter()
                .filter_map(|o| o.response.as_ref().map(|(i, _)| *i))
                .collect(),
        ),
        Err(e) => Verdict::skipped(Property::Linearizability, e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(client: u32, inv: usize, resp: Option<(usize, OpResult)>, cmd: Command) -> HistOp {
        HistOp {
            client: ClientId(client),
            seq: 1,
            cmd,
            invoke: inv,
            response: resp,
        }
    }

    fn append() -> Command {
        Command::Append {
            data: b"x".to_vec(),
        }
    }

    #[test]
    fn sequential_history_is_linearizable() {
        let h = History {
            ops: vec![
                op(0, 0, Some((1, OpResult::Appended { index: 1 })), append()),
                op(0, 2, Some((3, OpResult::Appended { index: 2 })), append()),
                op(0, 4, Some((5, OpResult::Length { len: 2 })), Command::Read),
            ],
        };
        assert_eq!(check_linearizable(&h), Ok(true));
    }

    #[test]
    fn concurrent_appends_may_swap() {
        let h = History {
            ops: vec![
                op(0, 0, Some((3, OpResult::Appended { index: 2 })), append()),
                op(1, 1, Some((2, OpResult::Appended { index: 1 })), append()),
            ],
        };
        assert_eq!(check_linearizable(&h), Ok(true));
    }

    #[test]
    fn real_time_order_is_respected() {
        let h = History {
            ops: vec![
                op(0, 0, Some((1, OpResult::Appended { index: 2 })), append()),
                op(1, 2, Some((3, OpResult::Appended { index: 1 })), append()),
            ],
        };
        assert_eq!(check_linearizable(&h), Ok(false));
    }

    #[test]
    fn pending_operation_may_take_effect() {
        let h = History {
            ops: vec![
                op(0, 0, None, append()),
                op(1, 1, Some((2, OpResult::Length { len: 1 })), Command::Read),
                op(2, 3, Some((4, OpResult::Appended { index: 2 })), append()),
            ],
        };
        assert_eq!(check_linearizable(&h), Ok(true));
    }

    #[test]
    fn wrong_reply_is_caught() {
        let h = History {
            ops: vec![op(
                0,
                0,
                Some((1, OpResult::Appended { index: 2 })),
                append(),
            )],
        };
        assert_eq!(check_linearizable(&h), Ok(false));
    }

    #[test]
    fn oversized_history_is_refused() {
        let ops = (0..11).map(|i| op(i, i as usize, None, append())).collect();
        assert_eq!(
            check_linearizable(&History { ops }),
            Err(LinError::TooLarge(11))
        );
    }
}
