//! Exhaustive linearizability search for small register histories.
//!
//! Looks for a sequential order of all complete operations, plus any subset
//! of incomplete writes, that respects real-time precedence and in which
//! every read returns the value of the latest preceding write (or `v0`).
//! Incomplete reads returned nothing and place no constraint.

use std::collections::{BTreeMap, HashSet};

use crate::types::Value;

use super::history::History;
use super::CheckError;

/// Largest history the search accepts.
pub const MAX_OPS: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlackboxVerdict {
    /// A legal sequential order, as op ids.
    Linearizable(Vec<usize>),
    Violation(ViolationCertificate),
}

impl BlackboxVerdict {
    pub fn is_linearizable(&self) -> bool {
        matches!(self, BlackboxVerdict::Linearizable(_))
    }
}

/// Evidence that no legal order exists: the search space was exhausted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViolationCertificate {
    /// Complete operations that every order had to contain.
    pub required: Vec<usize>,
    /// A longest legal prefix the search reached before getting stuck.
    pub longest_prefix: Vec<usize>,
    /// Distinct (placed set, last write) states explored.
    pub states_explored: usize,
}

struct Search<'a> {
    history: &'a History,
    /// Bit mask of ops that must precede each op.
    preds: Vec<u32>,
    required: u32,
    candidates: u32,
    dead: HashSet<(u32, Option<usize>)>,
    path: Vec<usize>,
    longest: Vec<usize>,
}

impl Search<'_> {
    fn value_after(&self, last: Option<usize>) -> Value {
        last.and_then(|w| self.history.ops[w].value).unwrap_or(Value::INITIAL)
    }

    fn dfs(&mut self, placed: u32, last: Option<usize>) -> bool {
        if placed & self.required == self.required {
            return true;
        }
        if self.dead.contains(&(placed, last)) {
            return false;
        }
        if self.path.len() > self.longest.len() {
            self.longest = self.path.clone();
        }
        let ops = &self.history.ops;
        #[allow(clippy::needless_range_loop)]
        for i in 0..ops.len() {
            let bit = 1u32 << i;
            if self.candidates & bit == 0 || placed & bit != 0 {
                continue;
            }
            // Every complete op that must come first has to be placed already.
            if self.preds[i] & self.required & !placed != 0 {
                continue;
            }
            let next_last = if ops[i].is_write() {
                Some(i)
            } else {
                if ops[i].value != Some(self.value_after(last)) {
                    continue;
                }
                last
            };
            self.path.push(i);
            if self.dfs(placed | bit, next_last) {
                return true;
            }
            self.path.pop();
        }
        self.dead.insert((placed, last));
        false
    }
}

fn validate(history: &History) -> Result<(), CheckError> {
    if history.len() > MAX_OPS {
        return Err(CheckError::TooManyOps(history.len(), MAX_OPS));
    }
    let mut seen: BTreeMap<Value, usize> = BTreeMap::new();
    for (i, r) in history.ops.iter().enumerate() {
        if r.is_write() {
            let v = r.value.ok_or(CheckError::MissingValue(i))?;
            if v == Value::INITIAL {
                return Err(CheckError::DuplicateWriteValue(v));
            }
            if seen.insert(v, i).is_some() {
                return Err(CheckError::DuplicateWriteValue(v));
            }
        } else if r.is_complete() && r.value.is_none() {
            return Err(CheckError::MissingValue(i));
        }
    }
    Ok(())
}

/// Decides linearizability of `history` by exhaustive search.
pub fn check_atomicity_blackbox(history: &History) -> Result<BlackboxVerdict, CheckError> {
    validate(history)?;
    let ops = &history.ops;
    let mut preds = vec![0u32; ops.len()];
    let mut required = 0u32;
    let mut candidates = 0u32;
    for (i, r) in ops.iter().enumerate() {
        for (j, p) in ops.iter().enumerate() {
            if p.precedes(r) {
                preds[i] |= 1 << j;
            }
        }
        if r.is_complete() {
            required |= 1 << i;
        }
        if r.is_complete() || r.is_write() {
            candidates |= 1 << i;
        }
    }
    let mut search = Search {
        history,
        preds,
        required,
        candidates,
        dead: HashSet::new(),
        path: Vec::new(),
        longest: Vec::new(),
    };
    if search.dfs(0, None) {
        return Ok(BlackboxVerdict::Linearizable(search.path));
    }
    Ok(BlackboxVerdict::Violation(ViolationCertificate {
        required: (0..ops.len()).filter(|i| required & (1 << i) != 0).collect(),
        longest_prefix: search.longest,
        states_explored: search.dead.len(),
    }))
}

/// Checks that `order` is a legal linearization of `history`: each complete
/// op appears exactly once, only writes may be added from the incomplete
/// ops, real-time precedence is respected, and reads return the latest
/// written value.
pub fn replay_linearization(history: &History, order: &[usize]) -> Result<(), String> {
    let ops = &history.ops;
    let mut seen = vec![false; ops.len()];
    for &i in order {
        let r = ops.get(i).ok_or_else(|| format!("op {i} does not exist"))?;
        if seen[i] {
            return Err(format!("op {i} appears twice"));
        }
        if !r.is_complete() && !r.is_write() {
            return Err(format!("incomplete read {i} cannot be linearized"));
        }
        seen[i] = true;
    }
    if let Some(i) = (0..ops.len()).find(|i| ops[*i].is_complete() && !seen[*i]) {
        return Err(format!("complete op {i} is missing"));
    }
    let mut current = Value::INITIAL;
    for (pos, &i) in order.iter().enumerate() {
        if let Some(&j) = order[pos + 1..].iter().find(|j| ops[**j].precedes(&ops[i])) {
            return Err(format!("op {j} precedes op {i} in real time but is ordered after it"));
        }
        let r = &ops[i];
        if r.is_write() {
            current = r.value.unwrap_or(Value::INITIAL);
        } else if r.value != Some(current) {
            return Err(format!(
                "read {i} returned {:?} but the register holds {current}",
                r.value
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::history::HistoryRecord;
    use crate::sim::trace::OpKind;

    fn op(kind: OpKind, val: u64, inv: u64, resp: Option<u64>) -> HistoryRecord {
        HistoryRecord {
            client: if kind == OpKind::Write { 4 } else { 5 },
            kind,
            value: Some(Value(val)),
            invoke: inv,
            respond: resp,
            tau: None,
        }
    }

    #[test]
    fn stale_read_after_completed_write_is_a_violation() {
        let h = History::new(vec![op(OpKind::Write, 1, 0, Some(5)), op(OpKind::Read, 0, 6, Some(9))]);
        let v = check_atomicity_blackbox(&h).unwrap();
        assert!(matches!(v, BlackboxVerdict::Violation(ref c) if c.required == vec![0, 1]));
    }

    #[test]
    fn concurrent_read_may_precede_the_write() {
        let h = History::new(vec![op(OpKind::Write, 1, 0, Some(5)), op(OpKind::Read, 0, 2, Some(4))]);
        assert_eq!(
            check_atomicity_blackbox(&h).unwrap(),
            BlackboxVerdict::Linearizable(vec![1, 0])
        );
    }

    #[test]
    fn read_of_overwritten_value_is_a_violation() {
        let h = History::new(vec![
            op(OpKind::Write, 1, 0, Some(2)),
            op(OpKind::Write, 2, 3, Some(5)),
            op(OpKind::Read, 1, 6, Some(8)),
        ]);
        assert!(!check_atomicity_blackbox(&h).unwrap().is_linearizable());
    }

    #[test]
    fn incomplete_write_may_take_effect() {
        let h = History::new(vec![op(OpKind::Write, 1, 0, None), op(OpKind::Read, 1, 6, Some(9))]);
        let v = check_atomicity_blackbox(&h).unwrap();
        assert_eq!(v, BlackboxVerdict::Linearizable(vec![0, 1]));
    }

    #[test]
    fn incomplete_read_is_ignored() {
        let mut r = op(OpKind::Read, 0, 6, None);
        r.value = None;
        let h = History::new(vec![op(OpKind::Write, 1, 0, Some(5)), r]);
        assert!(check_atomicity_blackbox(&h).unwrap().is_linearizable());
    }

    #[test]
    fn input_errors() {
        let many = History::new(
            (0..13)
                .map(|i| op(OpKind::Write, i + 1, 2 * i, Some(2 * i + 1)))
                .collect(),
        );
        assert_eq!(
            check_atomicity_blackbox(&many),
            Err(CheckError::TooManyOps(13, MAX_OPS))
        );
        let dup = History::new(vec![op(OpKind::Write, 1, 0, Some(1)), op(OpKind::Write, 1, 2, Some(3))]);
        assert_eq!(
            check_atomicity_blackbox(&dup),
            Err(CheckError::DuplicateWriteValue(Value(1)))
        );
    }

    #[test]
    fn replay_rejects_real_time_inversions() {
        let h = History::new(vec![op(OpKind::Write, 1, 0, Some(5)), op(OpKind::Read, 0, 6, Some(9))]);
        assert!(replay_linearization(&h, &[1, 0]).is_err());
        assert!(replay_linearization(&h, &[0, 1]).is_err());
        assert!(replay_linearization(&h, &[0]).is_err());
    }
}
