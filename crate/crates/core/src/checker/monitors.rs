//! Trace monitors for the protocol-level properties the correctness
//! argument relies on.

use std::collections::BTreeMap;

use crate::sim::trace::{TraceEvent, TraceRecord};
use crate::types::{ProcessId, ReadReq, RequestId, WriteReq};

/// Outcome of one monitor: the list of violations it found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonitorReport {
    pub name: &'static str,
    pub violations: Vec<String>,
}

impl MonitorReport {
    fn new(name: &'static str, violations: Vec<String>) -> Self {
        MonitorReport { name, violations }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn read_starts(trace: &[TraceRecord]) -> BTreeMap<RequestId, u64> {
    trace
        .iter()
        .filter_map(|r| match r.event {
            TraceEvent::RqStart { id, .. } => Some((id, r.step)),
            _ => None,
        })
        .collect()
}

/// Every timestamp-querying read quorum started after a `TSVal(x, _)` write
/// quorum completed returns some timestamp at least `x`.
pub fn check_real_time_property(trace: &[TraceRecord]) -> MonitorReport {
    let starts = read_starts(trace);
    let writes: Vec<(u64, RequestId, _)> = trace
        .iter()
        .filter_map(|r| match &r.event {
            TraceEvent::WqDone {
                id,
                req: WriteReq::TsVal(ts, _),
                ..
            } => Some((r.step, *id, *ts)),
            _ => None,
        })
        .collect();
    let mut bad = Vec::new();
    for r in trace {
        let TraceEvent::RqDone { id, req, tss, .. } = &r.event else {
            continue;
        };
        if !req.queries_timestamp() {
            continue;
        }
        let Some(&start) = starts.get(id) else {
            continue;
        };
        let best = tss.iter().max();
        for (done, wid, x) in &writes {
            if *done < start && best.is_none_or(|b| b < x) {
                bad.push(format!(
                    "read quorum {id} ({req}) started after write quorum {wid} stored {x} but saw max {}",
                    best.map_or_else(|| "-".to_string(), ToString::to_string)
                ));
            }
        }
    }
    MonitorReport::new("real_time", bad)
}

/// Per replica, the incarnation numbers chosen by successive recoveries are
/// strictly increasing and the first is positive.
pub fn check_incarnation_monotonicity(trace: &[TraceRecord]) -> MonitorReport {
    let mut last: BTreeMap<ProcessId, u64> = BTreeMap::new();
    let mut bad = Vec::new();
    for r in trace {
        if let TraceEvent::IncChosen { inc } = r.event {
            let prev = last.insert(r.actor, inc).unwrap_or(0);
            if inc <= prev {
                bad.push(format!("replica {} chose incarnation {inc} after {prev}", r.actor));
            }
        }
    }
    MonitorReport::new("incarnation_monotonicity", bad)
}

/// For every completed crash-consistent `preCV`/`CV` write quorum and every
/// member that crashes after acknowledging, the `State` read of its next
/// recovery starts after the write quorum's crash-vector read did.
pub fn check_crash_consistency(trace: &[TraceRecord]) -> MonitorReport {
    let mut bad = Vec::new();
    for r in trace {
        let TraceEvent::WqDone {
            id,
            req: WriteReq::PreCv(..) | WriteReq::Cv(..),
            quorum,
            cv_read: Some(cv_read),
            ..
        } = &r.event
        else {
            continue;
        };
        for &(j, acked) in quorum {
            let crash = trace
                .iter()
                .find(|c| c.actor == j && c.event == TraceEvent::Crash && c.step > acked);
            let Some(crash) = crash else { continue };
            let state_read = trace.iter().find(|s| {
                s.actor == j
                    && s.step > crash.step
                    && matches!(
                        s.event,
                        TraceEvent::RqStart {
                            req: ReadReq::State(_),
                            ..
                        }
                    )
            });
            if let Some(s) = state_read {
                if s.step <= *cv_read {
                    bad.push(format!(
                        "replica {j} acked {id} at step {acked} and read State at step {} before the crash-vector read at step {cv_read}",
                        s.step
                    ));
                }
            }
        }
    }
    MonitorReport::new("crash_consistency", bad)
}

/// Every started recovery completes unless a crash of the same replica
/// interrupts it.
pub fn check_recovery_termination(trace: &[TraceRecord]) -> MonitorReport {
    let mut open: BTreeMap<ProcessId, u64> = BTreeMap::new();
    for r in trace {
        match r.event {
            TraceEvent::RecoveryStart => {
                open.insert(r.actor, r.t);
            }
            TraceEvent::Recovered | TraceEvent::Crash => {
                open.remove(&r.actor);
            }
            _ => {}
        }
    }
    let bad = open
        .iter()
        .map(|(j, t)| format!("recovery of replica {j} started at t={t} never completed"))
        .collect();
    MonitorReport::new("recovery_termination", bad)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Liveness {
    AllComplete,
    Stalled {
        ops: Vec<usize>,
        recoveries: Vec<ProcessId>,
    },
}

impl Liveness {
    pub fn is_stalled(&self) -> bool {
        matches!(self, Liveness::Stalled { .. })
    }
}

/// Reads the end-of-run record: which ops and recoveries never finished.
pub fn check_liveness(trace: &[TraceRecord]) -> Liveness {
    let end = trace.iter().rev().find_map(|r| match &r.event {
        TraceEvent::End {
            pending_ops,
            pending_recoveries,
            ..
        } => Some((pending_ops.clone(), pending_recoveries.clone())),
        _ => None,
    });
    match end {
        Some((ops, recoveries)) if !ops.is_empty() || !recoveries.is_empty() => Liveness::Stalled { ops, recoveries },
        Some(_) => Liveness::AllComplete,
        None => Liveness::Stalled {
            ops: Vec::new(),
            recoveries: Vec::new(),
        },
    }
}

/// Every read started by a client returns a set containing the pair of the
/// highest-timestamped client write quorum that completed before it started.
pub fn check_ams_property(trace: &[TraceRecord], clients: &[ProcessId]) -> MonitorReport {
    let starts = read_starts(trace);
    let writes: Vec<_> = trace
        .iter()
        .filter(|r| clients.contains(&r.actor))
        .filter_map(|r| match &r.event {
            TraceEvent::WqDone {
                req: WriteReq::TsVal(ts, v),
                ..
            } => Some((r.step, *ts, *v)),
            _ => None,
        })
        .collect();
    let mut bad = Vec::new();
    for r in trace.iter().filter(|r| clients.contains(&r.actor)) {
        let TraceEvent::RqDone { id, tss, vals, .. } = &r.event else {
            continue;
        };
        let Some(&start) = starts.get(id) else { continue };
        let latest = writes
            .iter()
            .filter(|(done, ..)| *done < start)
            .max_by_key(|(_, ts, _)| *ts);
        if let Some((_, ts, v)) = latest {
            if !tss.iter().zip(vals).any(|(t, x)| t == ts && x == v) {
                bad.push(format!(
                    "read {id} misses the pair ({ts},{v}) of the latest completed write"
                ));
            }
        }
    }
    MonitorReport::new("ams", bad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Timestamp, Value};

    fn rec(step: u64, actor: ProcessId, event: TraceEvent) -> TraceRecord {
        TraceRecord {
            t: step,
            step,
            actor,
            event,
        }
    }

    fn rid(origin: ProcessId, seq: u64) -> RequestId {
        RequestId { origin, seq }
    }

    #[test]
    fn no_writes_is_a_vacuous_pass() {
        assert!(check_real_time_property(&[]).passed());
    }

    #[test]
    fn read_missing_a_completed_write_fails() {
        let ts = Timestamp::new(1, 4);
        let trace = vec![
            rec(
                3,
                4,
                TraceEvent::WqDone {
                    id: rid(4, 1),
                    req: WriteReq::TsVal(ts, Value(1)),
                    quorum: vec![(2, 2), (3, 2)],
                    cv_read: None,
                    rounds: 1,
                },
            ),
            rec(
                4,
                5,
                TraceEvent::RqStart {
                    id: rid(5, 0),
                    req: ReadReq::TsVal,
                },
            ),
            rec(
                7,
                5,
                TraceEvent::RqDone {
                    id: rid(5, 0),
                    req: ReadReq::TsVal,
                    from: vec![1, 3],
                    tss: vec![Timestamp::INITIAL, Timestamp::INITIAL],
                    vals: vec![Value(0), Value(0)],
                },
            ),
        ];
        assert!(!check_real_time_property(&trace).passed());
        let ok: Vec<_> = trace
            .iter()
            .cloned()
            .map(|mut r| {
                if let TraceEvent::RqDone { tss, .. } = &mut r.event {
                    tss[1] = ts;
                }
                r
            })
            .collect();
        assert!(check_real_time_property(&ok).passed());
    }

    #[test]
    fn incarnations() {
        let inc = |xs: &[u64]| -> Vec<TraceRecord> {
            xs.iter()
                .map(|i| rec(0, 1, TraceEvent::IncChosen { inc: *i }))
                .collect()
        };
        assert!(check_incarnation_monotonicity(&inc(&[1, 2])).passed());
        assert!(!check_incarnation_monotonicity(&inc(&[3, 3])).passed());
        assert!(!check_incarnation_monotonicity(&inc(&[0])).passed());
    }

    #[test]
    fn recovery_interrupted_by_crash_is_not_pending() {
        let t = vec![
            rec(0, 1, TraceEvent::RecoveryStart),
            rec(1, 1, TraceEvent::Crash),
            rec(2, 1, TraceEvent::RecoveryStart),
            rec(3, 1, TraceEvent::Recovered),
        ];
        assert!(check_recovery_termination(&t).passed());
        assert!(!check_recovery_termination(&t[..3]).passed());
    }

    #[test]
    fn early_state_read_breaks_crash_consistency() {
        let wq = rec(
            10,
            1,
            TraceEvent::WqDone {
                id: rid(1, 2),
                req: WriteReq::Cv(1, 1),
                quorum: vec![(2, 4)],
                cv_read: Some(8),
                rounds: 1,
            },
        );
        let state = |step| {
            rec(
                step,
                2,
                TraceEvent::RqStart {
                    id: rid(2, 0),
                    req: ReadReq::State(1),
                },
            )
        };
        let early = vec![rec(5, 2, TraceEvent::Crash), state(7), wq.clone()];
        assert!(!check_crash_consistency(&early).passed());
        let late = vec![wq, rec(11, 2, TraceEvent::Crash), state(12)];
        assert!(check_crash_consistency(&late).passed());
    }
}
