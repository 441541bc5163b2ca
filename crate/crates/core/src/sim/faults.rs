//! Fault schedules, seeded fault generation, and after-the-fact fault
//! accounting over traces.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Params;
use crate::types::ProcessId;

use super::trace::{TraceEvent, TraceRecord};

/// Which stored version a restart restores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Rollback {
    /// The latest committed version.
    #[default]
    None,
    /// A specific, strictly older version.
    To(usize),
    /// A uniformly chosen strictly older version, if one exists.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultAction {
    Crash,
    Restart {
        #[serde(default)]
        rollback: Rollback,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub at: u64,
    pub replica: ProcessId,
    pub action: FaultAction,
}

impl FaultEvent {
    pub fn crash(at: u64, replica: ProcessId) -> Self {
        FaultEvent {
            at,
            replica,
            action: FaultAction::Crash,
        }
    }

    pub fn restart(at: u64, replica: ProcessId, rollback: Rollback) -> Self {
        FaultEvent {
            at,
            replica,
            action: FaultAction::Restart { rollback },
        }
    }
}

/// Runtime guard that skips a crash when it would leave fewer than `k + 1`
/// active replicas among those that stay up in the end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveGuard {
    pub k: usize,
    pub eventually_up: BTreeSet<ProcessId>,
}

/// Parameters of seeded fault generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FaultModel {
    None,
    /// At most `k` faulty replicas from the start, of which at most `r`
    /// (chosen among `persisted`) restart from an older version, plus at
    /// most `b` benign replicas that crash and come back intact.
    Static {
        k: u32,
        r: u32,
        b: u32,
        persisted: BTreeSet<ProcessId>,
        window: u64,
        /// Longest time a replica stays down before restarting.
        max_downtime: u64,
    },
    /// Arbitrary crashes and rollbacks before `threshold_time`, at most `k`
    /// replicas failing permanently, and nothing else afterwards.
    Eventual {
        k: u32,
        threshold_time: u64,
    },
}

/// Generated faults plus the runtime guard they rely on.
#[derive(Debug, Clone, Default)]
pub struct GeneratedFaults {
    pub events: Vec<FaultEvent>,
    pub guard: Option<ActiveGuard>,
    pub threshold_time: u64,
}

fn pick(rng: &mut ChaCha8Rng, pool: &[ProcessId], count: usize) -> Vec<ProcessId> {
    let mut v: Vec<ProcessId> = pool.choose_multiple(rng, count).copied().collect();
    v.sort_unstable();
    v
}

/// Crash/restart episodes for one replica starting no earlier than `from`.
#[allow(clippy::too_many_arguments)]
fn episodes(
    rng: &mut ChaCha8Rng,
    replica: ProcessId,
    from: u64,
    until: u64,
    count: usize,
    max_downtime: u64,
    rollback: impl Fn(&mut ChaCha8Rng, usize) -> Rollback,
    permanent_last: bool,
) -> Vec<FaultEvent> {
    let mut out = Vec::new();
    let mut t = from;
    for i in 0..count {
        if t >= until {
            break;
        }
        let crash_at = rng.gen_range(t..until);
        out.push(FaultEvent::crash(crash_at, replica));
        if permanent_last && i + 1 == count {
            break;
        }
        let restart_at = (crash_at + rng.gen_range(1..=max_downtime.max(1))).min(until.max(crash_at + 1));
        out.push(FaultEvent::restart(restart_at, replica, rollback(rng, i)));
        t = restart_at + 1;
    }
    out
}

pub fn generate_faults(model: &FaultModel, n: u32, rng: &mut ChaCha8Rng) -> GeneratedFaults {
    let all: Vec<ProcessId> = (1..=n).collect();
    match model {
        FaultModel::None => GeneratedFaults::default(),
        FaultModel::Static {
            k,
            r,
            b,
            persisted,
            window,
            max_downtime,
        } => {
            let window = (*window).max(2);
            let f = rng.gen_range(0..=(*k as usize).min(all.len()));
            let faulty = pick(rng, &all, f);
            let durable: Vec<ProcessId> = faulty.iter().copied().filter(|j| persisted.contains(j)).collect();
            let rb = rng.gen_range(0..=(*r as usize).min(durable.len()));
            let rolling: BTreeSet<ProcessId> = pick(rng, &durable, rb).into_iter().collect();
            let rest: Vec<ProcessId> = all.iter().copied().filter(|j| !faulty.contains(j)).collect();
            let bn = rng.gen_range(0..=(*b as usize).min(rest.len()));
            let benign = pick(rng, &rest, bn);
            let mut events = Vec::new();
            for j in faulty {
                let count = rng.gen_range(1..=3);
                let permanent = rng.gen_bool(0.5);
                let rolls = rolling.contains(&j);
                events.extend(episodes(
                    rng,
                    j,
                    0,
                    window,
                    count,
                    *max_downtime,
                    |rng, i| {
                        if rolls && (i == 0 || rng.gen_bool(0.5)) {
                            Rollback::Random
                        } else {
                            Rollback::None
                        }
                    },
                    permanent,
                ));
            }
            for j in benign {
                let count = rng.gen_range(1..=2);
                events.extend(episodes(
                    rng,
                    j,
                    0,
                    window,
                    count,
                    *max_downtime,
                    |_, _| Rollback::None,
                    false,
                ));
            }
            events.sort_by_key(|e| (e.at, e.replica));
            GeneratedFaults {
                events,
                guard: None,
                threshold_time: 0,
            }
        }
        FaultModel::Eventual { k, threshold_time } => {
            let tt = (*threshold_time).max(2);
            let f = rng.gen_range(0..=(*k as usize).min(all.len()));
            let doomed = pick(rng, &all, f);
            let mut events = Vec::new();
            for &j in &all {
                if doomed.contains(&j) {
                    let at = rng.gen_range(0..tt + 20);
                    events.push(FaultEvent::crash(at, j));
                    continue;
                }
                let count = rng.gen_range(0..=3);
                events.extend(episodes(
                    rng,
                    j,
                    0,
                    tt,
                    count,
                    12,
                    |rng, _| {
                        if rng.gen_bool(0.5) {
                            Rollback::Random
                        } else {
                            Rollback::None
                        }
                    },
                    false,
                ));
            }
            events.sort_by_key(|e| (e.at, e.replica));
            let eventually_up = all.iter().copied().filter(|j| !doomed.contains(j)).collect();
            GeneratedFaults {
                events,
                guard: Some(ActiveGuard {
                    k: *k as usize,
                    eventually_up,
                }),
                threshold_time: tt,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Active,
    Recovering,
    Down,
}

/// Outcome of evaluating the availability assumption over a trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assumption1Report {
    pub holds: bool,
    /// Replicas that are up at the end of the trace.
    pub eventually_up: BTreeSet<ProcessId>,
    /// `(t, active eventually-up replicas)` after every status change.
    pub timeline: Vec<(u64, usize)>,
    /// Times at which fewer than `k + 1` such replicas were active.
    pub violations: Vec<u64>,
}

fn replica_statuses(trace: &[TraceRecord], n: u32) -> Vec<(u64, ProcessId, Status)> {
    trace
        .iter()
        .filter(|r| r.actor >= 1 && r.actor <= n)
        .filter_map(|r| {
            let s = match r.event {
                TraceEvent::Crash => Status::Down,
                TraceEvent::Restart { .. } => Status::Recovering,
                TraceEvent::Recovered => Status::Active,
                _ => return None,
            };
            Some((r.t, r.actor, s))
        })
        .collect()
}

/// Checks that at every point of the trace at least `k + 1` replicas that
/// are up at the end of the run are active.
pub fn assumption1_holds(trace: &[TraceRecord], n: u32, k: u32) -> Assumption1Report {
    let changes = replica_statuses(trace, n);
    let mut last: BTreeMap<ProcessId, Status> = (1..=n).map(|j| (j, Status::Active)).collect();
    for &(_, j, s) in &changes {
        last.insert(j, s);
    }
    let eventually_up: BTreeSet<ProcessId> = last
        .iter()
        .filter(|(_, s)| **s != Status::Down)
        .map(|(j, _)| *j)
        .collect();
    let mut status: BTreeMap<ProcessId, Status> = (1..=n).map(|j| (j, Status::Active)).collect();
    let count =
        |status: &BTreeMap<ProcessId, Status>| eventually_up.iter().filter(|j| status[j] == Status::Active).count();
    let need = k as usize + 1;
    let mut timeline = vec![(0, count(&status))];
    let mut violations = Vec::new();
    if timeline[0].1 < need {
        violations.push(0);
    }
    for (t, j, s) in changes {
        status.insert(j, s);
        let c = count(&status);
        timeline.push((t, c));
        if c < need && violations.last() != Some(&t) {
            violations.push(t);
        }
    }
    Assumption1Report {
        holds: violations.is_empty(),
        eventually_up,
        timeline,
        violations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReplicaClass {
    Perfect,
    Benign,
    RollbackFaulty,
    CrashFaulty,
}

/// Classifies every replica from the faults it suffered at or after `from`.
/// A replica that ends the run down is crash-faulty; one that restarted from
/// an older version is rollback-faulty; one that crashed and came back
/// intact is benign.
pub fn classify_replicas(trace: &[TraceRecord], n: u32, from: u64) -> BTreeMap<ProcessId, ReplicaClass> {
    let mut down: BTreeSet<ProcessId> = BTreeSet::new();
    let mut rolled = BTreeSet::new();
    let mut crashed = BTreeSet::new();
    for r in trace.iter().filter(|r| r.actor >= 1 && r.actor <= n) {
        match r.event {
            TraceEvent::Crash => {
                down.insert(r.actor);
                if r.t >= from {
                    crashed.insert(r.actor);
                }
            }
            TraceEvent::Restart { rolled_back, .. } => {
                down.remove(&r.actor);
                if rolled_back && r.t >= from {
                    rolled.insert(r.actor);
                }
            }
            _ => {}
        }
    }
    (1..=n)
        .map(|j| {
            let class = if down.contains(&j) {
                ReplicaClass::CrashFaulty
            } else if rolled.contains(&j) {
                ReplicaClass::RollbackFaulty
            } else if crashed.contains(&j) {
                ReplicaClass::Benign
            } else {
                ReplicaClass::Perfect
            };
            (j, class)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FaultTally {
    pub perfect: usize,
    pub benign: usize,
    pub rollback_faulty: usize,
    pub crash_faulty: usize,
}

/// Tallies replica classes and checks them against the thresholds.
///
/// A replica that crashed and came back intact may be counted either as
/// benign or against the unused part of the faulty budget, since a finite
/// run cannot tell the two apart.
pub fn check_fault_bounds(trace: &[TraceRecord], params: &Params, from: u64) -> Result<FaultTally, String> {
    let mut tally = FaultTally::default();
    for class in classify_replicas(trace, params.n, from).values() {
        match class {
            ReplicaClass::Perfect => tally.perfect += 1,
            ReplicaClass::Benign => tally.benign += 1,
            ReplicaClass::RollbackFaulty => tally.rollback_faulty += 1,
            ReplicaClass::CrashFaulty => tally.crash_faulty += 1,
        }
    }
    let faulty = tally.crash_faulty + tally.rollback_faulty;
    let k = params.k as usize;
    if faulty > k {
        return Err(format!("{faulty} faulty replicas exceed k={k}"));
    }
    if tally.rollback_faulty > params.r_eff as usize {
        return Err(format!(
            "{} rolled-back replicas exceed r={}",
            tally.rollback_faulty, params.r_eff
        ));
    }
    if tally.benign > params.b_eff as usize + (k - faulty) {
        return Err(format!(
            "{} crashed replicas exceed b={} plus the unused faulty budget",
            tally.benign, params.b_eff
        ));
    }
    Ok(tally)
}
