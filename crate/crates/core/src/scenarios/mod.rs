//! Scripted executions: the counterexamples against earlier recovery
//! designs, their runs against the correct protocols, and schedules that
//! stall a register below its replica bound.

pub mod baselines;

use crate::checker::{
    check_ams_property, check_history, check_liveness, check_real_time_property, CheckError, HistoryVerdict, Liveness,
    MonitorReport,
};
use crate::config::{resolve, Params, RawParams, Threshold};
use crate::protocol::OpSpec;
use crate::sim::{
    run, FaultEvent, LinkRule, NetworkPolicy, PlannedOp, ProtocolKind, Rollback, RunResult, Schedule, SimConfig,
    SimError, TraceLevel, Workload, DEFAULT_STEP_BUDGET,
};
use crate::types::{MessageKind, ProcessId, Timestamp, Value};

/// What a scenario is expected to show.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expectation {
    /// The history is not linearizable.
    Violation,
    /// The storage read misses the latest completed storage write.
    AmsViolation,
    /// Linearizable and every operation completes.
    Linearizable,
    /// Linearizable, but some operation or recovery never finishes.
    Stall,
}

/// A named, fully scripted run.
#[derive(Debug, Clone)]
pub struct Script {
    pub name: &'static str,
    pub summary: &'static str,
    pub config: SimConfig,
    pub expect: Expectation,
}

/// Everything a scenario run produced.
#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub name: &'static str,
    pub expect: Expectation,
    pub result: RunResult,
    pub verdict: HistoryVerdict,
    pub liveness: Liveness,
    pub real_time: MonitorReport,
    /// Present for storage scenarios.
    pub ams: Option<MonitorReport>,
}

impl ScenarioReport {
    /// Whether the run showed what the scenario is meant to show.
    pub fn as_expected(&self) -> bool {
        let lin = !self.verdict.is_violation();
        match self.expect {
            Expectation::Violation => !lin,
            Expectation::AmsViolation => self.ams.as_ref().is_some_and(|m| !m.passed()),
            Expectation::Linearizable => {
                lin && !self.liveness.is_stalled() && self.ams.as_ref().is_none_or(MonitorReport::passed)
            }
            Expectation::Stall => lin && self.liveness.is_stalled(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("no scenario named `{0}`")]
    Unknown(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Check(#[from] CheckError),
}

/// Names of all packaged scenarios.
pub const SCENARIOS: &[&str] = &[
    "lost-write-naive",
    "lost-write-d",
    "naive-fault-free",
    "rr",
    "rr-fault-free",
    "ams",
    "ams-fault-free",
    "below-bound",
    "below-bound-n4",
    "d-all-rollback",
];

fn params(n: u32, k: u32, r: u32, b: u32) -> Params {
    resolve(RawParams {
        n,
        k,
        r: Threshold::Known(r),
        b: Threshold::Known(b),
    })
    .expect("packaged parameters are valid")
}

fn op(client: ProcessId, op: OpSpec, at: u64) -> PlannedOp {
    PlannedOp { client, op, at }
}

fn config(protocol: ProtocolKind, params: Params, clients: u32, ops: Vec<PlannedOp>, schedule: Schedule) -> SimConfig {
    SimConfig {
        protocol,
        params,
        clients,
        workload: Workload::new(ops),
        schedule,
        seed: 0,
        step_budget: DEFAULT_STEP_BUDGET,
        trace_level: TraceLevel::Full,
    }
}

fn scripted(rules: Vec<LinkRule>, faults: Vec<FaultEvent>) -> Schedule {
    Schedule {
        faults,
        network: NetworkPolicy::Scripted { delay: 1, rules },
        guard: None,
        threshold_time: 0,
    }
}

fn write_msgs(from: ProcessId, to: ProcessId) -> LinkRule {
    LinkRule::drop(Some(from), Some(to)).kind(MessageKind::Write)
}

/// Three replicas, writer 4 and reader 5. Replica 3 acknowledges the write,
/// crashes and loses it, and comes back having read only replicas that never
/// saw the write. Replica 2 acknowledges next, completing the write, and the
/// read is answered by replicas 1 and 3.
fn lost_write(protocol: ProtocolKind) -> SimConfig {
    let rules = vec![
        write_msgs(4, 1),
        write_msgs(4, 2).window(2, Some(60)),
        LinkRule::drop(Some(2), Some(5)),
    ];
    let restart = match protocol {
        ProtocolKind::D => Rollback::To(0),
        _ => Rollback::None,
    };
    let faults = vec![FaultEvent::crash(5, 3), FaultEvent::restart(6, 3, restart)];
    let ops = vec![op(4, OpSpec::Write(Value(1)), 0), op(5, OpSpec::Read, 100)];
    config(protocol, params(3, 1, 0, 0), 2, ops, scripted(rules, faults))
}

/// Five replicas, writer 6 and reader 7. Replica 2 acknowledges the write,
/// restarts rolled back, and clears its suspicion flag using replicas 3, 4
/// and 5. The write then completes with replicas 1 and 3, and the read is
/// answered by replicas 2, 4 and 5.
fn rr(faulty: bool) -> SimConfig {
    let protocol = ProtocolKind::Rr { m_r: 2, f: 2 };
    let p = params(5, 2, 2, 0);
    let ops = vec![op(6, OpSpec::Write(Value(1)), 0), op(7, OpSpec::Read, 40)];
    if !faulty {
        return config(protocol, p, 2, ops, scripted(Vec::new(), Vec::new()));
    }
    let rules = vec![
        write_msgs(6, 1).window(2, Some(30)),
        write_msgs(6, 3).window(2, Some(30)),
        write_msgs(6, 4),
        write_msgs(6, 5),
        LinkRule::drop(Some(1), Some(2)).window(7, Some(30)),
        LinkRule::drop(Some(1), Some(7)),
        LinkRule::drop(Some(3), Some(7)),
    ];
    let faults = vec![FaultEvent::crash(6, 2), FaultEvent::restart(7, 2, Rollback::To(0))];
    config(protocol, p, 2, ops, scripted(rules, faults))
}

/// Nine replicas, of which 1 to 7 have stable storage; writer 10 and reader
/// 11. The first storage write reaches replicas 1 to 5 and 8, with its copy
/// to replica 9 delayed. The second reaches 1 to 5 and 9. Replica 9 then
/// restarts amnesic, receives the delayed first write, and answers the read
/// together with replicas 6, 7 and 8.
fn ams(faulty: bool) -> SimConfig {
    let protocol = ProtocolKind::Ams { a: 1, b: 2 };
    let p = params(9, 3, 0, 0);
    let ops = vec![
        op(10, OpSpec::AmsWrite(Timestamp::new(1, 10), Value(1)), 0),
        op(10, OpSpec::AmsWrite(Timestamp::new(2, 10), Value(2)), 10),
        op(11, OpSpec::AmsRead, 60),
    ];
    if !faulty {
        return config(protocol, p, 2, ops, scripted(Vec::new(), Vec::new()));
    }
    let mut rules = vec![
        write_msgs(10, 6),
        write_msgs(10, 7),
        write_msgs(10, 9).window(0, Some(10)).hold_until(50),
        write_msgs(10, 8).window(10, None),
    ];
    rules.extend((1..=5).map(|j| LinkRule::drop(Some(j), Some(11))));
    let faults = vec![FaultEvent::crash(20, 9), FaultEvent::restart(21, 9, Rollback::None)];
    config(protocol, p, 2, ops, scripted(rules, faults))
}

/// Timestamp register with `k = r = b = 1`. Replica 1 is cut off during the
/// write; afterwards replica 3 restarts and replica 2 is cut off, so the read
/// can only reach replica 1 and the stale replica 3.
fn below_bound(n: u32) -> SimConfig {
    let rules = vec![
        LinkRule::drop(Some(1), None).window(0, Some(20)),
        LinkRule::drop(None, Some(1)).window(0, Some(20)),
        LinkRule::drop(Some(2), None).window(20, None),
        LinkRule::drop(None, Some(2)).window(20, None),
    ];
    let faults = vec![FaultEvent::crash(20, 3), FaultEvent::restart(21, 3, Rollback::None)];
    let c = n + 1;
    let ops = vec![op(c, OpSpec::Write(Value(1)), 0), op(c, OpSpec::Read, 30)];
    config(ProtocolKind::A, params(n, 1, 1, 1), 1, ops, scripted(rules, faults))
}

/// Crash-vector register whose three replicas all restart from their
/// initial state after a completed write.
fn d_all_rollback() -> SimConfig {
    let mut faults: Vec<FaultEvent> = (1..=3).map(|j| FaultEvent::crash(10, j)).collect();
    faults.extend((1..=3).map(|j| FaultEvent::restart(11, j, Rollback::To(0))));
    let ops = vec![op(4, OpSpec::Write(Value(1)), 0)];
    config(
        ProtocolKind::D,
        params(3, 1, 1, 0),
        1,
        ops,
        scripted(Vec::new(), faults),
    )
}

/// Looks up a packaged scenario.
pub fn script(name: &str) -> Option<Script> {
    let (summary, config, expect) = match name {
        "lost-write-naive" => (
            "restart adopting the freshest quorum state loses an acknowledged write",
            lost_write(ProtocolKind::NaiveRecovery),
            Expectation::Violation,
        ),
        "lost-write-d" => (
            "the same schedule against crash-vector recovery",
            lost_write(ProtocolKind::D),
            Expectation::Linearizable,
        ),
        "naive-fault-free" => (
            "the naive-recovery register without faults",
            {
                let mut c = lost_write(ProtocolKind::NaiveRecovery);
                c.schedule = scripted(Vec::new(), Vec::new());
                c
            },
            Expectation::Linearizable,
        ),
        "rr" => (
            "suspicion flags cleared from a read quorum lose an acknowledged write",
            rr(true),
            Expectation::Violation,
        ),
        "rr-fault-free" => (
            "the suspicion-flag register without faults",
            rr(false),
            Expectation::Linearizable,
        ),
        "ams" => (
            "a delayed storage write masks a newer one after an amnesic restart",
            ams(true),
            Expectation::AmsViolation,
        ),
        "ams-fault-free" => (
            "amnesia-masking storage without faults",
            ams(false),
            Expectation::Linearizable,
        ),
        "below-bound" => (
            "n = 2k + min(b, r): the read stalls, the history stays linearizable",
            below_bound(3),
            Expectation::Stall,
        ),
        "below-bound-n4" => (
            "the same schedule with one more replica",
            below_bound(4),
            Expectation::Linearizable,
        ),
        "d-all-rollback" => (
            "every crash-vector replica rolls back at once: recovery stalls",
            d_all_rollback(),
            Expectation::Stall,
        ),
        _ => return None,
    };
    let name = SCENARIOS.iter().copied().find(|s| *s == name)?;
    Some(Script {
        name,
        summary,
        config,
        expect,
    })
}

/// Runs a script and judges its history and trace.
pub fn run_script(script: &Script) -> Result<ScenarioReport, ScenarioError> {
    let result = run(&script.config)?;
    let verdict = check_history(&result.history)?;
    let records = &result.trace.records;
    let ams = match script.config.protocol {
        ProtocolKind::Ams { .. } => {
            let n = script.config.params.n;
            let clients: Vec<ProcessId> = (n + 1..=n + script.config.clients).collect();
            Some(check_ams_property(records, &clients))
        }
        _ => None,
    };
    Ok(ScenarioReport {
        name: script.name,
        expect: script.expect,
        liveness: check_liveness(records),
        real_time: check_real_time_property(records),
        ams,
        verdict,
        result,
    })
}

/// Runs the packaged scenario called `name`.
pub fn run_scenario(name: &str) -> Result<ScenarioReport, ScenarioError> {
    let s = script(name).ok_or_else(|| ScenarioError::Unknown(name.to_string()))?;
    run_script(&s)
}
