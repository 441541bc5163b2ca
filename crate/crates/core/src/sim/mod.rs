//! Deterministic discrete-event simulator.
//!
//! Events execute in `(time, sequence)` order, one per step. Each handler
//! runs atomically: its state change, persistence commit and sends all
//! happen before the next event. The only randomness comes from a ChaCha
//! generator seeded by the configuration, so a run is a pure function of its
//! configuration.

pub mod faults;
pub mod network;
pub mod store;
pub mod trace;
pub mod workload;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::checker::history::{History, HistoryRecord, Tau};
use crate::config::{quorum_plan, Params};
use crate::protocol::{
    Client, ClientConfig, Effects, Envelope, Note, OpSpec, Replica, ReplicaA, ReplicaD, Snapshot, WriteMode,
};
use crate::scenarios::baselines::{ams_params, rr_params, AmsReplica, NaiveRecoveryReplica, RrReplica};
use crate::types::ProcessId;

pub use faults::{
    assumption1_holds, check_fault_bounds, classify_replicas, generate_faults, ActiveGuard, Assumption1Report,
    FaultAction, FaultEvent, FaultModel, GeneratedFaults, ReplicaClass, Rollback,
};
pub use network::{Decision, LinkRule, NetworkPolicy, RandomNetwork};
pub use store::PersistentStore;
pub use trace::{OpKind, Trace, TraceEvent, TraceLevel, TraceRecord};
pub use workload::{random_workload, PlannedOp, RandomWorkload, Workload};

/// Default step budget of a run.
pub const DEFAULT_STEP_BUDGET: u64 = 10_000;

/// Which replica and client automata to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    /// Timestamp register; the variant follows from the quorum plan.
    A,
    /// Crash-vector register with distributed recovery.
    D,
    /// Stale-flag register whose restart adopts the freshest quorum state.
    NaiveRecovery,
    /// Suspicion-flag register with `N = max(M_R, F) + F + 1` replicas.
    Rr { m_r: u32, f: u32 },
    /// Amnesia-masking storage with `n = 2a + 3b + 1` replicas.
    Ams { a: u32, b: u32 },
}

impl ProtocolKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolKind::A => "A",
            ProtocolKind::D => "D",
            ProtocolKind::NaiveRecovery => "naive-recovery",
            ProtocolKind::Rr { .. } => "rr-baseline",
            ProtocolKind::Ams { .. } => "ams-baseline",
        }
    }
}

/// Faults and channel behaviour of a run.
#[derive(Debug, Clone, Default)]
pub struct Schedule {
    pub faults: Vec<FaultEvent>,
    pub network: NetworkPolicy,
    pub guard: Option<ActiveGuard>,
    /// Time from which faults respect the thresholds.
    pub threshold_time: u64,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub protocol: ProtocolKind,
    pub params: Params,
    pub clients: u32,
    pub workload: Workload,
    pub schedule: Schedule,
    pub seed: u64,
    pub step_budget: u64,
    pub trace_level: TraceLevel,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("{protocol} needs n={expected}, configuration has n={actual}")]
    ReplicaCount {
        protocol: &'static str,
        expected: u32,
        actual: u32,
    },
    #[error("invalid baseline parameters for {0}")]
    BaselineParams(&'static str),
    #[error("operation {index} names client {client}, valid clients are {first}..={last}")]
    UnknownClient {
        index: usize,
        client: ProcessId,
        first: ProcessId,
        last: ProcessId,
    },
    #[error("fault event targets replica {0}, which does not exist")]
    UnknownReplica(ProcessId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunOutcome {
    Completed,
    Stalled {
        /// History ids of invoked operations that never completed.
        pending_ops: Vec<usize>,
        /// Planned operations that were never invoked.
        never_invoked: usize,
        /// Up replicas still inside their restart handler.
        pending_recoveries: Vec<ProcessId>,
    },
}

impl RunOutcome {
    pub fn is_stalled(&self) -> bool {
        matches!(self, RunOutcome::Stalled { .. })
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: Trace,
    pub history: History,
    pub outcome: RunOutcome,
    pub steps: u64,
    pub end_time: u64,
}

/// Replica automata and client configuration of one protocol instance.
pub struct Setup {
    pub n: u32,
    pub replicas: Vec<Box<dyn Replica>>,
    /// Replicas that persist their state.
    pub persisted: BTreeSet<ProcessId>,
    pub client: ClientConfig,
}

pub fn setup(protocol: ProtocolKind, params: &Params) -> Result<Setup, SimError> {
    let n = params.n;
    let plan = quorum_plan(params);
    let ids = 1..=n;
    let check_n = |expected: u32| {
        if expected == n {
            Ok(())
        } else {
            Err(SimError::ReplicaCount {
                protocol: protocol.name(),
                expected,
                actual: n,
            })
        }
    };
    let setup = match protocol {
        ProtocolKind::A => Setup {
            n,
            replicas: ids
                .map(|i| Box::new(ReplicaA::new(i, plan.p_holds)) as Box<dyn Replica>)
                .collect(),
            persisted: plan.nonvolatile.clone(),
            client: ClientConfig::new(n, plan.q_w, plan.q_r, WriteMode::Plain),
        },
        ProtocolKind::D => {
            let q_r = params.k as usize + 1;
            let q_w = plan.q_w;
            Setup {
                n,
                replicas: ids
                    .clone()
                    .map(|i| Box::new(ReplicaD::new(i, n, q_w, q_r)) as Box<dyn Replica>)
                    .collect(),
                persisted: ids.collect(),
                client: ClientConfig::new(n, q_w, q_r, WriteMode::CrashConsistent),
            }
        }
        ProtocolKind::NaiveRecovery => {
            let q_r = params.k as usize + 1;
            Setup {
                n,
                replicas: ids
                    .map(|i| Box::new(NaiveRecoveryReplica::new(i, n, q_r)) as Box<dyn Replica>)
                    .collect(),
                persisted: BTreeSet::new(),
                client: ClientConfig::new(n, plan.q_w, q_r, WriteMode::Plain),
            }
        }
        ProtocolKind::Rr { m_r, f } => {
            let p = rr_params(m_r, f).ok_or(SimError::BaselineParams("rr-baseline"))?;
            check_n(p.n)?;
            let mut client = ClientConfig::new(n, p.w as usize, p.read_quorum(0) as usize, WriteMode::Plain);
            client.read_rule = p.read_rule();
            client.write_back = false;
            Setup {
                n,
                replicas: ids
                    .clone()
                    .map(|i| Box::new(RrReplica::new(i, &p)) as Box<dyn Replica>)
                    .collect(),
                persisted: ids.collect(),
                client,
            }
        }
        ProtocolKind::Ams { a, b } => {
            let p = ams_params(a, b).ok_or(SimError::BaselineParams("ams-baseline"))?;
            check_n(p.n)?;
            let mut client = ClientConfig::new(n, p.q_w as usize, p.q_r as usize, WriteMode::Plain);
            client.write_back = false;
            Setup {
                n,
                replicas: ids
                    .clone()
                    .map(|i| Box::new(AmsReplica::new(i, &p)) as Box<dyn Replica>)
                    .collect(),
                persisted: ids.filter(|i| p.has_stable_storage(*i)).collect(),
                client,
            }
        }
    };
    Ok(setup)
}

#[derive(Debug, Clone)]
enum Event {
    Deliver { env: Envelope, mid: u64 },
    Invoke { client: ProcessId },
    Fault(FaultEvent),
    Timer { pid: ProcessId, epoch: u64 },
}

struct ReplicaSlot {
    node: Box<dyn Replica>,
    up: bool,
    epoch: u64,
    timer_armed: bool,
    store: Option<PersistentStore>,
}

struct ClientSlot {
    client: Client,
    queue: VecDeque<PlannedOp>,
    current: Option<usize>,
    timer_armed: bool,
}

struct Engine {
    n: u32,
    level: TraceLevel,
    network: NetworkPolicy,
    guard: Option<ActiveGuard>,
    now: u64,
    step: u64,
    seq: u64,
    next_mid: u64,
    queue: BTreeMap<(u64, u64), Event>,
    /// Scheduled fault events not yet executed.
    pending_faults: usize,
    rng: ChaCha8Rng,
    replicas: Vec<ReplicaSlot>,
    clients: Vec<ClientSlot>,
    records: Vec<TraceRecord>,
    ops: Vec<HistoryRecord>,
}

/// Executes one run until every planned operation has completed and no up
/// replica is still recovering, or until the step budget runs out.
pub fn run(cfg: &SimConfig) -> Result<RunResult, SimError> {
    let setup = setup(cfg.protocol, &cfg.params)?;
    let n = setup.n;
    let first = n + 1;
    let last = n + cfg.clients;
    for (index, p) in cfg.workload.ops.iter().enumerate() {
        if p.client < first || p.client > last {
            return Err(SimError::UnknownClient {
                index,
                client: p.client,
                first,
                last,
            });
        }
    }
    if let Some(e) = cfg.schedule.faults.iter().find(|e| e.replica < 1 || e.replica > n) {
        return Err(SimError::UnknownReplica(e.replica));
    }

    let replicas = setup
        .replicas
        .into_iter()
        .map(|node| {
            let store = setup
                .persisted
                .contains(&node.id())
                .then(|| PersistentStore::new(node.snapshot()));
            ReplicaSlot {
                node,
                up: true,
                epoch: 0,
                timer_armed: false,
                store,
            }
        })
        .collect();
    let clients = (first..=last)
        .map(|id| ClientSlot {
            client: Client::new(id, setup.client),
            queue: cfg.workload.ops.iter().filter(|p| p.client == id).copied().collect(),
            current: None,
            timer_armed: false,
        })
        .collect();

    let mut eng = Engine {
        n,
        level: cfg.trace_level,
        network: cfg.schedule.network.clone(),
        guard: cfg.schedule.guard.clone(),
        now: 0,
        step: 0,
        seq: 0,
        next_mid: 0,
        queue: BTreeMap::new(),
        pending_faults: 0,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        replicas,
        clients,
        records: Vec::new(),
        ops: Vec::new(),
    };
    for e in &cfg.schedule.faults {
        eng.schedule(e.at, Event::Fault(*e));
    }
    for id in first..=last {
        eng.schedule_next_invoke(id);
    }
    Ok(eng.run(cfg.step_budget))
}

impl Engine {
    fn schedule(&mut self, t: u64, ev: Event) {
        if let Event::Fault(_) = ev {
            self.pending_faults += 1;
        }
        self.queue.insert((t, self.seq), ev);
        self.seq += 1;
    }

    fn record(&mut self, actor: ProcessId, event: TraceEvent) {
        if self.level == TraceLevel::Full || event.in_summary() {
            self.records.push(TraceRecord {
                t: self.now,
                step: self.step,
                actor,
                event,
            });
        }
    }

    fn client_slot(&mut self, id: ProcessId) -> &mut ClientSlot {
        let n = self.n;
        &mut self.clients[(id - n - 1) as usize]
    }

    fn is_client(&self, id: ProcessId) -> bool {
        id > self.n
    }

    fn schedule_next_invoke(&mut self, client: ProcessId) {
        let now = self.now;
        if let Some(p) = self.client_slot(client).queue.front() {
            let at = p.at.max(now);
            self.schedule(at, Event::Invoke { client });
        }
    }

    fn finished(&self) -> bool {
        self.pending_faults == 0
            && self.clients.iter().all(|c| c.queue.is_empty() && c.current.is_none())
            && self.replicas.iter().all(|r| !r.up || !r.node.has_pending())
    }

    fn run(mut self, budget: u64) -> RunResult {
        let completed = loop {
            if self.finished() {
                break true;
            }
            if self.step >= budget {
                break false;
            }
            let Some(((t, _), ev)) = self.queue.pop_first() else {
                break false;
            };
            self.now = t;
            self.execute(ev);
            self.step += 1;
        };
        let outcome = if completed {
            RunOutcome::Completed
        } else {
            RunOutcome::Stalled {
                pending_ops: self
                    .ops
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| !r.is_complete())
                    .map(|(i, _)| i)
                    .collect(),
                never_invoked: self.clients.iter().map(|c| c.queue.len()).sum(),
                pending_recoveries: self
                    .replicas
                    .iter()
                    .filter(|r| r.up && r.node.has_pending())
                    .map(|r| r.node.id())
                    .collect(),
            }
        };
        let (label, pending_ops, pending_recoveries) = match &outcome {
            RunOutcome::Completed => ("completed", Vec::new(), Vec::new()),
            RunOutcome::Stalled {
                pending_ops,
                pending_recoveries,
                ..
            } => ("stalled", pending_ops.clone(), pending_recoveries.clone()),
        };
        self.record(
            0,
            TraceEvent::End {
                outcome: label.to_string(),
                pending_ops,
                pending_recoveries,
            },
        );
        let ops = self
            .ops
            .into_iter()
            .map(|mut r| {
                if r.tau.is_none() {
                    r.tau = Some(Tau::Infinite(r.client));
                }
                r
            })
            .collect();
        RunResult {
            trace: Trace { records: self.records },
            history: History::new(ops),
            outcome,
            steps: self.step,
            end_time: self.now,
        }
    }

    fn execute(&mut self, ev: Event) {
        match ev {
            Event::Invoke { client } => self.invoke(client),
            Event::Deliver { env, mid } => self.deliver(env, mid),
            Event::Timer { pid, epoch } => self.timer(pid, epoch),
            Event::Fault(f) => {
                self.pending_faults -= 1;
                match f.action {
                    FaultAction::Crash => self.crash(f.replica),
                    FaultAction::Restart { rollback } => self.restart(f.replica, rollback),
                }
            }
        }
    }

    fn invoke(&mut self, client: ProcessId) {
        let Some(planned) = self.client_slot(client).queue.pop_front() else {
            return;
        };
        let op_id = self.ops.len();
        let (kind, val) = match planned.op {
            OpSpec::Read | OpSpec::AmsRead => (OpKind::Read, None),
            OpSpec::Write(v) | OpSpec::AmsWrite(_, v) => (OpKind::Write, Some(v)),
        };
        self.ops.push(HistoryRecord {
            client,
            kind,
            value: val,
            invoke: self.now,
            respond: None,
            tau: None,
        });
        self.record(client, TraceEvent::Invoke { op: op_id, kind, val });
        let mut fx = Effects::new(self.now, self.step);
        let slot = self.client_slot(client);
        slot.current = Some(op_id);
        slot.client.invoke(planned.op, &mut fx);
        self.apply_effects(client, fx);
    }

    fn deliver(&mut self, env: Envelope, mid: u64) {
        let to = env.to;
        let mut fx = Effects::new(self.now, self.step);
        if self.is_client(to) {
            self.record(to, TraceEvent::Deliver { mid, from: env.from });
            self.client_slot(to).client.on_message(&env, &mut fx);
            self.apply_effects(to, fx);
            return;
        }
        let slot = &mut self.replicas[(to - 1) as usize];
        if !slot.up {
            self.record(
                to,
                TraceEvent::Drop {
                    mid,
                    from: env.from,
                    reason: "down".to_string(),
                },
            );
            return;
        }
        let before = (self.level == TraceLevel::Full).then(|| slot.node.snapshot());
        slot.node.on_message(&env, &mut fx);
        self.record(to, TraceEvent::Deliver { mid, from: env.from });
        self.apply_effects(to, fx);
        self.commit(to, before);
    }

    fn timer(&mut self, pid: ProcessId, epoch: u64) {
        let mut fx = Effects::new(self.now, self.step);
        if self.is_client(pid) {
            let slot = self.client_slot(pid);
            slot.timer_armed = false;
            slot.client.on_timer(&mut fx);
        } else {
            let slot = &mut self.replicas[(pid - 1) as usize];
            if slot.epoch != epoch || !slot.up {
                return;
            }
            slot.timer_armed = false;
            slot.node.on_timer(&mut fx);
        }
        self.record(pid, TraceEvent::Timer);
        self.apply_effects(pid, fx);
    }

    fn crash(&mut self, replica: ProcessId) {
        let idx = (replica - 1) as usize;
        if !self.replicas[idx].up {
            self.record(
                replica,
                TraceEvent::CrashSkipped {
                    reason: "down".to_string(),
                },
            );
            return;
        }
        if let Some(guard) = &self.guard {
            if guard.eventually_up.contains(&replica) && self.replicas[idx].node.is_active() {
                let active = guard
                    .eventually_up
                    .iter()
                    .filter(|j| {
                        let s = &self.replicas[(**j - 1) as usize];
                        s.up && s.node.is_active()
                    })
                    .count();
                if active <= guard.k + 1 {
                    self.record(
                        replica,
                        TraceEvent::CrashSkipped {
                            reason: "guard".to_string(),
                        },
                    );
                    return;
                }
            }
        }
        let slot = &mut self.replicas[idx];
        slot.up = false;
        slot.epoch += 1;
        slot.timer_armed = false;
        self.record(replica, TraceEvent::Crash);
    }

    fn restart(&mut self, replica: ProcessId, rollback: Rollback) {
        let idx = (replica - 1) as usize;
        if self.replicas[idx].up {
            return;
        }
        let (restored, version, rolled_back) = match self.replicas[idx].store.as_mut() {
            None => (None, None, false),
            Some(store) => {
                let target = match rollback {
                    Rollback::None => None,
                    Rollback::To(v) => Some(v),
                    Rollback::Random if store.current() > 0 => Some(self.rng.gen_range(0..store.current())),
                    Rollback::Random => None,
                };
                match target.and_then(|v| store.rollback_to(v).map(|s| (v, s))) {
                    Some((v, s)) => (Some(s), Some(v), true),
                    None => {
                        let (v, s) = store.latest();
                        (Some(s), Some(v), false)
                    }
                }
            }
        };
        self.record(replica, TraceEvent::Restart { version, rolled_back });
        let mut fx = Effects::new(self.now, self.step);
        let slot = &mut self.replicas[idx];
        slot.up = true;
        let before: Option<Snapshot> = None;
        slot.node.on_restart(restored, &mut fx);
        self.apply_effects(replica, fx);
        self.commit(replica, before);
    }

    /// Persists the replica's state and records a state change.
    fn commit(&mut self, replica: ProcessId, before: Option<Snapshot>) {
        let slot = &mut self.replicas[(replica - 1) as usize];
        let snap = slot.node.snapshot();
        if let Some(store) = slot.store.as_mut() {
            store.commit(snap.clone());
        }
        if self.level == TraceLevel::Full && before.as_ref() != Some(&snap) {
            let state = slot.node.describe().replace(' ', ";");
            self.record(replica, TraceEvent::State { state });
        }
    }

    fn apply_effects(&mut self, actor: ProcessId, fx: Effects) {
        for note in fx.notes {
            self.apply_note(actor, note);
        }
        for out in fx.sends {
            let mid = self.next_mid;
            self.next_mid += 1;
            let kind = out.msg.kind();
            self.record(
                actor,
                TraceEvent::Send {
                    mid,
                    to: out.to,
                    depth: out.depth,
                    msg: out.msg.to_string(),
                },
            );
            match self.network.decide(self.now, actor, out.to, kind, &mut self.rng) {
                Decision::Drop(reason) => self.record(
                    out.to,
                    TraceEvent::Drop {
                        mid,
                        from: actor,
                        reason: reason.to_string(),
                    },
                ),
                Decision::DeliverAt(t) => {
                    let env = Envelope {
                        from: actor,
                        to: out.to,
                        msg: out.msg,
                        depth: out.depth,
                        sent_step: self.step,
                    };
                    self.schedule(t, Event::Deliver { env, mid });
                }
            }
        }
        self.arm_timer(actor);
    }

    fn arm_timer(&mut self, pid: ProcessId) {
        let t = self.now + 1;
        if self.is_client(pid) {
            let slot = self.client_slot(pid);
            if slot.client.has_pending() && !slot.timer_armed {
                slot.timer_armed = true;
                self.schedule(t, Event::Timer { pid, epoch: 0 });
            }
        } else {
            let slot = &mut self.replicas[(pid - 1) as usize];
            if slot.up && slot.node.has_pending() && !slot.timer_armed {
                slot.timer_armed = true;
                let epoch = slot.epoch;
                self.schedule(t, Event::Timer { pid, epoch });
            }
        }
    }

    fn apply_note(&mut self, actor: ProcessId, note: Note) {
        let event = match note {
            Note::ReadQuorumStarted { id, req } => TraceEvent::RqStart { id, req },
            Note::ReadQuorumDone { id, req, replies } => TraceEvent::RqDone {
                id,
                req,
                from: replies.iter().map(|(j, _)| *j).collect(),
                tss: replies.iter().filter_map(|(_, p)| p.timestamp()).collect(),
                vals: replies.iter().filter_map(|(_, p)| p.pair()).map(|(_, v)| v).collect(),
            },
            Note::WriteQuorumStarted { id, req } => TraceEvent::WqStart { id, req },
            Note::WriteQuorumDone {
                id,
                req,
                quorum,
                cv_read_step,
                rounds,
            } => TraceEvent::WqDone {
                id,
                req,
                quorum,
                cv_read: cv_read_step,
                rounds,
            },
            Note::AcksDiscarded { id, replicas } => TraceEvent::AcksDiscarded { id, replicas },
            Note::TauSelected(ts) => {
                let Some(op) = self.current_op(actor) else {
                    return;
                };
                self.ops[op].tau = Some(Tau::Finite(ts));
                TraceEvent::Tau { op, ts }
            }
            Note::OpDone { value, delays, .. } => {
                let Some(op) = self.current_op(actor) else {
                    return;
                };
                let rec = &mut self.ops[op];
                rec.respond = Some(self.now);
                if rec.is_read() {
                    rec.value = value;
                }
                let val = rec.value;
                self.client_slot(actor).current = None;
                self.schedule_next_invoke(actor);
                TraceEvent::Respond { op, val, delays }
            }
            Note::RecoveryStarted => TraceEvent::RecoveryStart,
            Note::IncarnationChosen(inc) => TraceEvent::IncChosen { inc },
            Note::Recovered => TraceEvent::Recovered,
        };
        self.record(actor, event);
    }

    fn current_op(&mut self, actor: ProcessId) -> Option<usize> {
        if self.is_client(actor) {
            self.client_slot(actor).current
        } else {
            None
        }
    }
}
