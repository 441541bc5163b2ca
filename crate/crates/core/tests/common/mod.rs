//! Helpers shared by the integration suites: random history generation,
//! a brute-force linearizability oracle and a hop-depth recount over full
//! traces.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crr_register::checker::{History, HistoryRecord, Tau};
use crr_register::experiment::{families, Experiment, WorkloadSource};
use crr_register::sim::{run, OpKind, RandomWorkload, TraceEvent, TraceRecord};
use crr_register::types::{ProcessId, Timestamp, Value};

/// Plain backtracking over orders of the complete ops plus any incomplete
/// writes. No memoisation, no pruning beyond real time, so it shares no
/// search structure with the library checker.
pub fn brute_force_linearizable(h: &History) -> Option<Vec<usize>> {
    fn go(h: &History, placed: &mut Vec<usize>, used: &mut [bool], current: Value) -> bool {
        let ops = &h.ops;
        if (0..ops.len()).all(|i| used[i] || !ops[i].is_complete()) {
            return true;
        }
        for i in 0..ops.len() {
            if used[i] || (!ops[i].is_complete() && !ops[i].is_write()) {
                continue;
            }
            let blocked = (0..ops.len()).any(|j| !used[j] && j != i && ops[j].precedes(&ops[i]));
            if blocked {
                continue;
            }
            let next = if ops[i].is_write() {
                ops[i].value.unwrap()
            } else if ops[i].value == Some(current) {
                current
            } else {
                continue;
            };
            used[i] = true;
            placed.push(i);
            if go(h, placed, used, next) {
                return true;
            }
            placed.pop();
            used[i] = false;
        }
        false
    }
    let mut placed = Vec::new();
    let mut used = vec![false; h.ops.len()];
    go(h, &mut placed, &mut used, Value::INITIAL).then_some(placed)
}

fn record(
    client: ProcessId,
    kind: OpKind,
    value: Option<Value>,
    invoke: u64,
    respond: Option<u64>,
    tau: Tau,
) -> HistoryRecord {
    HistoryRecord {
        client,
        kind,
        value,
        invoke,
        respond,
        tau: Some(tau),
    }
}

/// A synthetic history of up to `max_ops` ops with unique write values and
/// unique write taus. Reads return the value of a random write (or `v0`)
/// and carry that write's tau, so the result is well formed but usually not
/// linearizable.
pub fn synthetic_history(rng: &mut ChaCha8Rng, max_ops: usize) -> History {
    let len = rng.gen_range(1..=max_ops);
    let mut writes: Vec<(Value, Timestamp)> = Vec::new();
    let mut ops = Vec::new();
    for i in 0..len {
        let client = rng.gen_range(4..8);
        let invoke = rng.gen_range(0..30);
        let respond = rng.gen_bool(0.85).then(|| invoke + rng.gen_range(1..12));
        if rng.gen_bool(0.5) {
            let value = Value(i as u64 + 1);
            let ts = Timestamp::new(rng.gen_range(1..6), client + 10 * i as u32);
            writes.push((value, ts));
            let tau = if respond.is_none() && rng.gen_bool(0.3) {
                Tau::Infinite(client)
            } else {
                Tau::Finite(ts)
            };
            if let Tau::Infinite(_) = tau {
                writes.pop();
            }
            ops.push(record(client, OpKind::Write, Some(value), invoke, respond, tau));
        } else {
            ops.push(record(
                client,
                OpKind::Read,
                None,
                invoke,
                respond,
                Tau::Infinite(client),
            ));
        }
    }
    for op in ops.iter_mut().filter(|o| o.is_read()) {
        if op.respond.is_none() {
            op.value = None;
            continue;
        }
        let pick = rng.gen_range(0..=writes.len());
        let (v, ts) = if pick == writes.len() {
            (Value::INITIAL, Timestamp::INITIAL)
        } else {
            writes[pick]
        };
        op.value = Some(v);
        op.tau = Some(Tau::Finite(ts));
    }
    History::new(ops)
}

/// Histories produced by the simulator with at most `max_ops` ops.
pub fn simulated_history(seed: u64, max_ops: usize) -> History {
    let ops = 1 + (seed as usize % max_ops);
    let mut exp: Experiment = match seed % 4 {
        0 => families::a2_in_model(1, 1),
        1 => families::d_eventual(1, 0),
        2 => families::a1_in_model(1, 1),
        _ => families::naive_with_restarts(),
    };
    exp.workload = WorkloadSource::Random(RandomWorkload {
        ops,
        ..RandomWorkload::default()
    });
    run(&exp.instantiate(seed)).expect("family configurations run").history
}

/// One adversarial edit: a read returns another value, a response moves,
/// an op loses its response, or two write taus swap. Returns `None` when
/// the edit does not apply.
pub fn mutate(h: &History, rng: &mut ChaCha8Rng) -> Option<History> {
    let mut ops = h.ops.clone();
    if ops.is_empty() {
        return None;
    }
    let written: Vec<(Value, Option<Tau>)> = ops
        .iter()
        .filter(|o| o.is_write())
        .map(|o| (o.value.unwrap(), o.tau))
        .collect();
    match rng.gen_range(0..4) {
        0 => {
            let reads: Vec<usize> = (0..ops.len())
                .filter(|&i| ops[i].is_read() && ops[i].is_complete())
                .collect();
            let &i = reads.choose(rng)?;
            let (v, tau) = written
                .choose(rng)
                .copied()
                .filter(|_| rng.gen_bool(0.8))
                .unwrap_or((Value::INITIAL, Some(Tau::Finite(Timestamp::INITIAL))));
            ops[i].value = Some(v);
            if rng.gen_bool(0.7) {
                ops[i].tau = tau;
            }
        }
        1 => {
            let i = rng.gen_range(0..ops.len());
            let r = ops[i].respond?;
            let shift: i64 = rng.gen_range(-6..=6);
            let moved = (r as i64 + shift).max(ops[i].invoke as i64 + 1);
            ops[i].respond = Some(moved as u64);
        }
        2 => {
            let i = rng.gen_range(0..ops.len());
            ops[i].respond?;
            ops[i].respond = None;
            if ops[i].is_read() {
                ops[i].value = None;
            }
        }
        _ => {
            let ws: Vec<usize> = (0..ops.len()).filter(|&i| ops[i].is_write()).collect();
            if ws.len() < 2 {
                return None;
            }
            let a = ws[rng.gen_range(0..ws.len())];
            let b = ws[rng.gen_range(0..ws.len())];
            if a == b {
                return None;
            }
            let t = ops[a].tau;
            ops[a].tau = ops[b].tau;
            ops[b].tau = t;
        }
    }
    Some(History::new(ops))
}

/// Recounts each completed op's message delays from a full trace by walking
/// causal chains: a replica step is one hop after the send it delivered, a
/// client step completing a quorum call is one hop after the latest ack of
/// its quorum, a retransmission timer inherits its phase start, and an
/// invocation is zero.
pub fn recount_delays(records: &[TraceRecord]) -> BTreeMap<usize, u32> {
    let mut sends: BTreeMap<u64, (u64, ProcessId, String)> = BTreeMap::new();
    let mut by_step: BTreeMap<u64, Vec<&TraceRecord>> = BTreeMap::new();
    for r in records {
        by_step.entry(r.step).or_default().push(r);
        if let TraceEvent::Send { mid, msg, .. } = &r.event {
            sends.insert(*mid, (r.step, r.actor, msg.clone()));
        }
    }
    let request_of = |msg: &str| {
        msg.split_once('(')
            .and_then(|(_, rest)| rest.split(';').next())
            .map(str::to_string)
    };

    let mut hops: BTreeMap<u64, u32> = BTreeMap::new();
    let mut phase_start: BTreeMap<ProcessId, u64> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for (&step, recs) in &by_step {
        let actor = recs[0].actor;
        let mut h = 0;
        for r in recs {
            match &r.event {
                TraceEvent::Deliver { mid, .. } => {
                    let (s, _, _) = &sends[mid];
                    h = hops[s] + 1;
                }
                TraceEvent::Timer => h = phase_start.get(&actor).map_or(0, |s| hops[s]),
                TraceEvent::RqDone { id, from, .. } => {
                    h = quorum_hops(&by_step, &sends, &hops, step, actor, &id.to_string(), from, &request_of)
                }
                TraceEvent::WqDone { id, quorum, .. } => {
                    let from: Vec<ProcessId> = quorum.iter().map(|(j, _)| *j).collect();
                    h = quorum_hops(
                        &by_step,
                        &sends,
                        &hops,
                        step,
                        actor,
                        &id.to_string(),
                        &from,
                        &request_of,
                    );
                }
                _ => {}
            }
            match &r.event {
                TraceEvent::RqStart { .. } | TraceEvent::WqStart { .. } => {
                    phase_start.insert(actor, step);
                }
                TraceEvent::Respond { op, .. } => {
                    out.insert(*op, h);
                }
                _ => {}
            }
        }
        hops.insert(step, h);
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn quorum_hops(
    by_step: &BTreeMap<u64, Vec<&TraceRecord>>,
    sends: &BTreeMap<u64, (u64, ProcessId, String)>,
    hops: &BTreeMap<u64, u32>,
    done: u64,
    client: ProcessId,
    id: &str,
    from: &[ProcessId],
    request_of: &dyn Fn(&str) -> Option<String>,
) -> u32 {
    let mut best = 0;
    for (_, recs) in by_step.range(..=done) {
        for r in recs.iter().filter(|r| r.actor == client) {
            if let TraceEvent::Deliver { mid, from: sender } = &r.event {
                let (s, _, msg) = &sends[mid];
                if from.contains(sender) && request_of(msg).as_deref() == Some(id) {
                    best = best.max(hops[s] + 1);
                }
            }
        }
    }
    best
}
