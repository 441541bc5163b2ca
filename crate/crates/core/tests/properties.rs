//! Randomised properties of the value types, threshold arithmetic, storage,
//! simulator traces and checkers.

mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crr_register::checker::{
    check_atomicity_blackbox, check_atomicity_whitebox, check_history, replay_linearization, Tau,
};
use crr_register::config::{predicate_p, quorum_plan, resolve, RawParams, Threshold};
use crr_register::experiment::families;
use crr_register::experiment::Experiment;
use crr_register::protocol::{ReplicaStateA, Snapshot};
use crr_register::sim::{run, PersistentStore, TraceEvent, TraceLevel, TraceRecord};
use crr_register::types::{fresh_request_id, ts_compare, CrashVector, IdCounter, Timestamp, Value};

fn threshold() -> impl Strategy<Value = Threshold> {
    prop_oneof![(0u32..12).prop_map(Threshold::Known), Just(Threshold::Unknown)]
}

fn family(i: u8) -> Experiment {
    match i % 5 {
        0 => families::a1_in_model(1, 1),
        1 => families::a2_in_model(1, 1),
        2 => families::a2_in_model(2, 0),
        3 => families::d_eventual(1, 1),
        _ => families::naive_with_restarts(),
    }
}

fn full_run(i: u8, seed: u64) -> Vec<TraceRecord> {
    let mut exp = family(i);
    exp.trace_level = TraceLevel::Full;
    run(&exp.instantiate(seed)).unwrap().trace.records
}

/// Parses `ts=(c,j)`, `cv=[..]` and `pre_cv=[..]` out of a state record.
fn state_fields(state: &str) -> (Timestamp, Vec<u64>, Vec<u64>) {
    let mut ts = Timestamp::INITIAL;
    let mut cv = Vec::new();
    let mut pre = Vec::new();
    let list = |s: &str| -> Vec<u64> {
        s.trim_matches(|c| c == '[' || c == ']')
            .split(',')
            .filter(|x| !x.is_empty())
            .map(|x| x.parse().unwrap())
            .collect()
    };
    for part in state.split(';') {
        if let Some(t) = part.strip_prefix("ts=") {
            ts = t.parse().unwrap();
        } else if let Some(c) = part.strip_prefix("cv=") {
            cv = list(c);
        } else if let Some(p) = part.strip_prefix("pre_cv=") {
            pre = list(p);
        }
    }
    (ts, cv, pre)
}

proptest! {
    #[test]
    fn timestamp_order_is_lexicographic(a in (0u64..6, 0u32..6), b in (0u64..6, 0u32..6), c in (0u64..6, 0u32..6)) {
        let (x, y, z) = (Timestamp::new(a.0, a.1), Timestamp::new(b.0, b.1), Timestamp::new(c.0, c.1));
        prop_assert_eq!(ts_compare(x, y), a.cmp(&b));
        prop_assert_eq!(ts_compare(x, y), ts_compare(y, x).reverse());
        if ts_compare(x, y).is_lt() && ts_compare(y, z).is_lt() {
            prop_assert!(ts_compare(x, z).is_lt());
        }
    }

    #[test]
    fn request_ids_never_repeat(origins in proptest::collection::vec(1u32..6, 1..40)) {
        let mut counters: BTreeMap<u32, IdCounter> = BTreeMap::new();
        let mut seen = std::collections::BTreeSet::new();
        for o in origins {
            let id = fresh_request_id(o, counters.entry(o).or_default());
            prop_assert_eq!(id.origin, o);
            prop_assert!(seen.insert(id));
        }
    }

    #[test]
    fn read_and_write_quorums_intersect(n in 1u32..16, k in 0u32..8, r in threshold(), b in threshold()) {
        let Ok(p) = resolve(RawParams { n, k, r, b }) else { return Ok(()) };
        let plan = quorum_plan(&p);
        prop_assert!(plan.q_r + plan.q_w > n as usize);
        prop_assert_eq!(plan.p_holds, 2 * k + p.r_eff < n && n <= 2 * k + p.b_eff);
        prop_assert_eq!(plan.p_holds, predicate_p(n, k, p.r_eff, p.b_eff));
        prop_assert_eq!(plan.q_w, (n - k) as usize);
        if plan.p_holds {
            prop_assert_eq!(plan.q_r, plan.q_w);
            prop_assert_eq!(plan.nonvolatile.len() as u32, 2 * k + p.r_eff + 1);
            prop_assert!(plan.nonvolatile.iter().all(|&j| j >= 1 && j <= n));
        } else {
            prop_assert_eq!(plan.q_r, (k + 1) as usize);
            prop_assert!(plan.nonvolatile.is_empty());
        }
        prop_assert_eq!(quorum_plan(&p), plan);
    }

    #[test]
    fn unknown_thresholds_take_the_worst_case(n in 1u32..16, k in 0u32..8) {
        if let Ok(p) = resolve(RawParams { n, k, r: Threshold::Unknown, b: Threshold::Unknown }) {
            prop_assert_eq!((p.r_eff, p.b_eff), (k, n));
        }
    }

    #[test]
    fn crash_vector_merge_is_a_join(a in proptest::collection::vec(0u64..9, 4), b in proptest::collection::vec(0u64..9, 4)) {
        let (x, y) = (CrashVector::from_vec(a.clone()), CrashVector::from_vec(b.clone()));
        let mut xy = x.clone();
        xy.merge(&y);
        let mut yx = y.clone();
        yx.merge(&x);
        prop_assert_eq!(&xy, &yx);
        let max: Vec<u64> = a.iter().zip(&b).map(|(p, q)| *p.max(q)).collect();
        prop_assert_eq!(xy.as_slice(), &max[..]);
        prop_assert!(x.dominated_by(&xy) && y.dominated_by(&xy));
        let mut again = xy.clone();
        again.merge(&y);
        prop_assert_eq!(again, xy);
    }

    #[test]
    fn register_state_only_moves_forward(writes in proptest::collection::vec((0u64..5, 1u32..5, 1u64..50), 0..30)) {
        let mut s = ReplicaStateA::default();
        let mut best = (Timestamp::INITIAL, Value::INITIAL);
        for (c, j, v) in writes {
            let before = s.ts;
            let ts = Timestamp::new(c, j);
            let changed = s.apply(ts, Value(v));
            prop_assert!(s.ts >= before);
            prop_assert_eq!(changed, ts > before);
            if ts > best.0 {
                best = (ts, Value(v));
            }
        }
        prop_assert_eq!((s.ts, s.val), best);
    }

    /// A rollback only ever hands back a snapshot that was committed before.
    #[test]
    fn rollbacks_restore_committed_snapshots(steps in proptest::collection::vec((any::<bool>(), 0u64..6, 0usize..8), 1..40)) {
        let snap = |c: u64| Snapshot::Register(ReplicaStateA { ts: Timestamp::new(c, 1), val: Value(c), stale: false });
        let mut store = PersistentStore::new(snap(0));
        let mut committed = vec![snap(0)];
        for (commit, c, v) in steps {
            if commit {
                if store.commit(snap(c)).is_some() {
                    committed.push(snap(c));
                }
            } else if let Some(restored) = store.rollback_to(v) {
                prop_assert!(committed.contains(&restored));
                prop_assert_eq!(store.current(), v);
            }
        }
    }

    #[test]
    fn runs_are_pure_functions_of_their_configuration(i in 0u8..5, seed in 0u64..10_000) {
        let mut exp = family(i);
        exp.trace_level = TraceLevel::Full;
        let a = run(&exp.instantiate(seed)).unwrap();
        let b = run(&exp.instantiate(seed)).unwrap();
        prop_assert_eq!(a.trace.to_text(), b.trace.to_text());
        prop_assert_eq!(a.history.to_text(), b.history.to_text());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Events execute in time order, crashed replicas take no steps, and each
    /// step belongs to a single process.
    #[test]
    fn traces_respect_event_order_and_downtime(i in 0u8..5, seed in 0u64..10_000) {
        let records = full_run(i, seed);
        let mut down = std::collections::BTreeSet::new();
        for w in records.windows(2) {
            prop_assert!((w[0].t, w[0].step) <= (w[1].t, w[1].step));
        }
        // Losses are logged when sent, under the recipient's id.
        let acting: Vec<&TraceRecord> = records.iter().filter(|r| !matches!(r.event, TraceEvent::Drop { .. })).collect();
        for w in acting.windows(2) {
            if w[0].step == w[1].step {
                prop_assert_eq!(w[0].actor, w[1].actor);
            }
        }
        for r in &records {
            match r.event {
                TraceEvent::Crash => { down.insert(r.actor); }
                TraceEvent::Restart { .. } => { down.remove(&r.actor); }
                TraceEvent::Deliver { .. } | TraceEvent::Send { .. } | TraceEvent::Timer | TraceEvent::State { .. } => {
                    prop_assert!(!down.contains(&r.actor), "replica {} acted while down: {}", r.actor, r);
                }
                _ => {}
            }
        }
    }

    /// Two requests carrying the same id are retransmissions of one request.
    #[test]
    fn equal_request_ids_carry_equal_requests(i in 0u8..5, seed in 0u64..10_000) {
        let mut payloads: BTreeMap<String, String> = BTreeMap::new();
        for r in full_run(i, seed) {
            let TraceEvent::Send { msg, .. } = &r.event else { continue };
            let Some(inner) = msg.strip_prefix("READ(").or_else(|| msg.strip_prefix("WRITE(")) else { continue };
            let mut parts = inner.trim_end_matches(')').splitn(3, ';');
            let id = parts.next().unwrap().to_string();
            let req = parts.next().unwrap().to_string();
            let kind = msg.split('(').next().unwrap();
            let prev = payloads.entry(format!("{kind}/{id}")).or_insert_with(|| req.clone());
            prop_assert_eq!(&*prev, &req);
        }
    }

    /// Between restarts, a replica's timestamp and crash-vector entries
    /// never decrease.
    #[test]
    fn replica_state_is_monotone_while_up(i in 0u8..5, seed in 0u64..10_000) {
        let mut last: BTreeMap<u32, (Timestamp, Vec<u64>, Vec<u64>)> = BTreeMap::new();
        for r in full_run(i, seed) {
            match &r.event {
                TraceEvent::Crash => { last.remove(&r.actor); }
                TraceEvent::State { state } => {
                    let now = state_fields(state);
                    if let Some(prev) = last.get(&r.actor) {
                        prop_assert!(now.0 >= prev.0, "ts went back at replica {}", r.actor);
                        prop_assert!(prev.1.iter().zip(&now.1).all(|(a, b)| a <= b));
                        prop_assert!(prev.2.iter().zip(&now.2).all(|(a, b)| a <= b));
                    }
                    last.insert(r.actor, now);
                }
                _ => {}
            }
        }
    }

    /// Completed ops respond after they are invoked; ops carry a finite tau
    /// once complete, and an infinite one names their own client.
    #[test]
    fn history_records_are_well_formed(i in 0u8..5, seed in 0u64..10_000) {
        let exp = family(i);
        let h = run(&exp.instantiate(seed)).unwrap().history;
        for op in &h.ops {
            if let Some(resp) = op.respond {
                prop_assert!(op.invoke < resp);
                prop_assert!(matches!(op.tau, Some(Tau::Finite(_))));
            }
            if let Some(Tau::Infinite(c)) = op.tau {
                prop_assert_eq!(c, op.client);
            }
        }
    }

    /// Whitebox certification implies blackbox linearizability, blackbox
    /// orders replay, and a brute-force search agrees with the blackbox.
    #[test]
    fn checkers_agree(seed in any::<u64>(), mutations in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = common::synthetic_history(&mut rng, 8);
        for _ in 0..mutations {
            if let Some(m) = common::mutate(&h, &mut rng) {
                h = m;
            }
        }
        let black = check_atomicity_blackbox(&h).unwrap();
        let white = check_atomicity_whitebox(&h).unwrap();
        if white.is_certified() {
            prop_assert!(black.is_linearizable());
        }
        if let crr_register::checker::BlackboxVerdict::Linearizable(order) = &black {
            prop_assert_eq!(replay_linearization(&h, order), Ok(()));
        }
        prop_assert_eq!(common::brute_force_linearizable(&h).is_some(), black.is_linearizable());
        prop_assert_eq!(check_history(&h).unwrap(), check_history(&h).unwrap());
    }
}
