//! Replica automata of flawed prior designs, reconstructed deeply enough to
//! replay their counterexamples on the shared simulator.

use crate::protocol::a::{answer_read, ReplicaStateA};
use crate::protocol::quorum::{ReadQuorum, ReadRule};
use crate::protocol::{max_pair, replica_ids, Effects, Envelope, Note, Replica, Snapshot};
use crate::types::{fresh_request_id, IdCounter, Message, ProcessId, ReadPayload, ReadReq, WriteReq};

fn ack_write(id: ProcessId, env: &Envelope, fx: &mut Effects) {
    if let Message::Write { id: rid, .. } = &env.msg {
        fx.send(
            env.from,
            Message::WriteAck {
                id: *rid,
                inc: None,
                cv: None,
                sender: id,
            },
            env.depth + 1,
        );
    }
}

/// Stale-flag replica whose restart handler pulls the freshest state from a
/// read quorum and clears the flag.
#[derive(Debug, Clone)]
pub struct NaiveRecoveryReplica {
    id: ProcessId,
    n: u32,
    q_r: usize,
    pub state: ReplicaStateA,
    ids: IdCounter,
    recovery: Option<ReadQuorum>,
}

impl NaiveRecoveryReplica {
    pub fn new(id: ProcessId, n: u32, q_r: usize) -> Self {
        NaiveRecoveryReplica {
            id,
            n,
            q_r,
            state: ReplicaStateA::default(),
            ids: IdCounter::default(),
            recovery: None,
        }
    }
}

impl Replica for NaiveRecoveryReplica {
    fn id(&self) -> ProcessId {
        self.id
    }

    fn on_message(&mut self, env: &Envelope, fx: &mut Effects) {
        match &env.msg {
            Message::Read { id, req } => {
                let req = match req {
                    ReadReq::State(_) => ReadReq::TsVal,
                    r => *r,
                };
                if let Some(payload) = answer_read(&self.state, req) {
                    fx.send(
                        env.from,
                        Message::ReadAck {
                            id: *id,
                            payload,
                            sender: self.id,
                        },
                        env.depth + 1,
                    );
                }
            }
            Message::Write {
                req: WriteReq::TsVal(ts, v),
                ..
            } => {
                self.state.apply(*ts, *v);
                ack_write(self.id, env, fx);
            }
            Message::ReadAck { id, payload, sender } => {
                let Some(rq) = self.recovery.as_mut() else {
                    return;
                };
                if rq.id != *id || !rq.on_ack(*sender, payload, env.depth, fx) {
                    return;
                }
                let (ts, val) = max_pair(rq.payloads().filter_map(ReadPayload::pair));
                self.state.apply(ts, val);
                self.state.stale = false;
                self.recovery = None;
                fx.note(Note::Recovered);
            }
            _ => {}
        }
    }

    fn on_timer(&mut self, fx: &mut Effects) {
        if let Some(rq) = &self.recovery {
            rq.retransmit(fx);
        }
    }

    fn on_restart(&mut self, restored: Option<Snapshot>, fx: &mut Effects) {
        self.state = match restored {
            Some(Snapshot::Register(s)) => s,
            _ => ReplicaStateA::default(),
        };
        self.state.stale = true;
        fx.note(Note::RecoveryStarted);
        let id = fresh_request_id(self.id, &mut self.ids);
        self.recovery = Some(ReadQuorum::start(
            id,
            ReadReq::State(0),
            ReadRule::Fixed(self.q_r),
            replica_ids(self.n),
            0,
            fx,
        ));
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot::Register(self.state)
    }

    fn is_active(&self) -> bool {
        self.recovery.is_none()
    }

    fn has_pending(&self) -> bool {
        self.recovery.is_some()
    }
}

/// Sizes of the suspicion-flag baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RrParams {
    pub m_r: u32,
    pub f: u32,
    pub n: u32,
    pub w: u32,
}

/// `N = max(M_R, F) + F + 1`, `W = max(M_R, F) + 1`. Requires `F >= 1`.
pub fn rr_params(m_r: u32, f: u32) -> Option<RrParams> {
    if f < 1 {
        return None;
    }
    let m = m_r.max(f);
    Some(RrParams {
        m_r,
        f,
        n: m + f + 1,
        w: m + 1,
    })
}

impl RrParams {
    pub fn read_rule(&self) -> ReadRule {
        ReadRule::Suspicion {
            f: self.f as usize,
            m_r: self.m_r as usize,
        }
    }

    /// Read quorum size when `s` responders are suspicious.
    pub fn read_quorum(&self, s: u32) -> u32 {
        self.f + s.min(self.m_r) + 1
    }
}

/// Replica that marks itself suspicious after a restart, keeps answering,
/// and clears the flag after adopting the freshest state of a read quorum
/// of its peers.
#[derive(Debug, Clone)]
pub struct RrReplica {
    id: ProcessId,
    n: u32,
    rule: ReadRule,
    pub state: ReplicaStateA,
    pub suspicious: bool,
    ids: IdCounter,
    recovery: Option<ReadQuorum>,
}

impl RrReplica {
    pub fn new(id: ProcessId, p: &RrParams) -> Self {
        RrReplica {
            id,
            n: p.n,
            rule: p.read_rule(),
            state: ReplicaStateA::default(),
            suspicious: false,
            ids: IdCounter::default(),
            recovery: None,
        }
    }
}

impl Replica for RrReplica {
    fn id(&self) -> ProcessId {
        self.id
    }

    fn on_message(&mut self, env: &Envelope, fx: &mut Effects) {
        match &env.msg {
            Message::Read { id, .. } => fx.send(
                env.from,
                Message::ReadAck {
                    id: *id,
                    payload: ReadPayload::Flagged {
                        ts: self.state.ts,
                        val: self.state.val,
                        suspicious: self.suspicious,
                    },
                    sender: self.id,
                },
                env.depth + 1,
            ),
            Message::Write {
                req: WriteReq::TsVal(ts, v),
                ..
            } => {
                self.state.apply(*ts, *v);
                ack_write(self.id, env, fx);
            }
            Message::ReadAck { id, payload, sender } => {
                let Some(rq) = self.recovery.as_mut() else {
                    return;
                };
                if rq.id != *id || !rq.on_ack(*sender, payload, env.depth, fx) {
                    return;
                }
                let (ts, val) = max_pair(rq.payloads().filter_map(ReadPayload::pair));
                self.state.apply(ts, val);
                self.suspicious = false;
                self.recovery = None;
                fx.note(Note::Recovered);
            }
            _ => {}
        }
    }

    fn on_timer(&mut self, fx: &mut Effects) {
        if let Some(rq) = &self.recovery {
            rq.retransmit(fx);
        }
    }

    fn on_restart(&mut self, restored: Option<Snapshot>, fx: &mut Effects) {
        self.state = match restored {
            Some(Snapshot::Register(s)) => s,
            _ => ReplicaStateA::default(),
        };
        self.suspicious = true;
        fx.note(Note::RecoveryStarted);
        let id = fresh_request_id(self.id, &mut self.ids);
        let peers = replica_ids(self.n).into_iter().filter(|j| *j != self.id).collect();
        self.recovery = Some(ReadQuorum::start(id, ReadReq::TsVal, self.rule, peers, 0, fx));
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot::Register(self.state)
    }

    fn is_active(&self) -> bool {
        self.recovery.is_none()
    }

    fn has_pending(&self) -> bool {
        self.recovery.is_some()
    }
}

/// Sizes of the amnesia-masking storage baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AmsParams {
    pub a: u32,
    pub b: u32,
    pub n: u32,
    pub f: u32,
    pub s: u32,
    pub q_w: u32,
    pub q_r: u32,
}

/// `n = 2a + 3b + 1`, `f = a + b`, `s = 2a + 2b + 1`, `|Q_W| = a + 2b + 1`,
/// `|Q_R| = a + b + 1`. Requires `a > 0` and `b > 1`.
pub fn ams_params(a: u32, b: u32) -> Option<AmsParams> {
    if a == 0 || b <= 1 {
        return None;
    }
    Some(AmsParams {
        a,
        b,
        n: 2 * a + 3 * b + 1,
        f: a + b,
        s: 2 * a + 2 * b + 1,
        q_w: a + 2 * b + 1,
        q_r: a + b + 1,
    })
}

impl AmsParams {
    /// Replicas with stable storage: `p_1 .. p_s`.
    pub fn has_stable_storage(&self, replica: ProcessId) -> bool {
        replica <= self.s
    }
}

/// Storage replica that comes back amnesic when it has no stable storage
/// and stops being amnesic on the first write it applies.
#[derive(Debug, Clone)]
pub struct AmsReplica {
    id: ProcessId,
    stable: bool,
    pub state: ReplicaStateA,
    pub amnesic: bool,
}

impl AmsReplica {
    pub fn new(id: ProcessId, p: &AmsParams) -> Self {
        AmsReplica {
            id,
            stable: p.has_stable_storage(id),
            state: ReplicaStateA::default(),
            amnesic: false,
        }
    }
}

impl Replica for AmsReplica {
    fn id(&self) -> ProcessId {
        self.id
    }

    fn on_message(&mut self, env: &Envelope, fx: &mut Effects) {
        match &env.msg {
            Message::Read { id, .. } if !self.amnesic => fx.send(
                env.from,
                Message::ReadAck {
                    id: *id,
                    payload: ReadPayload::TsVal(self.state.ts, self.state.val),
                    sender: self.id,
                },
                env.depth + 1,
            ),
            Message::Write {
                req: WriteReq::TsVal(ts, v),
                ..
            } => {
                self.state.apply(*ts, *v);
                self.amnesic = false;
                ack_write(self.id, env, fx);
            }
            _ => {}
        }
    }

    fn on_timer(&mut self, _fx: &mut Effects) {}

    fn on_restart(&mut self, restored: Option<Snapshot>, fx: &mut Effects) {
        match (self.stable, restored) {
            (true, Some(Snapshot::Register(s))) => self.state = s,
            _ => {
                self.state = ReplicaStateA::default();
                self.amnesic = !self.stable;
            }
        }
        fx.note(Note::Recovered);
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot::Register(self.state)
    }

    fn is_active(&self) -> bool {
        true
    }

    fn has_pending(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rr_sizes() {
        let p = rr_params(2, 2).unwrap();
        assert_eq!((p.n, p.w), (5, 3));
        assert_eq!(p.read_quorum(0), 3);
        assert_eq!(p.read_quorum(1), 4);
        assert_eq!(p.read_quorum(5), 5);
        assert!(rr_params(2, 0).is_none());
    }

    #[test]
    fn ams_sizes() {
        let p = ams_params(1, 2).unwrap();
        assert_eq!((p.n, p.f, p.s, p.q_w, p.q_r), (9, 3, 7, 6, 4));
        assert!(p.has_stable_storage(7) && !p.has_stable_storage(8));
        assert!(ams_params(0, 2).is_none());
        assert!(ams_params(1, 1).is_none());
    }

    #[test]
    fn ams_sizes_meet_the_quorum_constraints() {
        for a in 1..6 {
            for b in 2..6 {
                let p = ams_params(a, b).unwrap();
                assert!(p.n - p.s + p.f < p.q_w && p.q_w <= p.n - p.f);
                assert!(p.q_r <= p.s - p.f);
                assert!(p.q_r + p.q_w > p.n);
            }
        }
    }
}
