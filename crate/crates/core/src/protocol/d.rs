//! Replica automaton of the crash-vector protocol.
//!
//! Every restart runs a distributed recovery that picks a fresh incarnation
//! number, announces it with crash-consistent writes, and then pulls the
//! latest register state from a read quorum. The `State(inc)` query also
//! raises the responder's view of the caller's incarnation, which is what
//! invalidates acknowledgments the caller sent before it crashed.

use std::fmt;

use crate::types::{
    fresh_request_id, CrashVector, IdCounter, Incarnation, Message, ProcessId, ReadPayload, ReadReq, StateSnapshot,
    Timestamp, Value, WriteReq,
};

use super::quorum::{CcWriteQuorum, ReadQuorum, ReadRule};
use super::{max_pair, replica_ids, Effects, Envelope, Note, Replica, Snapshot};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReplicaStateD {
    pub ts: Timestamp,
    pub val: Value,
    pub cv: CrashVector,
    pub pre_cv: CrashVector,
    pub stale: bool,
}

impl ReplicaStateD {
    pub fn initial(n: u32) -> Self {
        ReplicaStateD {
            ts: Timestamp::INITIAL,
            val: Value::INITIAL,
            cv: CrashVector::zeros(n as usize),
            pre_cv: CrashVector::zeros(n as usize),
            stale: false,
        }
    }

    fn snapshot_payload(&self) -> StateSnapshot {
        StateSnapshot {
            ts: self.ts,
            val: self.val,
            cv: self.cv.clone(),
            pre_cv: self.pre_cv.clone(),
        }
    }
}

impl fmt::Display for ReplicaStateD {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ts={} val={} cv={} pre_cv={} stale={}",
            self.ts, self.val, self.cv, self.pre_cv, self.stale
        )
    }
}

/// Progress of the restart handler.
#[derive(Debug, Clone)]
enum Recovery {
    ReadPreCv(ReadQuorum),
    WritePreCv(CcWriteQuorum, Incarnation),
    WriteCv(CcWriteQuorum),
    ReadState(ReadQuorum),
}

#[derive(Debug, Clone)]
pub struct ReplicaD {
    id: ProcessId,
    n: u32,
    q_w: usize,
    q_r: usize,
    pub state: ReplicaStateD,
    ids: IdCounter,
    recovery: Option<Recovery>,
}

impl ReplicaD {
    pub fn new(id: ProcessId, n: u32, q_w: usize, q_r: usize) -> Self {
        ReplicaD {
            id,
            n,
            q_w,
            q_r,
            state: ReplicaStateD::initial(n),
            ids: IdCounter::default(),
            recovery: None,
        }
    }

    pub fn is_recovering(&self) -> bool {
        self.recovery.is_some()
    }

    fn reply(&self, env: &Envelope, msg: Message, fx: &mut Effects) {
        fx.send(env.from, msg, env.depth + 1);
    }

    fn on_read(&mut self, env: &Envelope, id: crate::types::RequestId, req: ReadReq, fx: &mut Effects) {
        if self.state.stale {
            return;
        }
        let payload = match req {
            ReadReq::Ts => ReadPayload::Ts(self.state.ts),
            ReadReq::TsVal => ReadPayload::TsVal(self.state.ts, self.state.val),
            ReadReq::PreCv(j) => ReadPayload::PreCv(self.state.pre_cv.get(j)),
            ReadReq::Cv => ReadPayload::Cv(self.state.cv.clone()),
            ReadReq::State(inc) => {
                self.state.cv.raise(env.from, inc);
                ReadPayload::State(self.state.snapshot_payload())
            }
        };
        self.reply(
            env,
            Message::ReadAck {
                id,
                payload,
                sender: self.id,
            },
            fx,
        );
    }

    fn on_write(
        &mut self,
        env: &Envelope,
        id: crate::types::RequestId,
        req: WriteReq,
        inc: Option<Incarnation>,
        fx: &mut Effects,
    ) {
        let me = self.id;
        let cv = match req {
            WriteReq::TsVal(ts, v) => {
                if self.state.stale {
                    return;
                }
                if ts > self.state.ts {
                    self.state.ts = ts;
                    self.state.val = v;
                }
                Some(self.state.cv.clone())
            }
            WriteReq::PreCv(j, v) => {
                self.state.cv.raise(me, inc.unwrap_or(0));
                self.state.pre_cv.raise(j, v);
                None
            }
            WriteReq::Cv(j, v) => {
                self.state.cv.raise(me, inc.unwrap_or(0));
                self.state.cv.raise(j, v);
                None
            }
        };
        self.reply(
            env,
            Message::WriteAck {
                id,
                inc: Some(self.state.cv.get(me)),
                cv,
                sender: me,
            },
            fx,
        );
    }

    fn start_read(&mut self, req: ReadReq, fx: &mut Effects) -> ReadQuorum {
        let id = fresh_request_id(self.id, &mut self.ids);
        ReadQuorum::start(id, req, ReadRule::Fixed(self.q_r), replica_ids(self.n), 0, fx)
    }

    fn start_write(&mut self, req: WriteReq, fx: &mut Effects) -> CcWriteQuorum {
        let id = fresh_request_id(self.id, &mut self.ids);
        CcWriteQuorum::start(id, req, self.id, self.q_w, self.q_r, replica_ids(self.n), 0, fx)
    }

    /// Feeds a reply to the recovery step in progress and advances it.
    fn on_recovery_reply(&mut self, env: &Envelope, fx: &mut Effects) {
        let Some(step) = self.recovery.take() else {
            return;
        };
        let next = match (step, &env.msg) {
            (Recovery::ReadPreCv(mut rq), Message::ReadAck { id, payload, sender }) if *id == rq.id => {
                if rq.on_ack(*sender, payload, env.depth, fx) {
                    let highest = rq
                        .payloads()
                        .filter_map(|p| match p {
                            ReadPayload::PreCv(v) => Some(*v),
                            _ => None,
                        })
                        .max()
                        .unwrap_or(0);
                    let next_inc = highest + 1;
                    let wq = self.start_write(WriteReq::PreCv(self.id, next_inc), fx);
                    Some(Recovery::WritePreCv(wq, next_inc))
                } else {
                    Some(Recovery::ReadPreCv(rq))
                }
            }
            (Recovery::WritePreCv(mut wq, next_inc), msg) => {
                if self.feed_write(&mut wq, env, msg, fx) {
                    self.state.cv.set(self.id, next_inc);
                    fx.note(Note::IncarnationChosen(next_inc));
                    let wq = self.start_write(WriteReq::Cv(self.id, next_inc), fx);
                    Some(Recovery::WriteCv(wq))
                } else {
                    Some(Recovery::WritePreCv(wq, next_inc))
                }
            }
            (Recovery::WriteCv(mut wq), msg) => {
                if self.feed_write(&mut wq, env, msg, fx) {
                    let inc = self.state.cv.get(self.id);
                    Some(Recovery::ReadState(self.start_read(ReadReq::State(inc), fx)))
                } else {
                    Some(Recovery::WriteCv(wq))
                }
            }
            (Recovery::ReadState(mut rq), Message::ReadAck { id, payload, sender }) if *id == rq.id => {
                if rq.on_ack(*sender, payload, env.depth, fx) {
                    self.finish_recovery(&rq, fx);
                    None
                } else {
                    Some(Recovery::ReadState(rq))
                }
            }
            (other, _) => Some(other),
        };
        self.recovery = next;
    }

    fn feed_write(&mut self, wq: &mut CcWriteQuorum, env: &Envelope, msg: &Message, fx: &mut Effects) -> bool {
        match msg {
            Message::WriteAck { id, inc, cv, sender } if *id == wq.id => {
                wq.on_write_ack(*sender, *inc, cv.as_ref(), env.depth, env.sent_step, &mut self.ids, fx)
            }
            Message::ReadAck { id, payload, sender } => wq.on_read_ack(*sender, *id, payload, env.depth, fx),
            _ => false,
        }
    }

    fn finish_recovery(&mut self, rq: &ReadQuorum, fx: &mut Effects) {
        let states: Vec<&StateSnapshot> = rq
            .payloads()
            .filter_map(|p| match p {
                ReadPayload::State(s) => Some(s),
                _ => None,
            })
            .collect();
        for s in &states {
            self.state.pre_cv.merge(&s.pre_cv);
            self.state.cv.merge(&s.cv);
        }
        let (ts, val) = max_pair(states.iter().map(|s| (s.ts, s.val)));
        if ts > self.state.ts {
            self.state.ts = ts;
            self.state.val = val;
        }
        self.state.stale = false;
        fx.note(Note::Recovered);
    }
}

impl Replica for ReplicaD {
    fn id(&self) -> ProcessId {
        self.id
    }

    fn on_message(&mut self, env: &Envelope, fx: &mut Effects) {
        match &env.msg {
            Message::Read { id, req } => self.on_read(env, *id, *req, fx),
            Message::Write { id, req, inc } => self.on_write(env, *id, *req, *inc, fx),
            Message::ReadAck { .. } | Message::WriteAck { .. } => self.on_recovery_reply(env, fx),
        }
    }

    fn on_timer(&mut self, fx: &mut Effects) {
        match &self.recovery {
            Some(Recovery::ReadPreCv(rq)) | Some(Recovery::ReadState(rq)) => rq.retransmit(fx),
            Some(Recovery::WritePreCv(wq, _)) | Some(Recovery::WriteCv(wq)) => wq.retransmit(fx),
            None => {}
        }
    }

    fn on_restart(&mut self, restored: Option<Snapshot>, fx: &mut Effects) {
        self.state = match restored {
            Some(Snapshot::CrashVector(s)) => s,
            _ => ReplicaStateD::initial(self.n),
        };
        self.state.stale = true;
        fx.note(Note::RecoveryStarted);
        let rq = self.start_read(ReadReq::PreCv(self.id), fx);
        self.recovery = Some(Recovery::ReadPreCv(rq));
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot::CrashVector(self.state.clone())
    }

    fn is_active(&self) -> bool {
        self.recovery.is_none()
    }

    fn has_pending(&self) -> bool {
        self.recovery.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::RequestId;

    const ID: RequestId = RequestId { origin: 9, seq: 0 };

    fn env(from: ProcessId, msg: Message) -> Envelope {
        Envelope {
            from,
            to: 1,
            msg,
            depth: 1,
            sent_step: 0,
        }
    }

    fn replica(cv: &[Incarnation]) -> ReplicaD {
        let mut r = ReplicaD::new(1, cv.len() as u32, 2, 2);
        r.state.cv = CrashVector::from_vec(cv.to_vec());
        r
    }

    #[test]
    fn state_query_raises_the_callers_incarnation() {
        let mut r = replica(&[0, 0, 1]);
        let mut fx = Effects::default();
        r.on_message(
            &env(
                3,
                Message::Read {
                    id: ID,
                    req: ReadReq::State(5),
                },
            ),
            &mut fx,
        );
        assert_eq!(r.state.cv.as_slice(), &[0, 0, 5]);
        match &fx.sends[0].msg {
            Message::ReadAck {
                payload: ReadPayload::State(s),
                ..
            } => assert_eq!(s.cv.as_slice(), &[0, 0, 5]),
            other => panic!("unexpected reply {other}"),
        }
    }

    #[test]
    fn stale_replica_ignores_reads_and_register_writes() {
        let mut r = replica(&[0, 0, 0]);
        r.state.stale = true;
        let mut fx = Effects::default();
        r.on_message(
            &env(
                4,
                Message::Read {
                    id: ID,
                    req: ReadReq::TsVal,
                },
            ),
            &mut fx,
        );
        r.on_message(
            &env(
                4,
                Message::Write {
                    id: ID,
                    req: WriteReq::TsVal(Timestamp::new(1, 4), Value(1)),
                    inc: Some(0),
                },
            ),
            &mut fx,
        );
        assert!(fx.sends.is_empty());
        assert_eq!(r.state.ts, Timestamp::INITIAL);
    }

    #[test]
    fn crash_vector_reads_echo_the_vector() {
        let mut r = replica(&[0, 3, 1]);
        let mut fx = Effects::default();
        r.on_message(
            &env(
                2,
                Message::Read {
                    id: ID,
                    req: ReadReq::Cv,
                },
            ),
            &mut fx,
        );
        assert!(matches!(
            &fx.sends[0].msg,
            Message::ReadAck { payload: ReadPayload::Cv(cv), .. } if cv.as_slice() == [0, 3, 1]
        ));
    }

    #[test]
    fn register_write_ack_carries_the_crash_vector() {
        let mut r = replica(&[0, 0, 0]);
        let mut fx = Effects::default();
        let w = Message::Write {
            id: ID,
            req: WriteReq::TsVal(Timestamp::new(1, 4), Value(1)),
            inc: Some(0),
        };
        r.on_message(&env(4, w), &mut fx);
        assert_eq!((r.state.ts, r.state.val), (Timestamp::new(1, 4), Value(1)));
        assert_eq!(
            fx.sends[0].msg,
            Message::WriteAck {
                id: ID,
                inc: Some(0),
                cv: Some(CrashVector::zeros(3)),
                sender: 1
            }
        );
    }

    #[test]
    fn announcement_writes_are_handled_while_stale() {
        let mut r = replica(&[0, 0, 0]);
        r.state.stale = true;
        let mut fx = Effects::default();
        r.on_message(
            &env(
                2,
                Message::Write {
                    id: ID,
                    req: WriteReq::PreCv(2, 5),
                    inc: Some(3),
                },
            ),
            &mut fx,
        );
        assert_eq!(r.state.cv.as_slice(), &[3, 0, 0]);
        assert_eq!(r.state.pre_cv.as_slice(), &[0, 5, 0]);
        assert_eq!(
            fx.sends[0].msg,
            Message::WriteAck {
                id: ID,
                inc: Some(3),
                cv: None,
                sender: 1
            }
        );

        let mut r = replica(&[4, 0, 2]);
        let mut fx = Effects::default();
        let w = Message::Write {
            id: ID,
            req: WriteReq::Cv(3, 7),
            inc: Some(0),
        };
        r.on_message(&env(3, w.clone()), &mut fx);
        r.on_message(&env(3, w), &mut fx);
        assert_eq!(r.state.cv.as_slice(), &[4, 0, 7]);
        assert_eq!(fx.sends[0].msg, fx.sends[1].msg);
        assert!(matches!(
            fx.sends[0].msg,
            Message::WriteAck {
                inc: Some(4),
                cv: None,
                ..
            }
        ));
    }

    /// Drives one recovery by answering every request from a fixed set of
    /// peer replies.
    #[test]
    fn recovery_picks_one_above_the_highest_announcement() {
        let mut r = ReplicaD::new(1, 3, 2, 2);
        let mut fx = Effects::default();
        r.on_restart(None, &mut fx);
        assert!(r.state.stale && r.is_recovering());
        let rq_id = match &fx.sends[0].msg {
            Message::Read {
                id,
                req: ReadReq::PreCv(1),
            } => *id,
            other => panic!("unexpected first request {other}"),
        };
        for (peer, v) in [(2, 4), (3, 2)] {
            let mut fx2 = Effects::default();
            r.on_message(
                &env(
                    peer,
                    Message::ReadAck {
                        id: rq_id,
                        payload: ReadPayload::PreCv(v),
                        sender: peer,
                    },
                ),
                &mut fx2,
            );
            fx = fx2;
        }
        assert!(fx.sends.iter().any(|o| matches!(
            o.msg,
            Message::Write {
                req: WriteReq::PreCv(1, 5),
                ..
            }
        )));
    }
}
