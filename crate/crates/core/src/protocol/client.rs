//! Client automaton: register reads and writes as a query phase followed by
//! an update phase.

use crate::types::{fresh_request_id, IdCounter, Message, ProcessId, ReadPayload, ReadReq, Timestamp, Value, WriteReq};

use super::quorum::{CcWriteQuorum, PlainWriteQuorum, ReadQuorum, ReadRule};
use super::{max_pair, replica_ids, Effects, Envelope, Note};

/// One client operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpSpec {
    Read,
    Write(Value),
    /// Storage-layer write of a caller-chosen pair, without a query phase.
    AmsWrite(Timestamp, Value),
    /// Storage-layer read returning every pair of the read quorum.
    AmsRead,
}

impl OpSpec {
    pub fn is_write(&self) -> bool {
        matches!(self, OpSpec::Write(_) | OpSpec::AmsWrite(..))
    }

    pub fn written_value(&self) -> Option<Value> {
        match self {
            OpSpec::Write(v) | OpSpec::AmsWrite(_, v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteMode {
    Plain,
    CrashConsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClientConfig {
    pub n: u32,
    pub q_w: usize,
    pub q_r: usize,
    pub read_rule: ReadRule,
    pub write_mode: WriteMode,
    /// Whether reads propagate the value they return before completing.
    pub write_back: bool,
}

impl ClientConfig {
    pub fn new(n: u32, q_w: usize, q_r: usize, write_mode: WriteMode) -> Self {
        ClientConfig {
            n,
            q_w,
            q_r,
            read_rule: ReadRule::Fixed(q_r),
            write_mode,
            write_back: true,
        }
    }
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
enum WriteCall {
    Plain(PlainWriteQuorum),
    Cc(CcWriteQuorum),
}

impl WriteCall {
    fn retransmit(&self, fx: &mut Effects) {
        match self {
            WriteCall::Plain(w) => w.retransmit(fx),
            WriteCall::Cc(w) => w.retransmit(fx),
        }
    }
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
enum Phase {
    Query(ReadQuorum),
    Update(WriteCall),
}

#[derive(Debug, Clone)]
struct Session {
    op: OpSpec,
    phase: Phase,
    result: Option<Value>,
}

#[derive(Debug, Clone)]
pub struct Client {
    id: ProcessId,
    cfg: ClientConfig,
    ids: IdCounter,
    session: Option<Session>,
}

impl Client {
    pub fn new(id: ProcessId, cfg: ClientConfig) -> Self {
        Client {
            id,
            cfg,
            ids: IdCounter::default(),
            session: None,
        }
    }

    pub fn id(&self) -> ProcessId {
        self.id
    }

    pub fn is_idle(&self) -> bool {
        self.session.is_none()
    }

    pub fn has_pending(&self) -> bool {
        self.session.is_some()
    }

    /// Starts an operation. The caller guarantees the client is idle.
    pub fn invoke(&mut self, op: OpSpec, fx: &mut Effects) {
        assert!(self.is_idle(), "client {} already has an operation in flight", self.id);
        let phase = match op {
            OpSpec::AmsWrite(ts, v) => {
                fx.note(Note::TauSelected(ts));
                Phase::Update(self.start_write(WriteReq::TsVal(ts, v), 0, fx))
            }
            OpSpec::Write(_) => Phase::Query(self.start_read(ReadReq::Ts, fx)),
            OpSpec::Read | OpSpec::AmsRead => Phase::Query(self.start_read(ReadReq::TsVal, fx)),
        };
        self.session = Some(Session {
            op,
            phase,
            result: None,
        });
    }

    fn start_read(&mut self, req: ReadReq, fx: &mut Effects) -> ReadQuorum {
        let id = fresh_request_id(self.id, &mut self.ids);
        ReadQuorum::start(id, req, self.cfg.read_rule, replica_ids(self.cfg.n), 0, fx)
    }

    fn start_write(&mut self, req: WriteReq, base: u32, fx: &mut Effects) -> WriteCall {
        let id = fresh_request_id(self.id, &mut self.ids);
        let targets = replica_ids(self.cfg.n);
        match self.cfg.write_mode {
            WriteMode::Plain => WriteCall::Plain(PlainWriteQuorum::start(id, req, self.cfg.q_w, targets, base, fx)),
            WriteMode::CrashConsistent => WriteCall::Cc(CcWriteQuorum::start(
                id,
                req,
                self.id,
                self.cfg.q_w,
                self.cfg.q_r,
                targets,
                base,
                fx,
            )),
        }
    }

    pub fn on_timer(&mut self, fx: &mut Effects) {
        match self.session.as_ref().map(|s| &s.phase) {
            Some(Phase::Query(rq)) => rq.retransmit(fx),
            Some(Phase::Update(w)) => w.retransmit(fx),
            None => {}
        }
    }

    pub fn on_message(&mut self, env: &Envelope, fx: &mut Effects) {
        let Some(mut session) = self.session.take() else {
            return;
        };
        let finished = self.advance(&mut session, env, fx);
        if !finished {
            self.session = Some(session);
        }
    }

    fn advance(&mut self, s: &mut Session, env: &Envelope, fx: &mut Effects) -> bool {
        match (&mut s.phase, &env.msg) {
            (Phase::Query(rq), Message::ReadAck { id, payload, sender }) if *id == rq.id => {
                if !rq.on_ack(*sender, payload, env.depth, fx) {
                    return false;
                }
                let depth = rq.depth();
                let replies: Vec<ReadPayload> = rq.payloads().cloned().collect();
                self.query_done(s, &replies, depth, fx)
            }
            (Phase::Update(WriteCall::Plain(w)), Message::WriteAck { id, sender, .. }) if *id == w.id => {
                if w.on_ack(*sender, env.depth, env.sent_step, fx) {
                    finish(s.result, w.depth(), Vec::new(), fx);
                    return true;
                }
                false
            }
            (Phase::Update(WriteCall::Cc(w)), Message::WriteAck { id, inc, cv, sender }) if *id == w.id => {
                if w.on_write_ack(*sender, *inc, cv.as_ref(), env.depth, env.sent_step, &mut self.ids, fx) {
                    finish(s.result, w.depth(), Vec::new(), fx);
                    return true;
                }
                false
            }
            (Phase::Update(WriteCall::Cc(w)), Message::ReadAck { id, payload, sender }) => {
                if w.on_read_ack(*sender, *id, payload, env.depth, fx) {
                    finish(s.result, w.depth(), Vec::new(), fx);
                    return true;
                }
                false
            }
            _ => false,
        }
    }

    fn query_done(&mut self, s: &mut Session, replies: &[ReadPayload], depth: u32, fx: &mut Effects) -> bool {
        match s.op {
            OpSpec::Write(v) => {
                let cnt = replies
                    .iter()
                    .filter_map(ReadPayload::timestamp)
                    .map(|ts| ts.cnt)
                    .max()
                    .unwrap_or(0);
                let ts = Timestamp::new(cnt + 1, self.id);
                fx.note(Note::TauSelected(ts));
                s.phase = Phase::Update(self.start_write(WriteReq::TsVal(ts, v), depth, fx));
                false
            }
            OpSpec::Read => {
                let (ts, v) = max_pair(replies.iter().filter_map(ReadPayload::pair));
                fx.note(Note::TauSelected(ts));
                s.result = Some(v);
                if self.cfg.write_back {
                    s.phase = Phase::Update(self.start_write(WriteReq::TsVal(ts, v), depth, fx));
                    false
                } else {
                    finish(s.result, depth, vec![(ts, v)], fx);
                    true
                }
            }
            OpSpec::AmsRead => {
                let returned: Vec<_> = replies.iter().filter_map(ReadPayload::pair).collect();
                let (ts, v) = max_pair(returned.iter().copied());
                fx.note(Note::TauSelected(ts));
                s.result = Some(v);
                finish(s.result, depth, returned, fx);
                true
            }
            OpSpec::AmsWrite(..) => unreachable!("storage writes skip the query phase"),
        }
    }
}

fn finish(result: Option<Value>, delays: u32, returned: Vec<(Timestamp, Value)>, fx: &mut Effects) {
    fx.note(Note::OpDone {
        value: result,
        returned,
        delays,
    });
}
