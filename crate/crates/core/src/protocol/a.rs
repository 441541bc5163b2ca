//! Replica automaton of the timestamp register protocol with the two
//! restart behaviours: state-preserving (non-volatile storage) and
//! stale-flag (volatile storage).

use std::fmt;

use crate::types::{Message, ProcessId, ReadPayload, ReadReq, Timestamp, Value, WriteReq};

use super::{Effects, Envelope, Note, Replica, Snapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ReplicaStateA {
    pub ts: Timestamp,
    pub val: Value,
    pub stale: bool,
}

impl Default for ReplicaStateA {
    fn default() -> Self {
        ReplicaStateA {
            ts: Timestamp::INITIAL,
            val: Value::INITIAL,
            stale: false,
        }
    }
}

impl ReplicaStateA {
    /// Monotone register update; returns whether the state changed.
    pub fn apply(&mut self, ts: Timestamp, val: Value) -> bool {
        if ts > self.ts {
            self.ts = ts;
            self.val = val;
            true
        } else {
            false
        }
    }
}

impl fmt::Display for ReplicaStateA {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ts={} val={} stale={}", self.ts, self.val, self.stale)
    }
}

/// Reply to a READ from the register state, or `None` when stale.
pub fn answer_read(state: &ReplicaStateA, req: ReadReq) -> Option<ReadPayload> {
    if state.stale {
        return None;
    }
    match req {
        ReadReq::Ts => Some(ReadPayload::Ts(state.ts)),
        ReadReq::TsVal => Some(ReadPayload::TsVal(state.ts, state.val)),
        _ => None,
    }
}

#[derive(Debug, Clone)]
pub struct ReplicaA {
    id: ProcessId,
    /// True when the predicate selects the non-volatile variant.
    p_holds: bool,
    pub state: ReplicaStateA,
}

impl ReplicaA {
    pub fn new(id: ProcessId, p_holds: bool) -> Self {
        ReplicaA {
            id,
            p_holds,
            state: ReplicaStateA::default(),
        }
    }
}

impl Replica for ReplicaA {
    fn id(&self) -> ProcessId {
        self.id
    }

    fn on_message(&mut self, env: &Envelope, fx: &mut Effects) {
        match &env.msg {
            Message::Read { id, req } => {
                if let Some(payload) = answer_read(&self.state, *req) {
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
                id,
                req: WriteReq::TsVal(ts, v),
                ..
            } => {
                self.state.apply(*ts, *v);
                fx.send(
                    env.from,
                    Message::WriteAck {
                        id: *id,
                        inc: None,
                        cv: None,
                        sender: self.id,
                    },
                    env.depth + 1,
                );
            }
            _ => {}
        }
    }

    fn on_timer(&mut self, _fx: &mut Effects) {}

    fn on_restart(&mut self, restored: Option<Snapshot>, fx: &mut Effects) {
        self.state = match restored {
            Some(Snapshot::Register(s)) => s,
            _ => ReplicaStateA::default(),
        };
        if !self.p_holds {
            self.state.stale = true;
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
