//! Event-driven replica and client automata.
//!
//! Every handler consumes one input (a delivered message, a timer tick or a
//! restart) and reports its outputs through [`Effects`]. Handlers never
//! block; the blocking quorum loops are realized by the engines in
//! [`quorum`] together with a retransmission timer driven by the simulator.

pub mod a;
pub mod client;
pub mod d;
pub mod quorum;

use std::fmt;

use crate::types::{
    CrashVector, Incarnation, Message, ProcessId, ReadPayload, ReadReq, RequestId, Timestamp, Value, WriteReq,
};

pub use a::{ReplicaA, ReplicaStateA};
pub use client::{Client, ClientConfig, OpSpec, WriteMode};
pub use d::{ReplicaD, ReplicaStateD};
pub use quorum::{CcWriteQuorum, PlainWriteQuorum, ReadQuorum, ReadRule};

/// A message handed to a process, with the bookkeeping the simulator keeps
/// alongside it.
#[derive(Debug, Clone)]
pub struct Envelope {
    pub from: ProcessId,
    pub to: ProcessId,
    pub msg: Message,
    /// Causal hop count of this message.
    pub depth: u32,
    /// Global step at which the message was sent.
    pub sent_step: u64,
}

/// A message a handler wants sent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing {
    pub to: ProcessId,
    pub msg: Message,
    pub depth: u32,
}

/// Protocol-level observations recorded in the trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Note {
    ReadQuorumStarted {
        id: RequestId,
        req: ReadReq,
    },
    ReadQuorumDone {
        id: RequestId,
        req: ReadReq,
        replies: Vec<(ProcessId, ReadPayload)>,
    },
    WriteQuorumStarted {
        id: RequestId,
        req: WriteReq,
    },
    WriteQuorumDone {
        id: RequestId,
        req: WriteReq,
        /// Validated responders and the step at which each sent its ack.
        quorum: Vec<(ProcessId, u64)>,
        /// Step at which the last crash-vector read of this call started.
        cv_read_step: Option<u64>,
        rounds: u32,
    },
    AcksDiscarded {
        id: RequestId,
        replicas: Vec<ProcessId>,
    },
    TauSelected(Timestamp),
    OpDone {
        value: Option<Value>,
        returned: Vec<(Timestamp, Value)>,
        delays: u32,
    },
    RecoveryStarted,
    IncarnationChosen(Incarnation),
    Recovered,
}

/// Output sink for one handler execution.
#[derive(Debug, Default)]
pub struct Effects {
    pub now: u64,
    pub step: u64,
    pub sends: Vec<Outgoing>,
    pub notes: Vec<Note>,
}

impl Effects {
    pub fn new(now: u64, step: u64) -> Self {
        Effects {
            now,
            step,
            ..Default::default()
        }
    }

    pub fn send(&mut self, to: ProcessId, msg: Message, depth: u32) {
        self.sends.push(Outgoing { to, msg, depth });
    }

    pub fn note(&mut self, note: Note) {
        self.notes.push(note);
    }
}

/// Persisted replica state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Snapshot {
    Register(ReplicaStateA),
    CrashVector(ReplicaStateD),
}

impl fmt::Display for Snapshot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Snapshot::Register(s) => write!(f, "{s}"),
            Snapshot::CrashVector(s) => write!(f, "{s}"),
        }
    }
}

/// Behaviour shared by every replica automaton driven by the simulator.
pub trait Replica: Send {
    fn id(&self) -> ProcessId;

    fn on_message(&mut self, env: &Envelope, fx: &mut Effects);

    /// Retransmits whatever quorum call is pending.
    fn on_timer(&mut self, fx: &mut Effects);

    /// Installs the restored persistent state (`None` means the initial
    /// state) and runs the restart handler.
    fn on_restart(&mut self, restored: Option<Snapshot>, fx: &mut Effects);

    /// The state that a commit would persist.
    fn snapshot(&self) -> Snapshot;

    /// Up and not inside a restart handler.
    fn is_active(&self) -> bool;

    /// Whether a quorum call is waiting for replies.
    fn has_pending(&self) -> bool;

    fn describe(&self) -> String {
        self.snapshot().to_string()
    }
}

/// Replica ids `1..=n`.
pub fn replica_ids(n: u32) -> Vec<ProcessId> {
    (1..=n).collect()
}

pub(crate) fn max_pair<I>(pairs: I) -> (Timestamp, Value)
where
    I: IntoIterator<Item = (Timestamp, Value)>,
{
    pairs
        .into_iter()
        .max_by_key(|(ts, _)| *ts)
        .unwrap_or((Timestamp::INITIAL, Value::INITIAL))
}

pub(crate) fn cv_from_payload(p: &ReadPayload) -> Option<&CrashVector> {
    match p {
        ReadPayload::Cv(cv) => Some(cv),
        _ => None,
    }
}
