//! Shared vocabulary: timestamps, values, request identifiers, request kinds
//! and wire messages.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Identifier of a simulated process. Replicas are `1..=n`, clients follow.
pub type ProcessId = u32;

/// Incarnation number of a replica.
pub type Incarnation = u64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot parse {what} from `{input}`")]
pub struct ParseError {
    pub what: &'static str,
    pub input: String,
}

impl ParseError {
    pub fn new(what: &'static str, input: &str) -> Self {
        ParseError {
            what,
            input: input.to_string(),
        }
    }
}

/// Register timestamp, ordered lexicographically on `(cnt, pid)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp {
    pub cnt: u64,
    pub pid: ProcessId,
}

impl Timestamp {
    pub const INITIAL: Timestamp = Timestamp { cnt: 0, pid: 0 };

    pub fn new(cnt: u64, pid: ProcessId) -> Self {
        Timestamp { cnt, pid }
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.cnt, self.pid)
    }
}

impl FromStr for Timestamp {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseError::new("timestamp", s);
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(err)?;
        let (c, j) = inner.split_once(',').ok_or_else(err)?;
        Ok(Timestamp {
            cnt: c.trim().parse().map_err(|_| err())?,
            pid: j.trim().parse().map_err(|_| err())?,
        })
    }
}

/// Lexicographic comparison of two timestamps.
pub fn ts_compare(a: Timestamp, b: Timestamp) -> Ordering {
    a.cnt.cmp(&b.cnt).then(a.pid.cmp(&b.pid))
}

/// Opaque register value. `Value(0)` is the initial value `v0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Value(pub u64);

impl Value {
    pub const INITIAL: Value = Value(0);
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl FromStr for Value {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        t.strip_prefix('v')
            .unwrap_or(t)
            .parse()
            .map(Value)
            .map_err(|_| ParseError::new("value", s))
    }
}

/// Globally unique identifier of one quorum call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RequestId {
    pub origin: ProcessId,
    pub seq: u64,
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.origin, self.seq)
    }
}

impl FromStr for RequestId {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseError::new("request id", s);
        let (o, q) = s.trim().split_once(':').ok_or_else(err)?;
        Ok(RequestId {
            origin: o.parse().map_err(|_| err())?,
            seq: q.parse().map_err(|_| err())?,
        })
    }
}

/// Per-process counter backing [`fresh_request_id`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdCounter {
    next: u64,
}

/// Returns `(origin, next unused seq)` and advances the counter.
pub fn fresh_request_id(origin: ProcessId, state: &mut IdCounter) -> RequestId {
    let id = RequestId {
        origin,
        seq: state.next,
    };
    state.next += 1;
    id
}

/// Crash vector: highest known incarnation of every replica, indexed by
/// replica id starting at 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CrashVector(Vec<Incarnation>);

impl CrashVector {
    pub fn zeros(n: usize) -> Self {
        CrashVector(vec![0; n])
    }

    pub fn from_vec(v: Vec<Incarnation>) -> Self {
        CrashVector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, replica: ProcessId) -> Incarnation {
        self.0[replica as usize - 1]
    }

    pub fn set(&mut self, replica: ProcessId, inc: Incarnation) {
        self.0[replica as usize - 1] = inc;
    }

    /// `self[replica] = max(self[replica], inc)`.
    pub fn raise(&mut self, replica: ProcessId, inc: Incarnation) {
        let slot = &mut self.0[replica as usize - 1];
        *slot = (*slot).max(inc);
    }

    /// Entrywise maximum with `other`.
    pub fn merge(&mut self, other: &CrashVector) {
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            *a = (*a).max(*b);
        }
    }

    pub fn as_slice(&self) -> &[Incarnation] {
        &self.0
    }

    /// True when every entry of `self` is at most the matching entry of `other`.
    pub fn dominated_by(&self, other: &CrashVector) -> bool {
        self.0.iter().zip(other.0.iter()).all(|(a, b)| a <= b)
    }
}

impl fmt::Display for CrashVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str("]")
    }
}

impl FromStr for CrashVector {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseError::new("crash vector", s);
        let inner = s
            .trim()
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix(']'))
            .ok_or_else(err)?;
        if inner.trim().is_empty() {
            return Ok(CrashVector(Vec::new()));
        }
        inner
            .split(',')
            .map(|x| x.trim().parse().map_err(|_| err()))
            .collect::<Result<Vec<_>, _>>()
            .map(CrashVector)
    }
}

/// Query kinds carried by READ messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReadReq {
    Ts,
    TsVal,
    PreCv(ProcessId),
    Cv,
    State(Incarnation),
}

impl ReadReq {
    /// Whether the answer carries a register timestamp.
    pub fn queries_timestamp(&self) -> bool {
        matches!(self, ReadReq::Ts | ReadReq::TsVal | ReadReq::State(_))
    }
}

impl fmt::Display for ReadReq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReadReq::Ts => f.write_str("TS"),
            ReadReq::TsVal => f.write_str("TSVal"),
            ReadReq::PreCv(j) => write!(f, "preCV({j})"),
            ReadReq::Cv => f.write_str("CV"),
            ReadReq::State(inc) => write!(f, "State({inc})"),
        }
    }
}

impl FromStr for ReadReq {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseError::new("read request", s);
        let t = s.trim();
        match t {
            "TS" => return Ok(ReadReq::Ts),
            "TSVal" => return Ok(ReadReq::TsVal),
            "CV" => return Ok(ReadReq::Cv),
            _ => {}
        }
        let arg = |prefix: &str| {
            t.strip_prefix(prefix)
                .and_then(|r| r.strip_suffix(')'))
                .map(str::to_string)
        };
        if let Some(a) = arg("preCV(") {
            return a.parse().map(ReadReq::PreCv).map_err(|_| err());
        }
        if let Some(a) = arg("State(") {
            return a.parse().map(ReadReq::State).map_err(|_| err());
        }
        Err(err())
    }
}

/// Payloads carried by WRITE messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WriteReq {
    TsVal(Timestamp, Value),
    PreCv(ProcessId, Incarnation),
    Cv(ProcessId, Incarnation),
}

impl WriteReq {
    pub fn is_tsval(&self) -> bool {
        matches!(self, WriteReq::TsVal(..))
    }
}

impl fmt::Display for WriteReq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WriteReq::TsVal(ts, v) => write!(f, "TSVal({ts},{v})"),
            WriteReq::PreCv(j, v) => write!(f, "preCV({j},{v})"),
            WriteReq::Cv(j, v) => write!(f, "CV({j},{v})"),
        }
    }
}

impl FromStr for WriteReq {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseError::new("write request", s);
        let t = s.trim();
        let body = |prefix: &str| t.strip_prefix(prefix).and_then(|r| r.strip_suffix(')'));
        let pair = |b: &str| -> Result<(u64, u64), ParseError> {
            let (a, c) = b.split_once(',').ok_or_else(err)?;
            Ok((
                a.trim().parse().map_err(|_| err())?,
                c.trim().parse().map_err(|_| err())?,
            ))
        };
        if let Some(b) = body("TSVal(") {
            let close = b.find(')').ok_or_else(err)?;
            let ts: Timestamp = b[..=close].parse()?;
            let v: Value = b[close + 1..].strip_prefix(',').ok_or_else(err)?.parse()?;
            return Ok(WriteReq::TsVal(ts, v));
        }
        if let Some(b) = body("preCV(") {
            let (j, v) = pair(b)?;
            return Ok(WriteReq::PreCv(j as ProcessId, v));
        }
        if let Some(b) = body("CV(") {
            let (j, v) = pair(b)?;
            return Ok(WriteReq::Cv(j as ProcessId, v));
        }
        Err(err())
    }
}

/// Full replica state returned for a `State(inc)` query.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateSnapshot {
    pub ts: Timestamp,
    pub val: Value,
    pub cv: CrashVector,
    pub pre_cv: CrashVector,
}

/// Payload of a READ_ACK.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ReadPayload {
    Ts(Timestamp),
    TsVal(Timestamp, Value),
    PreCv(Incarnation),
    Cv(CrashVector),
    State(StateSnapshot),
    /// Answer of a replica that tracks a suspicion flag after restarts.
    Flagged {
        ts: Timestamp,
        val: Value,
        suspicious: bool,
    },
}

impl ReadPayload {
    /// Register timestamp carried by the payload, if any.
    pub fn timestamp(&self) -> Option<Timestamp> {
        match self {
            ReadPayload::Ts(ts) | ReadPayload::TsVal(ts, _) => Some(*ts),
            ReadPayload::State(s) => Some(s.ts),
            ReadPayload::Flagged { ts, .. } => Some(*ts),
            _ => None,
        }
    }

    /// Register `(ts, val)` pair carried by the payload, if any.
    pub fn pair(&self) -> Option<(Timestamp, Value)> {
        match self {
            ReadPayload::TsVal(ts, v) => Some((*ts, *v)),
            ReadPayload::State(s) => Some((s.ts, s.val)),
            ReadPayload::Flagged { ts, val, .. } => Some((*ts, *val)),
            _ => None,
        }
    }
}

impl fmt::Display for ReadPayload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReadPayload::Ts(ts) => write!(f, "{ts}"),
            ReadPayload::TsVal(ts, v) => write!(f, "({ts},{v})"),
            ReadPayload::PreCv(inc) => write!(f, "{inc}"),
            ReadPayload::Cv(cv) => write!(f, "{cv}"),
            ReadPayload::State(s) => {
                write!(f, "({},{},cv={},pre_cv={})", s.ts, s.val, s.cv, s.pre_cv)
            }
            ReadPayload::Flagged { ts, val, suspicious } => write!(f, "({ts},{val},suspicious={suspicious})"),
        }
    }
}

/// Wire messages exchanged between clients and replicas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Read {
        id: RequestId,
        req: ReadReq,
    },
    ReadAck {
        id: RequestId,
        payload: ReadPayload,
        sender: ProcessId,
    },
    Write {
        id: RequestId,
        req: WriteReq,
        inc: Option<Incarnation>,
    },
    WriteAck {
        id: RequestId,
        inc: Option<Incarnation>,
        cv: Option<CrashVector>,
        sender: ProcessId,
    },
}

impl Message {
    pub fn id(&self) -> RequestId {
        match self {
            Message::Read { id, .. }
            | Message::ReadAck { id, .. }
            | Message::Write { id, .. }
            | Message::WriteAck { id, .. } => *id,
        }
    }

    /// Short kind tag used by scripted link rules.
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Read { .. } => MessageKind::Read,
            Message::ReadAck { .. } => MessageKind::ReadAck,
            Message::Write { .. } => MessageKind::Write,
            Message::WriteAck { .. } => MessageKind::WriteAck,
        }
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Message::Read { id, req } => write!(f, "READ({id};{req})"),
            Message::ReadAck { id, payload, sender } => write!(f, "READ_ACK({id};{payload};{sender})"),
            Message::Write { id, req, inc } => match inc {
                Some(inc) => write!(f, "WRITE({id};{req};{inc})"),
                None => write!(f, "WRITE({id};{req})"),
            },
            Message::WriteAck { id, inc, cv, sender } => {
                write!(f, "WRITE_ACK({id};")?;
                match inc {
                    Some(inc) => write!(f, "{inc};")?,
                    None => f.write_str("-;")?,
                }
                match cv {
                    Some(cv) => write!(f, "{cv};")?,
                    None => f.write_str("⊥;")?,
                }
                write!(f, "{sender})")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Read,
    ReadAck,
    Write,
    WriteAck,
}
