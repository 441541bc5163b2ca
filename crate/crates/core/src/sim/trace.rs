//! Line-oriented execution trace.
//!
//! One record per line: `t=<int> kind=<word> actor=<id> detail=<k=v,...>`.
//! Values may contain commas inside brackets or parentheses; the detail
//! splitter only breaks on top-level commas.

use std::fmt;
use std::str::FromStr;

use crate::types::{ParseError, ProcessId, ReadReq, RequestId, Timestamp, Value, WriteReq};

/// How much the simulator records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceLevel {
    /// Operations, faults, quorum-call boundaries and recovery milestones.
    #[default]
    Summary,
    /// Everything in `Summary` plus every send, delivery, drop, timer tick
    /// and replica state change.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Read,
    Write,
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OpKind::Read => "read",
            OpKind::Write => "write",
        })
    }
}

impl FromStr for OpKind {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "read" => Ok(OpKind::Read),
            "write" => Ok(OpKind::Write),
            _ => Err(ParseError::new("operation kind", s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    Invoke {
        op: usize,
        kind: OpKind,
        val: Option<Value>,
    },
    Tau {
        op: usize,
        ts: Timestamp,
    },
    Respond {
        op: usize,
        val: Option<Value>,
        delays: u32,
    },
    Send {
        mid: u64,
        to: ProcessId,
        depth: u32,
        msg: String,
    },
    Deliver {
        mid: u64,
        from: ProcessId,
    },
    Drop {
        mid: u64,
        from: ProcessId,
        reason: String,
    },
    Timer,
    Crash,
    CrashSkipped {
        reason: String,
    },
    Restart {
        /// Version restored from storage; `None` for the initial state of a
        /// replica without storage.
        version: Option<usize>,
        rolled_back: bool,
    },
    RqStart {
        id: RequestId,
        req: ReadReq,
    },
    RqDone {
        id: RequestId,
        req: ReadReq,
        from: Vec<ProcessId>,
        tss: Vec<Timestamp>,
        vals: Vec<Value>,
    },
    WqStart {
        id: RequestId,
        req: WriteReq,
    },
    WqDone {
        id: RequestId,
        req: WriteReq,
        quorum: Vec<(ProcessId, u64)>,
        cv_read: Option<u64>,
        rounds: u32,
    },
    AcksDiscarded {
        id: RequestId,
        replicas: Vec<ProcessId>,
    },
    RecoveryStart,
    IncChosen {
        inc: u64,
    },
    Recovered,
    State {
        state: String,
    },
    End {
        outcome: String,
        pending_ops: Vec<usize>,
        pending_recoveries: Vec<ProcessId>,
    },
}

impl TraceEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            TraceEvent::Invoke { .. } => "invoke",
            TraceEvent::Tau { .. } => "tau",
            TraceEvent::Respond { .. } => "respond",
            TraceEvent::Send { .. } => "send",
            TraceEvent::Deliver { .. } => "deliver",
            TraceEvent::Drop { .. } => "drop",
            TraceEvent::Timer => "timer",
            TraceEvent::Crash => "crash",
            TraceEvent::CrashSkipped { .. } => "crash_skipped",
            TraceEvent::Restart { .. } => "restart",
            TraceEvent::RqStart { .. } => "rq_start",
            TraceEvent::RqDone { .. } => "rq_done",
            TraceEvent::WqStart { .. } => "wq_start",
            TraceEvent::WqDone { .. } => "wq_done",
            TraceEvent::AcksDiscarded { .. } => "acks_discarded",
            TraceEvent::RecoveryStart => "recovery_start",
            TraceEvent::IncChosen { .. } => "inc_chosen",
            TraceEvent::Recovered => "recovered",
            TraceEvent::State { .. } => "state",
            TraceEvent::End { .. } => "end",
        }
    }

    /// Whether the record is kept at [`TraceLevel::Summary`].
    pub fn in_summary(&self) -> bool {
        !matches!(
            self,
            TraceEvent::Send { .. }
                | TraceEvent::Deliver { .. }
                | TraceEvent::Drop { .. }
                | TraceEvent::Timer
                | TraceEvent::State { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub t: u64,
    pub step: u64,
    pub actor: ProcessId,
    pub event: TraceEvent,
}

fn list<T: fmt::Display>(items: &[T]) -> String {
    let inner: Vec<String> = items.iter().map(ToString::to_string).collect();
    format!("[{}]", inner.join(","))
}

fn opt<T: fmt::Display>(x: &Option<T>) -> String {
    x.as_ref().map_or_else(|| "-".to_string(), ToString::to_string)
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t={} kind={} actor={} detail=step={}",
            self.t,
            self.event.kind(),
            self.actor,
            self.step
        )?;
        match &self.event {
            TraceEvent::Invoke { op, kind, val } => {
                write!(f, ",op={op},type={kind},val={}", opt(val))
            }
            TraceEvent::Tau { op, ts } => write!(f, ",op={op},ts={ts}"),
            TraceEvent::Respond { op, val, delays } => {
                write!(f, ",op={op},val={},delays={delays}", opt(val))
            }
            TraceEvent::Send { mid, to, depth, msg } => {
                write!(f, ",mid={mid},to={to},depth={depth},msg={msg}")
            }
            TraceEvent::Deliver { mid, from } => write!(f, ",mid={mid},from={from}"),
            TraceEvent::Drop { mid, from, reason } => {
                write!(f, ",mid={mid},from={from},reason={reason}")
            }
            TraceEvent::Timer | TraceEvent::Crash | TraceEvent::RecoveryStart | TraceEvent::Recovered => Ok(()),
            TraceEvent::CrashSkipped { reason } => write!(f, ",reason={reason}"),
            TraceEvent::Restart { version, rolled_back } => write!(
                f,
                ",version={},rollback={rolled_back}",
                version.map_or_else(|| "initial".to_string(), |v| v.to_string())
            ),
            TraceEvent::RqStart { id, req } => write!(f, ",id={id},req={req}"),
            TraceEvent::RqDone {
                id,
                req,
                from,
                tss,
                vals,
            } => write!(
                f,
                ",id={id},req={req},from={},tss={},vals={}",
                list(from),
                list(tss),
                list(vals)
            ),
            TraceEvent::WqStart { id, req } => write!(f, ",id={id},req={req}"),
            TraceEvent::WqDone {
                id,
                req,
                quorum,
                cv_read,
                rounds,
            } => {
                let q: Vec<String> = quorum.iter().map(|(j, s)| format!("{j}@{s}")).collect();
                write!(
                    f,
                    ",id={id},req={req},quorum={},cv_read={},rounds={rounds}",
                    list(&q),
                    opt(cv_read)
                )
            }
            TraceEvent::AcksDiscarded { id, replicas } => {
                write!(f, ",id={id},replicas={}", list(replicas))
            }
            TraceEvent::IncChosen { inc } => write!(f, ",inc={inc}"),
            TraceEvent::State { state } => write!(f, ",state={state}"),
            TraceEvent::End {
                outcome,
                pending_ops,
                pending_recoveries,
            } => write!(
                f,
                ",outcome={outcome},pending_ops={},pending_recoveries={}",
                list(pending_ops),
                list(pending_recoveries)
            ),
        }
    }
}

/// Splits `s` on commas that are not nested inside brackets or parentheses.
pub fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if start < s.len() {
        parts.push(&s[start..]);
    }
    parts
}

struct Fields<'a> {
    line: &'a str,
    pairs: Vec<(&'a str, &'a str)>,
}

impl<'a> Fields<'a> {
    fn get(&self, key: &str) -> Result<&'a str, ParseError> {
        self.pairs
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| ParseError::new("trace field", &format!("{key} in {}", self.line)))
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T, ParseError> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| ParseError::new("trace field", &format!("{key}={raw}")))
    }

    fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, ParseError> {
        match self.get(key)? {
            "-" => Ok(None),
            _ => self.parse(key).map(Some),
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, ParseError> {
        let raw = self.get(key)?;
        let inner = raw
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix(']'))
            .ok_or_else(|| ParseError::new("trace list", raw))?;
        split_top_level(inner)
            .into_iter()
            .map(|x| x.parse().map_err(|_| ParseError::new("trace list item", x)))
            .collect()
    }
}

fn bad(line: &str) -> ParseError {
    ParseError::new("trace record", line)
}

impl FromStr for TraceRecord {
    type Err = ParseError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let rest = line.trim();
        let (t, rest) = rest.split_once(' ').ok_or_else(|| bad(line))?;
        let (kind, rest) = rest.split_once(' ').ok_or_else(|| bad(line))?;
        let (actor, rest) = rest.split_once(' ').ok_or_else(|| bad(line))?;
        let t: u64 = t
            .strip_prefix("t=")
            .and_then(|x| x.parse().ok())
            .ok_or_else(|| bad(line))?;
        let kind = kind.strip_prefix("kind=").ok_or_else(|| bad(line))?;
        let actor: ProcessId = actor
            .strip_prefix("actor=")
            .and_then(|x| x.parse().ok())
            .ok_or_else(|| bad(line))?;
        let detail = rest.strip_prefix("detail=").ok_or_else(|| bad(line))?;
        let pairs = split_top_level(detail)
            .into_iter()
            .map(|kv| kv.split_once('=').ok_or_else(|| bad(line)))
            .collect::<Result<Vec<_>, _>>()?;
        let f = Fields { line, pairs };
        let step: u64 = f.parse("step")?;
        let event = match kind {
            "invoke" => TraceEvent::Invoke {
                op: f.parse("op")?,
                kind: f.parse("type")?,
                val: f.opt("val")?,
            },
            "tau" => TraceEvent::Tau {
                op: f.parse("op")?,
                ts: f.parse("ts")?,
            },
            "respond" => TraceEvent::Respond {
                op: f.parse("op")?,
                val: f.opt("val")?,
                delays: f.parse("delays")?,
            },
            "send" => TraceEvent::Send {
                mid: f.parse("mid")?,
                to: f.parse("to")?,
                depth: f.parse("depth")?,
                msg: f.get("msg")?.to_string(),
            },
            "deliver" => TraceEvent::Deliver {
                mid: f.parse("mid")?,
                from: f.parse("from")?,
            },
            "drop" => TraceEvent::Drop {
                mid: f.parse("mid")?,
                from: f.parse("from")?,
                reason: f.get("reason")?.to_string(),
            },
            "timer" => TraceEvent::Timer,
            "crash" => TraceEvent::Crash,
            "crash_skipped" => TraceEvent::CrashSkipped {
                reason: f.get("reason")?.to_string(),
            },
            "restart" => TraceEvent::Restart {
                version: match f.get("version")? {
                    "initial" => None,
                    _ => Some(f.parse("version")?),
                },
                rolled_back: f.parse("rollback")?,
            },
            "rq_start" => TraceEvent::RqStart {
                id: f.parse("id")?,
                req: f.parse("req")?,
            },
            "rq_done" => TraceEvent::RqDone {
                id: f.parse("id")?,
                req: f.parse("req")?,
                from: f.list("from")?,
                tss: f.list("tss")?,
                vals: f.list("vals")?,
            },
            "wq_start" => TraceEvent::WqStart {
                id: f.parse("id")?,
                req: f.parse("req")?,
            },
            "wq_done" => {
                let raw: Vec<String> = f.list("quorum")?;
                let quorum = raw
                    .iter()
                    .map(|e| {
                        let (j, s) = e.split_once('@').ok_or_else(|| bad(line))?;
                        Ok((j.parse().map_err(|_| bad(line))?, s.parse().map_err(|_| bad(line))?))
                    })
                    .collect::<Result<Vec<_>, ParseError>>()?;
                TraceEvent::WqDone {
                    id: f.parse("id")?,
                    req: f.parse("req")?,
                    quorum,
                    cv_read: f.opt("cv_read")?,
                    rounds: f.parse("rounds")?,
                }
            }
            "acks_discarded" => TraceEvent::AcksDiscarded {
                id: f.parse("id")?,
                replicas: f.list("replicas")?,
            },
            "recovery_start" => TraceEvent::RecoveryStart,
            "inc_chosen" => TraceEvent::IncChosen { inc: f.parse("inc")? },
            "recovered" => TraceEvent::Recovered,
            "state" => TraceEvent::State {
                state: f.get("state")?.to_string(),
            },
            "end" => TraceEvent::End {
                outcome: f.get("outcome")?.to_string(),
                pending_ops: f.list("pending_ops")?,
                pending_recoveries: f.list("pending_recoveries")?,
            },
            _ => return Err(ParseError::new("trace kind", kind)),
        };
        Ok(TraceRecord { t, step, actor, event })
    }
}

/// Ordered trace of one run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Trace, ParseError> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>, _>>()
            .map(|records| Trace { records })
    }

    /// Message-delay count of every completed operation, keyed by op id.
    pub fn delay_accounting(&self) -> Vec<(usize, u32)> {
        self.records
            .iter()
            .filter_map(|r| match r.event {
                TraceEvent::Respond { op, delays, .. } => Some((op, delays)),
                _ => None,
            })
            .collect()
    }
}
