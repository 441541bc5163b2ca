//! Operation histories: one record per invoked client operation.
//!
//! Line format:
//! `op=<read|write> client=<id> inv=<t> resp=<t|-> val=<token> tau=<(c,j)|(inf,j)|->`

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::sim::trace::OpKind;
use crate::types::{ParseError, ProcessId, Timestamp, Value};

/// Internal timestamp of an operation: the one it selected, or an infinite
/// one tagged with the client id when it never got that far.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tau {
    Finite(Timestamp),
    Infinite(ProcessId),
}

impl Ord for Tau {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Tau::Finite(a), Tau::Finite(b)) => a.cmp(b),
            (Tau::Finite(_), Tau::Infinite(_)) => Ordering::Less,
            (Tau::Infinite(_), Tau::Finite(_)) => Ordering::Greater,
            (Tau::Infinite(a), Tau::Infinite(b)) => a.cmp(b),
        }
    }
}

impl PartialOrd for Tau {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Tau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tau::Finite(ts) => write!(f, "{ts}"),
            Tau::Infinite(j) => write!(f, "(inf,{j})"),
        }
    }
}

impl FromStr for Tau {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if let Some(j) = t.strip_prefix("(inf,").and_then(|r| r.strip_suffix(')')) {
            return j.parse().map(Tau::Infinite).map_err(|_| ParseError::new("tau", s));
        }
        t.parse().map(Tau::Finite)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryRecord {
    pub client: ProcessId,
    pub kind: OpKind,
    /// Written value for writes; returned value for complete reads.
    pub value: Option<Value>,
    pub invoke: u64,
    pub respond: Option<u64>,
    pub tau: Option<Tau>,
}

impl HistoryRecord {
    pub fn is_complete(&self) -> bool {
        self.respond.is_some()
    }

    pub fn is_write(&self) -> bool {
        self.kind == OpKind::Write
    }

    pub fn is_read(&self) -> bool {
        self.kind == OpKind::Read
    }

    /// Real-time precedence: `self` responded strictly before `other` was invoked.
    pub fn precedes(&self, other: &HistoryRecord) -> bool {
        matches!(self.respond, Some(r) if r < other.invoke)
    }
}

impl fmt::Display for HistoryRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "op={} client={} inv={} resp=", self.kind, self.client, self.invoke)?;
        match self.respond {
            Some(r) => write!(f, "{r}")?,
            None => f.write_str("-")?,
        }
        f.write_str(" val=")?;
        match self.value {
            Some(v) => write!(f, "{v}")?,
            None => f.write_str("-")?,
        }
        f.write_str(" tau=")?;
        match self.tau {
            Some(t) => write!(f, "{t}"),
            None => f.write_str("-"),
        }
    }
}

impl FromStr for HistoryRecord {
    type Err = ParseError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let bad = || ParseError::new("history record", line);
        let mut fields = [""; 6];
        let keys = ["op", "client", "inv", "resp", "val", "tau"];
        let mut parts = line.split_whitespace();
        for (slot, key) in fields.iter_mut().zip(keys) {
            let part = parts.next().ok_or_else(bad)?;
            *slot = part
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .ok_or_else(bad)?;
        }
        if parts.next().is_some() {
            return Err(bad());
        }
        fn opt(s: &str) -> Option<&str> {
            (s != "-").then_some(s)
        }
        let rec = HistoryRecord {
            kind: fields[0].parse()?,
            client: fields[1].parse().map_err(|_| bad())?,
            invoke: fields[2].parse().map_err(|_| bad())?,
            respond: opt(fields[3]).map(|r| r.parse().map_err(|_| bad())).transpose()?,
            value: opt(fields[4]).map(str::parse).transpose()?,
            tau: opt(fields[5]).map(str::parse).transpose()?,
        };
        if matches!(rec.respond, Some(r) if r < rec.invoke) {
            return Err(bad());
        }
        Ok(rec)
    }
}

/// Ordered list of operations; an op's id is its position.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct History {
    pub ops: Vec<HistoryRecord>,
}

impl History {
    pub fn new(ops: Vec<HistoryRecord>) -> Self {
        History { ops }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.ops {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<History, ParseError> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>, _>>()
            .map(History::new)
    }

    /// Whether every record carries a τ.
    pub fn has_tau(&self) -> bool {
        !self.ops.is_empty() && self.ops.iter().all(|r| r.tau.is_some())
    }

    pub fn incomplete(&self) -> Vec<usize> {
        self.ops
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.is_complete())
            .map(|(i, _)| i)
            .collect()
    }
}
