//! Linearizability verdicts over histories and property monitors over
//! traces.

pub mod blackbox;
pub mod history;
pub mod monitors;
pub mod whitebox;

use std::fmt;

use thiserror::Error;

use crate::types::Value;

pub use blackbox::{check_atomicity_blackbox, replay_linearization, BlackboxVerdict, ViolationCertificate, MAX_OPS};
pub use history::{History, HistoryRecord, Tau};
pub use monitors::{
    check_ams_property, check_crash_consistency, check_incarnation_monotonicity, check_liveness,
    check_real_time_property, check_recovery_termination, Liveness, MonitorReport,
};
pub use whitebox::{build_graph, check_atomicity_whitebox, DependencyGraph, WhiteboxVerdict};

/// Histories the checkers refuse to judge.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("complete op {0} has no tau")]
    MissingTau(usize),
    #[error("writes {0} and {1} share a tau")]
    DuplicateWriteTau(usize, usize),
    #[error("history has {0} ops, more than the limit of {1}")]
    TooManyOps(usize, usize),
    #[error("write value {0} is not unique")]
    DuplicateWriteValue(Value),
    #[error("op {0} has no value")]
    MissingValue(usize),
}

/// Combined verdict over one history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryVerdict {
    pub blackbox: BlackboxVerdict,
    /// Present when every op carries a tau.
    pub whitebox: Option<WhiteboxVerdict>,
}

impl HistoryVerdict {
    pub fn is_violation(&self) -> bool {
        !self.blackbox.is_linearizable()
    }
}

impl fmt::Display for HistoryVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.blackbox {
            BlackboxVerdict::Linearizable(order) => {
                let order: Vec<String> = order.iter().map(ToString::to_string).collect();
                write!(f, "verdict=linearizable detail=order=[{}]", order.join(","))?;
            }
            BlackboxVerdict::Violation(c) => {
                let prefix: Vec<String> = c.longest_prefix.iter().map(ToString::to_string).collect();
                write!(
                    f,
                    "verdict=violation detail=longest_prefix=[{}],states={}",
                    prefix.join(","),
                    c.states_explored
                )?;
            }
        }
        match &self.whitebox {
            Some(WhiteboxVerdict::Certified) => f.write_str(",whitebox=certified"),
            Some(WhiteboxVerdict::Inconclusive(_)) => f.write_str(",whitebox=inconclusive"),
            None => Ok(()),
        }
    }
}

/// Runs the blackbox search, and the dependency-graph check when every op
/// carries a tau.
pub fn check_history(history: &History) -> Result<HistoryVerdict, CheckError> {
    let blackbox = check_atomicity_blackbox(history)?;
    let whitebox = if history.has_tau() {
        Some(check_atomicity_whitebox(history)?)
    } else {
        None
    };
    Ok(HistoryVerdict { blackbox, whitebox })
}
