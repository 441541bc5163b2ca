//! Threshold arithmetic: effective thresholds, the predicate selecting the
//! non-volatile variant, quorum sizes and the storage assignment.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::ProcessId;

/// A threshold that may be left unspecified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Threshold {
    Known(u32),
    Unknown,
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Known(x) => write!(f, "{x}"),
            Threshold::Unknown => f.write_str("unknown"),
        }
    }
}

impl FromStr for Threshold {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "unknown" => Ok(Threshold::Unknown),
            t => t
                .parse()
                .map(Threshold::Known)
                .map_err(|_| ConfigError::BadThreshold(s.to_string())),
        }
    }
}

impl Serialize for Threshold {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Threshold::Known(x) => s.serialize_u32(*x),
            Threshold::Unknown => s.serialize_str("unknown"),
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(x) if x >= 0 && x <= u32::MAX as i64 => Ok(Threshold::Known(x as u32)),
            Raw::Int(x) => Err(serde::de::Error::custom(format!(
                "threshold must be a non-negative integer or \"unknown\", got {x}"
            ))),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("n must be at least 1")]
    NoReplicas,
    #[error("k={k} must be smaller than n={n}")]
    TooManyFaults { n: u32, k: u32 },
    #[error("r={r} exceeds k={k}")]
    RollbacksExceedFaults { r: u32, k: u32 },
    #[error("b={b} exceeds n={n}")]
    BenignExceedsReplicas { b: u32, n: u32 },
    #[error("threshold must be a non-negative integer or \"unknown\", got `{0}`")]
    BadThreshold(String),
}

/// Thresholds as supplied by the user.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawParams {
    pub n: u32,
    pub k: u32,
    pub r: Threshold,
    pub b: Threshold,
}

/// Thresholds after substituting defaults for unknown values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Params {
    pub n: u32,
    pub k: u32,
    pub r: Threshold,
    pub b: Threshold,
    pub r_eff: u32,
    pub b_eff: u32,
}

/// Substitutes `r_eff = k` and `b_eff = n` for unknown thresholds.
pub fn resolve(raw: RawParams) -> Result<Params, ConfigError> {
    let RawParams { n, k, r, b } = raw;
    if n == 0 {
        return Err(ConfigError::NoReplicas);
    }
    if k >= n {
        return Err(ConfigError::TooManyFaults { n, k });
    }
    let r_eff = match r {
        Threshold::Known(r) if r > k => return Err(ConfigError::RollbacksExceedFaults { r, k }),
        Threshold::Known(r) => r,
        Threshold::Unknown => k,
    };
    let b_eff = match b {
        Threshold::Known(b) if b > n => return Err(ConfigError::BenignExceedsReplicas { b, n }),
        Threshold::Known(b) => b,
        Threshold::Unknown => n,
    };
    Ok(Params {
        n,
        k,
        r,
        b,
        r_eff,
        b_eff,
    })
}

/// `2k + r + 1 <= n < 2k + b + 1`.
#[allow(clippy::int_plus_one)]
pub fn predicate_p(n: u32, k: u32, r: u32, b: u32) -> bool {
    let n = n as u64;
    let (k, r, b) = (k as u64, r as u64, b as u64);
    2 * k + r + 1 <= n && n < 2 * k + b + 1
}

/// Quorum sizes and storage assignment for one resolved configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuorumPlan {
    pub q_w: usize,
    pub q_r: usize,
    pub p_holds: bool,
    pub nonvolatile: BTreeSet<ProcessId>,
    /// Set when `n` is below the minimum for a wait-free implementation.
    pub below_bound: bool,
}

impl QuorumPlan {
    pub fn is_nonvolatile(&self, replica: ProcessId) -> bool {
        self.nonvolatile.contains(&replica)
    }
}

pub fn quorum_plan(params: &Params) -> QuorumPlan {
    let Params { n, k, r_eff, b_eff, .. } = *params;
    let p_holds = predicate_p(n, k, r_eff, b_eff);
    let q_w = (n - k) as usize;
    let (q_r, nonvolatile) = if p_holds {
        (q_w, (1..=2 * k + r_eff + 1).collect())
    } else {
        ((k + 1) as usize, BTreeSet::new())
    };
    QuorumPlan {
        q_w,
        q_r,
        p_holds,
        nonvolatile,
        below_bound: n < resilience_bound(k, r_eff, b_eff),
    }
}

/// Smallest replica count admitting a wait-free atomic implementation.
pub fn resilience_bound(k: u32, r: u32, b: u32) -> u32 {
    2 * k + r.min(b) + 1
}

/// Smallest replica count for which the crash-vector protocol is live once
/// the threshold holds.
pub fn eventual_bound(k: u32, b: u32) -> u32 {
    2 * k + b + 1
}
