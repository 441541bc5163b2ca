//! Run configuration files.
//!
//! A configuration is a TOML document. Top-level keys pick the protocol and
//! thresholds; `[workload]` and `[schedule]` describe the operations and the
//! faults. See README.md for the full grammar.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crr_register::config::{eventual_bound, resolve, Params, RawParams, Threshold};
use crr_register::experiment::{Experiment, ScheduleSource, WorkloadSource};
use crr_register::protocol::OpSpec;
use crr_register::sim::{
    setup, FaultEvent, FaultModel, LinkRule, NetworkPolicy, PlannedOp, ProtocolKind, RandomNetwork, RandomWorkload,
    Rollback, Schedule, SimError, TraceLevel, Workload, DEFAULT_STEP_BUDGET,
};
use crr_register::types::{ProcessId, Value};

/// A configuration problem, tied to the offending field where possible.
#[derive(Debug)]
pub enum ConfigError {
    Read(PathBuf, std::io::Error),
    Syntax(PathBuf, toml::de::Error),
    Field { field: String, message: String },
}

impl ConfigError {
    fn field(field: impl Into<String>, message: impl fmt::Display) -> Self {
        ConfigError::Field {
            field: field.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Read(p, e) => write!(f, "cannot read {}: {e}", p.display()),
            ConfigError::Syntax(p, e) => {
                write!(f, "invalid configuration {}: {}", p.display(), e.to_string().trim_end())
            }
            ConfigError::Field { field, message } => write!(f, "invalid field `{field}`: {message}"),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum ProtocolName {
    A,
    D,
    #[serde(rename = "naive-recovery")]
    NaiveRecovery,
    #[serde(rename = "rr-baseline")]
    RrBaseline,
    #[serde(rename = "ams-baseline")]
    AmsBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceLevelName {
    #[default]
    Summary,
    Full,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RrSection {
    pub m_r: u32,
    pub f: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmsSection {
    pub a: u32,
    pub b: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpName {
    Read,
    Write,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpLine {
    pub client: ProcessId,
    pub op: OpName,
    pub value: Option<u64>,
    #[serde(default)]
    pub at: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorkloadSection {
    Random {
        #[serde(default = "default_ops")]
        ops: usize,
        #[serde(default = "default_write_ratio")]
        write_ratio: f64,
        #[serde(default = "default_gap")]
        max_gap: u64,
    },
    Script {
        #[serde(default)]
        ops: Vec<OpLine>,
    },
}

impl Default for WorkloadSection {
    fn default() -> Self {
        WorkloadSection::Random {
            ops: default_ops(),
            write_ratio: default_write_ratio(),
            max_gap: default_gap(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultsName {
    #[default]
    None,
    Static,
    Eventual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionName {
    Crash,
    Restart,
}

/// `rollback` of a restart: an older version index, `"none"` or `"random"`.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum RollbackSpec {
    Version(usize),
    Word(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub at: u64,
    pub replica: ProcessId,
    pub action: ActionName,
    pub rollback: Option<RollbackSpec>,
}

/// Contents of an external scripted-schedule file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptFile {
    #[serde(default)]
    pub rules: Vec<LinkRule>,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSection {
    Random {
        #[serde(default)]
        drop_prob: f64,
        #[serde(default = "one")]
        min_delay: u64,
        #[serde(default = "default_max_delay")]
        max_delay: u64,
        #[serde(default = "default_horizon")]
        horizon: u64,
        #[serde(default)]
        partitions: u32,
        #[serde(default)]
        max_partition: u64,
        #[serde(default)]
        faults: FaultsName,
        #[serde(default = "default_window")]
        window: u64,
        #[serde(default = "default_downtime")]
        max_downtime: u64,
        #[serde(default = "default_window")]
        threshold_time: u64,
    },
    Script {
        #[serde(default = "one")]
        delay: u64,
        #[serde(default)]
        threshold_time: u64,
        file: Option<PathBuf>,
        #[serde(default)]
        rules: Vec<LinkRule>,
        #[serde(default)]
        faults: Vec<FaultSpec>,
    },
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection::Random {
            drop_prob: 0.0,
            min_delay: 1,
            max_delay: default_max_delay(),
            horizon: default_horizon(),
            partitions: 0,
            max_partition: 0,
            faults: FaultsName::None,
            window: default_window(),
            max_downtime: default_downtime(),
            threshold_time: default_window(),
        }
    }
}

fn one() -> u64 {
    1
}
fn one_u32() -> u32 {
    1
}
fn default_ops() -> usize {
    8
}
fn default_write_ratio() -> f64 {
    0.5
}
fn default_gap() -> u64 {
    6
}
fn default_max_delay() -> u64 {
    3
}
fn default_horizon() -> u64 {
    5000
}
fn default_window() -> u64 {
    60
}
fn default_downtime() -> u64 {
    12
}
fn default_budget() -> u64 {
    DEFAULT_STEP_BUDGET
}
fn zero() -> Threshold {
    Threshold::Known(0)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub protocol: ProtocolName,
    pub n: u32,
    pub k: u32,
    #[serde(default = "zero")]
    pub r: Threshold,
    #[serde(default = "zero")]
    pub b: Threshold,
    #[serde(default = "one_u32")]
    pub clients: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub step_budget: u64,
    #[serde(default)]
    pub trace_level: TraceLevelName,
    pub rr: Option<RrSection>,
    pub ams: Option<AmsSection>,
    #[serde(default)]
    pub workload: WorkloadSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    /// Directory that relative paths inside the file resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read(path.to_path_buf(), e))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Syntax(path.to_path_buf(), e))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn params(&self) -> Result<Params, ConfigError> {
        let p = resolve(RawParams {
            n: self.n,
            k: self.k,
            r: self.r,
            b: self.b,
        });
        p.map_err(|e| {
            use crr_register::config::ConfigError as E;
            let field = match e {
                E::NoReplicas => "n",
                E::TooManyFaults { .. } => "k",
                E::RollbacksExceedFaults { .. } => "r",
                E::BenignExceedsReplicas { .. } => "b",
                E::BadThreshold(_) => "r",
            };
            ConfigError::field(field, e)
        })
    }

    pub fn protocol(&self) -> Result<ProtocolKind, ConfigError> {
        Ok(match self.protocol {
            ProtocolName::A => ProtocolKind::A,
            ProtocolName::D => ProtocolKind::D,
            ProtocolName::NaiveRecovery => ProtocolKind::NaiveRecovery,
            ProtocolName::RrBaseline => {
                let rr = self
                    .rr
                    .as_ref()
                    .ok_or_else(|| ConfigError::field("rr", "rr-baseline needs an [rr] section"))?;
                ProtocolKind::Rr { m_r: rr.m_r, f: rr.f }
            }
            ProtocolName::AmsBaseline => {
                let ams = self
                    .ams
                    .as_ref()
                    .ok_or_else(|| ConfigError::field("ams", "ams-baseline needs an [ams] section"))?;
                ProtocolKind::Ams { a: ams.a, b: ams.b }
            }
        })
    }

    /// Advisory messages about a valid configuration.
    pub fn warnings(&self, params: &Params) -> Vec<String> {
        let mut out = Vec::new();
        let bound = eventual_bound(params.k, params.b_eff);
        if self.protocol == ProtocolName::D && params.n < bound {
            out.push(format!(
                "n={} is below 2k+b+1={bound}; the crash-vector register may lose liveness",
                params.n
            ));
        }
        out
    }

    /// Validates the whole file and builds the experiment it describes.
    pub fn experiment(&self) -> Result<Experiment, ConfigError> {
        let params = self.params()?;
        let protocol = self.protocol()?;
        let persisted = setup(protocol, &params)
            .map_err(|e| {
                let field = match (&e, self.protocol) {
                    (SimError::BaselineParams(_), ProtocolName::RrBaseline) => "rr",
                    (SimError::BaselineParams(_), _) => "ams",
                    _ => "n",
                };
                ConfigError::field(field, e)
            })?
            .persisted;
        if self.clients == 0 {
            return Err(ConfigError::field("clients", "at least one client is needed"));
        }
        let clients: Vec<ProcessId> = (self.n + 1..=self.n + self.clients).collect();
        Ok(Experiment {
            protocol,
            params,
            clients: self.clients,
            workload: self.workload(&clients)?,
            schedule: self.schedule(&params, persisted)?,
            step_budget: self.step_budget,
            trace_level: match self.trace_level {
                TraceLevelName::Summary => TraceLevel::Summary,
                TraceLevelName::Full => TraceLevel::Full,
            },
        })
    }

    fn workload(&self, clients: &[ProcessId]) -> Result<WorkloadSource, ConfigError> {
        match &self.workload {
            WorkloadSection::Random {
                ops,
                write_ratio,
                max_gap,
            } => {
                if !(0.0..=1.0).contains(write_ratio) {
                    return Err(ConfigError::field("workload.write_ratio", "must lie in [0, 1]"));
                }
                Ok(WorkloadSource::Random(RandomWorkload {
                    ops: *ops,
                    write_ratio: *write_ratio,
                    max_gap: *max_gap,
                }))
            }
            WorkloadSection::Script { ops } => {
                let mut seen = BTreeSet::new();
                let mut planned = Vec::with_capacity(ops.len());
                for (i, line) in ops.iter().enumerate() {
                    if !clients.contains(&line.client) {
                        return Err(ConfigError::field(
                            format!("workload.ops[{i}].client"),
                            format!(
                                "client {} does not exist; clients are {}..={}",
                                line.client,
                                clients[0],
                                clients[clients.len() - 1]
                            ),
                        ));
                    }
                    let op = match (line.op, line.value) {
                        (OpName::Read, None) => OpSpec::Read,
                        (OpName::Read, Some(_)) => {
                            return Err(ConfigError::field(
                                format!("workload.ops[{i}].value"),
                                "reads take no value",
                            ))
                        }
                        (OpName::Write, None) => {
                            return Err(ConfigError::field(
                                format!("workload.ops[{i}].value"),
                                "writes need a value",
                            ))
                        }
                        (OpName::Write, Some(v)) => {
                            if v == 0 || !seen.insert(v) {
                                return Err(ConfigError::field(
                                    format!("workload.ops[{i}].value"),
                                    format!("written values must be distinct and non-zero, got {v}"),
                                ));
                            }
                            OpSpec::Write(Value(v))
                        }
                    };
                    planned.push(PlannedOp {
                        client: line.client,
                        op,
                        at: line.at,
                    });
                }
                Ok(WorkloadSource::Fixed(Workload::new(planned)))
            }
        }
    }

    fn schedule(&self, params: &Params, persisted: BTreeSet<ProcessId>) -> Result<ScheduleSource, ConfigError> {
        match &self.schedule {
            ScheduleSection::Random {
                drop_prob,
                min_delay,
                max_delay,
                horizon,
                partitions,
                max_partition,
                faults,
                window,
                max_downtime,
                threshold_time,
            } => {
                if !(0.0..=1.0).contains(drop_prob) {
                    return Err(ConfigError::field("schedule.drop_prob", "must lie in [0, 1]"));
                }
                if *min_delay == 0 || max_delay < min_delay {
                    return Err(ConfigError::field(
                        "schedule.max_delay",
                        "delays need 1 <= min_delay <= max_delay",
                    ));
                }
                let faults = match faults {
                    FaultsName::None => FaultModel::None,
                    FaultsName::Static => FaultModel::Static {
                        k: params.k,
                        r: params.r_eff,
                        b: params.b_eff,
                        persisted,
                        window: *window,
                        max_downtime: *max_downtime,
                    },
                    FaultsName::Eventual => FaultModel::Eventual {
                        k: params.k,
                        threshold_time: *threshold_time,
                    },
                };
                Ok(ScheduleSource::Random {
                    network: RandomNetwork {
                        min_delay: *min_delay,
                        max_delay: *max_delay,
                        drop_prob: *drop_prob,
                        horizon: *horizon,
                        partitions: *partitions,
                        max_partition: *max_partition,
                    },
                    faults,
                })
            }
            ScheduleSection::Script {
                delay,
                threshold_time,
                file,
                rules,
                faults,
            } => {
                let mut rules = rules.clone();
                let mut specs = faults.clone();
                if let Some(file) = file {
                    let path = self.base_dir.join(file);
                    let text = fs::read_to_string(&path).map_err(|e| ConfigError::Read(path.clone(), e))?;
                    let extra: ScriptFile = toml::from_str(&text).map_err(|e| ConfigError::Syntax(path, e))?;
                    rules.extend(extra.rules);
                    specs.extend(extra.faults);
                }
                let mut events = Vec::with_capacity(specs.len());
                for (i, f) in specs.iter().enumerate() {
                    if f.replica == 0 || f.replica > params.n {
                        return Err(ConfigError::field(
                            format!("schedule.faults[{i}].replica"),
                            format!("replica {} does not exist; replicas are 1..={}", f.replica, params.n),
                        ));
                    }
                    events.push(match f.action {
                        ActionName::Crash => FaultEvent::crash(f.at, f.replica),
                        ActionName::Restart => FaultEvent::restart(f.at, f.replica, rollback(i, f.rollback.as_ref())?),
                    });
                }
                events.sort_by_key(|e| (e.at, e.replica));
                Ok(ScheduleSource::Fixed(Schedule {
                    faults: events,
                    network: NetworkPolicy::Scripted { delay: *delay, rules },
                    guard: None,
                    threshold_time: *threshold_time,
                }))
            }
        }
    }
}

fn rollback(i: usize, spec: Option<&RollbackSpec>) -> Result<Rollback, ConfigError> {
    match spec {
        None => Ok(Rollback::None),
        Some(RollbackSpec::Version(v)) => Ok(Rollback::To(*v)),
        Some(RollbackSpec::Word(w)) => match w.as_str() {
            "none" => Ok(Rollback::None),
            "random" => Ok(Rollback::Random),
            other => Err(ConfigError::field(
                format!("schedule.faults[{i}].rollback"),
                format!("expected a version number, \"none\" or \"random\", got `{other}`"),
            )),
        },
    }
}
