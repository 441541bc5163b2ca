//! Seeded experiments: one configuration family, instantiated per seed,
//! run, and judged by every applicable checker.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::checker::{
    check_crash_consistency, check_history, check_incarnation_monotonicity, check_real_time_property,
    check_recovery_termination, CheckError, HistoryVerdict,
};
use crate::config::Params;
use crate::sim::trace::{OpKind, TraceEvent};
use crate::sim::{
    assumption1_holds, check_fault_bounds, generate_faults, random_workload, run, FaultModel, NetworkPolicy,
    ProtocolKind, RandomNetwork, RandomWorkload, RunResult, Schedule, SimConfig, SimError, TraceLevel, Workload,
};
use crate::types::ProcessId;

#[derive(Debug, Clone)]
pub enum WorkloadSource {
    Fixed(Workload),
    Random(RandomWorkload),
}

#[derive(Debug, Clone)]
pub enum ScheduleSource {
    Fixed(Schedule),
    Random { network: RandomNetwork, faults: FaultModel },
}

/// A run configuration whose random parts are drawn from the seed.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub protocol: ProtocolKind,
    pub params: Params,
    pub clients: u32,
    pub workload: WorkloadSource,
    pub schedule: ScheduleSource,
    pub step_budget: u64,
    pub trace_level: TraceLevel,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("seed {seed}: {source}")]
    Check { seed: u64, source: CheckError },
}

impl Experiment {
    pub fn client_ids(&self) -> Vec<ProcessId> {
        let n = self.params.n;
        (n + 1..=n + self.clients).collect()
    }

    /// The concrete simulator configuration for `seed`.
    pub fn instantiate(&self, seed: u64) -> SimConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let workload = match &self.workload {
            WorkloadSource::Fixed(w) => w.clone(),
            WorkloadSource::Random(shape) => random_workload(&self.client_ids(), shape, &mut rng),
        };
        let workload = match self.protocol {
            ProtocolKind::Ams { .. } => workload.into_storage(),
            _ => workload,
        };
        let schedule = match &self.schedule {
            ScheduleSource::Fixed(s) => s.clone(),
            ScheduleSource::Random { network, faults } => {
                let g = generate_faults(faults, self.params.n, &mut rng);
                let processes: Vec<ProcessId> = (1..=self.params.n + self.clients).collect();
                let cuts = network.draw_partitions(&processes, &mut rng);
                Schedule {
                    faults: g.events,
                    network: NetworkPolicy::Random {
                        net: network.clone(),
                        cuts,
                    },
                    guard: g.guard,
                    threshold_time: g.threshold_time,
                }
            }
        };
        SimConfig {
            protocol: self.protocol,
            params: self.params,
            clients: self.clients,
            workload,
            schedule,
            seed,
            step_budget: self.step_budget,
            trace_level: self.trace_level,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SeedVerdict {
    Pass,
    /// Some safety check failed; one message per failure.
    Violation(Vec<String>),
    /// The run ran out of steps with work outstanding.
    Stall(String),
}

#[derive(Debug, Clone)]
pub struct SeedReport {
    pub seed: u64,
    pub verdict: SeedVerdict,
    pub history: HistoryVerdict,
    pub max_read_delays: Option<u32>,
    pub max_write_delays: Option<u32>,
    pub steps: u64,
}

/// Applies every check that fits the protocol and schedule to one run.
pub fn judge(exp: &Experiment, cfg: &SimConfig, result: &RunResult) -> Result<SeedReport, CheckError> {
    let history = check_history(&result.history)?;
    let records = &result.trace.records;
    let mut failures = Vec::new();
    if let crate::checker::BlackboxVerdict::Violation(c) = &history.blackbox {
        failures.push(format!(
            "history is not linearizable (longest legal prefix {:?})",
            c.longest_prefix
        ));
    }
    let mut monitors = vec![check_real_time_property(records)];
    if exp.protocol == ProtocolKind::D {
        monitors.push(check_incarnation_monotonicity(records));
        monitors.push(check_crash_consistency(records));
    }
    for m in monitors {
        failures.extend(m.violations.iter().map(|v| format!("{}: {v}", m.name)));
    }
    if let ScheduleSource::Random { faults, .. } = &exp.schedule {
        match faults {
            FaultModel::Static { .. } => {
                if let Err(e) = check_fault_bounds(records, &exp.params, cfg.schedule.threshold_time) {
                    failures.push(format!("schedule outside the fault model: {e}"));
                }
            }
            FaultModel::Eventual { k, .. } => {
                let a = assumption1_holds(records, exp.params.n, *k);
                if !a.holds {
                    failures.push(format!("availability assumption broken at t={:?}", a.violations));
                }
            }
            FaultModel::None => {}
        }
    }

    let mut max_read = None;
    let mut max_write = None;
    for r in records {
        if let TraceEvent::Respond { op, delays, .. } = r.event {
            let slot = match result.history.ops[op].kind {
                OpKind::Read => &mut max_read,
                OpKind::Write => &mut max_write,
            };
            *slot = Some(slot.map_or(delays, |m: u32| m.max(delays)));
        }
    }

    let verdict = if !failures.is_empty() {
        SeedVerdict::Violation(failures)
    } else if result.outcome.is_stalled() {
        let rec = check_recovery_termination(records);
        SeedVerdict::Stall(format!("{:?}; {}", result.outcome, rec.violations.join("; ")))
    } else {
        SeedVerdict::Pass
    };
    Ok(SeedReport {
        seed: cfg.seed,
        verdict,
        history,
        max_read_delays: max_read,
        max_write_delays: max_write,
        steps: result.steps,
    })
}

/// Instantiates, runs and judges one seed.
pub fn run_seed(exp: &Experiment, seed: u64) -> Result<(SeedReport, RunResult), ExperimentError> {
    let cfg = exp.instantiate(seed);
    let result = run(&cfg)?;
    let report = judge(exp, &cfg, &result).map_err(|source| ExperimentError::Check { seed, source })?;
    Ok((report, result))
}

#[derive(Debug, Clone, Default)]
pub struct SweepSummary {
    /// One report per seed, in seed order.
    pub reports: Vec<SeedReport>,
    pub passes: usize,
    pub violations: usize,
    pub stalls: usize,
    pub max_read_delays: Option<u32>,
    pub max_write_delays: Option<u32>,
}

impl SweepSummary {
    pub fn violating_seeds(&self) -> Vec<u64> {
        self.reports
            .iter()
            .filter(|r| matches!(r.verdict, SeedVerdict::Violation(_)))
            .map(|r| r.seed)
            .collect()
    }

    pub fn stalled_seeds(&self) -> Vec<u64> {
        self.reports
            .iter()
            .filter(|r| matches!(r.verdict, SeedVerdict::Stall(_)))
            .map(|r| r.seed)
            .collect()
    }
}

/// Runs every seed in `seeds` in parallel; results come back in seed order.
pub fn sweep(exp: &Experiment, seeds: Range<u64>) -> Result<SweepSummary, ExperimentError> {
    let reports = seeds
        .into_par_iter()
        .map(|seed| run_seed(exp, seed).map(|(r, _)| r))
        .collect::<Result<Vec<_>, _>>()?;
    let mut s = SweepSummary::default();
    for r in &reports {
        match r.verdict {
            SeedVerdict::Pass => s.passes += 1,
            SeedVerdict::Violation(_) => s.violations += 1,
            SeedVerdict::Stall(_) => s.stalls += 1,
        }
        s.max_read_delays = s.max_read_delays.max(r.max_read_delays);
        s.max_write_delays = s.max_write_delays.max(r.max_write_delays);
    }
    s.reports = reports;
    Ok(s)
}

/// Ready-made experiment families.
pub mod families {
    use super::*;
    use crate::config::{quorum_plan, resolve, RawParams, Threshold};
    use crate::sim::DEFAULT_STEP_BUDGET;

    fn params(n: u32, k: u32, r: u32, b: u32) -> Params {
        resolve(RawParams {
            n,
            k,
            r: Threshold::Known(r),
            b: Threshold::Known(b),
        })
        .expect("family parameters are valid")
    }

    fn experiment(protocol: ProtocolKind, params: Params, schedule: ScheduleSource, ops: usize) -> Experiment {
        Experiment {
            protocol,
            params,
            clients: 3,
            workload: WorkloadSource::Random(RandomWorkload {
                ops,
                ..RandomWorkload::default()
            }),
            schedule,
            step_budget: DEFAULT_STEP_BUDGET,
            trace_level: TraceLevel::Summary,
        }
    }

    /// Which register variant a failure-free run exercises.
    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum Variant {
        /// Timestamp register with equal read and write quorums.
        A1,
        /// Timestamp register with stale flags and small read quorums.
        A2,
        D,
    }

    /// No faults and no loss, random delays; `n` odd.
    pub fn failure_free(variant: Variant, n: u32, ops: usize) -> Experiment {
        let k = (n - 1) / 2;
        let (protocol, p) = match variant {
            Variant::A1 => (ProtocolKind::A, params(n, k, 0, 1)),
            Variant::A2 => (ProtocolKind::A, params(n, k, 0, 0)),
            Variant::D => (ProtocolKind::D, params(n, k, 0, 0)),
        };
        let schedule = ScheduleSource::Random {
            network: RandomNetwork::default(),
            faults: FaultModel::None,
        };
        experiment(protocol, p, schedule, ops)
    }

    /// Timestamp register at `n = 2k + r + 1` with `b = r + 1`, so equal
    /// quorums and every replica persisting; crashes and rollbacks within
    /// the thresholds during a lossy prefix.
    pub fn a1_in_model(k: u32, r: u32) -> Experiment {
        let p = params(2 * k + r + 1, k, r, r + 1);
        let plan = quorum_plan(&p);
        assert!(plan.p_holds);
        let schedule = ScheduleSource::Random {
            network: RandomNetwork {
                drop_prob: 0.1,
                horizon: 60,
                ..RandomNetwork::default()
            },
            faults: FaultModel::Static {
                k,
                r,
                b: r + 1,
                persisted: plan.nonvolatile,
                window: 60,
                max_downtime: 12,
            },
        };
        experiment(ProtocolKind::A, p, schedule, 10)
    }

    /// Timestamp register at `n = 2k + b + 1` with stale flags; crashes
    /// within the thresholds during a lossy prefix.
    pub fn a2_in_model(k: u32, b: u32) -> Experiment {
        let p = params(2 * k + b + 1, k, k, b);
        let plan = quorum_plan(&p);
        assert!(!plan.p_holds);
        let schedule = ScheduleSource::Random {
            network: RandomNetwork {
                drop_prob: 0.1,
                horizon: 60,
                ..RandomNetwork::default()
            },
            faults: FaultModel::Static {
                k,
                r: 0,
                b,
                persisted: plan.nonvolatile,
                window: 60,
                max_downtime: 12,
            },
        };
        experiment(ProtocolKind::A, p, schedule, 10)
    }

    /// Crash-vector register at `n = 2k + b + 1`: arbitrary crashes and
    /// rollbacks until the threshold time, at most `k` permanent crashes,
    /// and the availability guard throughout.
    pub fn d_eventual(k: u32, b: u32) -> Experiment {
        let p = params(2 * k + b + 1, k, k, b);
        let schedule = ScheduleSource::Random {
            network: RandomNetwork {
                drop_prob: 0.1,
                horizon: 80,
                ..RandomNetwork::default()
            },
            faults: FaultModel::Eventual { k, threshold_time: 60 },
        };
        experiment(ProtocolKind::D, p, schedule, 10)
    }

    /// Naive-recovery register with amnesic restarts during a lossy,
    /// partition-prone prefix; two clients issue 12 operations.
    pub fn naive_with_restarts() -> Experiment {
        let p = params(3, 1, 0, 1);
        let schedule = ScheduleSource::Random {
            network: RandomNetwork {
                drop_prob: 0.4,
                horizon: 80,
                partitions: 6,
                max_partition: 25,
                ..RandomNetwork::default()
            },
            faults: FaultModel::Static {
                k: 1,
                r: 0,
                b: 1,
                persisted: Default::default(),
                window: 60,
                max_downtime: 2,
            },
        };
        let mut e = experiment(ProtocolKind::NaiveRecovery, p, schedule, 12);
        e.clients = 2;
        e
    }
}
