//! `crr-sim`: run, sweep and check executions of the rollback-resilient
//! registers.
//!
//! Exit codes: 0 when every check passes, 1 on a checked violation, 2 on a
//! usage, configuration or parse error.

mod runconfig;

use std::fs;
use std::io;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{debug, info};

use crr_register::checker::{
    check_history, check_incarnation_monotonicity, check_real_time_property, History, MonitorReport,
};
use crr_register::experiment::families::{failure_free, Variant};
use crr_register::experiment::{run_seed, sweep, Experiment, SeedVerdict};
use crr_register::scenarios::{run_scenario, run_script, script, SCENARIOS};
use crr_register::sim::{run, Trace, TraceEvent};

use runconfig::RunConfig;

#[derive(Parser)]
#[command(
    name = "crr-sim",
    version,
    about = "Simulate and check rollback-resilient quorum registers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write its trace and history.
    Run {
        config: PathBuf,
        /// Overrides the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long)]
        step_budget: Option<u64>,
    },
    /// Check a history file, and the trace monitors when a trace is given.
    Check { history: PathBuf, trace: Option<PathBuf> },
    /// Run and check every seed of a range.
    Sweep {
        config: PathBuf,
        /// Half-open range `a..b`.
        #[arg(long, value_parser = parse_range)]
        seeds: Range<u64>,
        #[arg(long)]
        step_budget: Option<u64>,
    },
    /// Replay a packaged scenario and write its trace, history and verdict.
    Scenario {
        /// Scenario name; omit with --list.
        name: Option<String>,
        #[arg(long)]
        list: bool,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long)]
        step_budget: Option<u64>,
    },
    /// Measure operation latency, in message delays, of failure-free runs.
    BenchLatency {
        /// Random workloads per variant and replica count.
        #[arg(long, default_value_t = 100)]
        workloads: u64,
        /// First seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_range(s: &str) -> Result<Range<u64>, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected a..b, got `{s}`"))?;
    let a: u64 = a.trim().parse().map_err(|e| format!("bad range start `{a}`: {e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("bad range end `{b}`: {e}"))?;
    if a >= b {
        return Err(format!("empty seed range {a}..{b}"));
    }
    Ok(a..b)
}

/// Exit statuses of the command line contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Pass,
    Violation,
    Error,
}

impl From<Status> for ExitCode {
    fn from(s: Status) -> ExitCode {
        ExitCode::from(match s {
            Status::Pass => 0,
            Status::Violation => 1,
            Status::Error => 2,
        })
    }
}

fn fail(message: impl std::fmt::Display) -> Status {
    eprintln!("error: {message}");
    Status::Error
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("CRR_LOG"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let status = match cli.command {
        Command::Run {
            config,
            seed,
            out_dir,
            step_budget,
        } => cmd_run(&config, seed, &out_dir, step_budget),
        Command::Check { history, trace } => cmd_check(&history, trace.as_deref()),
        Command::Sweep {
            config,
            seeds,
            step_budget,
        } => cmd_sweep(&config, seeds, step_budget),
        Command::Scenario {
            name,
            list,
            out_dir,
            step_budget,
        } => cmd_scenario(name.as_deref(), list, &out_dir, step_budget),
        Command::BenchLatency { workloads, seed } => cmd_bench_latency(workloads, seed),
    };
    status.into()
}

fn load(path: &Path, step_budget: Option<u64>) -> Result<(RunConfig, Experiment), Status> {
    let cfg = RunConfig::load(path).map_err(fail)?;
    let mut exp = cfg.experiment().map_err(fail)?;
    for w in cfg.warnings(&exp.params) {
        eprintln!("warning: {w}");
    }
    if let Some(b) = step_budget {
        exp.step_budget = b;
    }
    Ok((cfg, exp))
}

fn write_file(dir: &Path, name: &str, text: &str) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, text)?;
    Ok(path)
}

fn cmd_run(config: &Path, seed: Option<u64>, out_dir: &Path, step_budget: Option<u64>) -> Status {
    let (cfg, exp) = match load(config, step_budget) {
        Ok(x) => x,
        Err(s) => return s,
    };
    let seed = seed.unwrap_or(cfg.seed);
    let sim = exp.instantiate(seed);
    info!("running {} with n={} seed={seed}", exp.protocol.name(), exp.params.n);
    let result = match run(&sim) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let written = write_file(out_dir, "trace.txt", &result.trace.to_text())
        .and_then(|t| write_file(out_dir, "history.txt", &result.history.to_text()).map(|h| (t, h)));
    let (trace, history) = match written {
        Ok(x) => x,
        Err(e) => return fail(format!("cannot write output: {e}")),
    };
    let outcome = if result.outcome.is_stalled() {
        "stalled"
    } else {
        "completed"
    };
    println!(
        "outcome={outcome} steps={} end_time={} ops={}",
        result.steps,
        result.end_time,
        result.history.len()
    );
    println!("trace={}", trace.display());
    println!("history={}", history.display());
    Status::Pass
}

fn print_monitor(m: &MonitorReport) {
    let word = if m.passed() { "pass" } else { "fail" };
    println!("monitor={} result={word} violations={}", m.name, m.violations.len());
    for v in m.violations.iter().take(5) {
        println!("  {v}");
    }
}

fn cmd_check(history: &Path, trace: Option<&Path>) -> Status {
    let text = match fs::read_to_string(history) {
        Ok(t) => t,
        Err(e) => return fail(format!("cannot read {}: {e}", history.display())),
    };
    let h = match History::parse(&text) {
        Ok(h) => h,
        Err(e) => return fail(format!("{}: {e}", history.display())),
    };
    let monitors = match trace {
        None => Vec::new(),
        Some(p) => {
            let text = match fs::read_to_string(p) {
                Ok(t) => t,
                Err(e) => return fail(format!("cannot read {}: {e}", p.display())),
            };
            let t = match Trace::parse(&text) {
                Ok(t) => t,
                Err(e) => return fail(format!("{}: {e}", p.display())),
            };
            vec![
                check_real_time_property(&t.records),
                check_incarnation_monotonicity(&t.records),
            ]
        }
    };
    let verdict = match check_history(&h) {
        Ok(v) => v,
        Err(e) => return fail(format!("{}: {e}", history.display())),
    };
    println!("{verdict}");
    monitors.iter().for_each(print_monitor);
    if verdict.is_violation() || monitors.iter().any(|m| !m.passed()) {
        Status::Violation
    } else {
        Status::Pass
    }
}

fn show_delays(d: Option<u32>) -> String {
    d.map_or_else(|| "-".to_string(), |d| d.to_string())
}

fn cmd_sweep(config: &Path, seeds: Range<u64>, step_budget: Option<u64>) -> Status {
    let (_, exp) = match load(config, step_budget) {
        Ok(x) => x,
        Err(s) => return s,
    };
    info!("sweeping seeds {}..{}", seeds.start, seeds.end);
    let summary = match sweep(&exp, seeds.clone()) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    println!("{:<16} {:>6} {:>10} {:>6}", "seeds", "pass", "violation", "stall");
    println!(
        "{:<16} {:>6} {:>10} {:>6}",
        format!("{}..{}", seeds.start, seeds.end),
        summary.passes,
        summary.violations,
        summary.stalls
    );
    println!(
        "max_latency read={} write={}",
        show_delays(summary.max_read_delays),
        show_delays(summary.max_write_delays)
    );
    for r in &summary.reports {
        match &r.verdict {
            SeedVerdict::Violation(why) => println!("violation seed={} {}", r.seed, why.join("; ")),
            SeedVerdict::Stall(why) => debug!("stall seed={} {why}", r.seed),
            SeedVerdict::Pass => {}
        }
    }
    if summary.violations > 0 {
        let seeds: Vec<String> = summary.violating_seeds().iter().map(u64::to_string).collect();
        println!("violating_seeds={}", seeds.join(","));
        Status::Violation
    } else {
        Status::Pass
    }
}

fn cmd_scenario(name: Option<&str>, list: bool, out_dir: &Path, step_budget: Option<u64>) -> Status {
    if list {
        for n in SCENARIOS {
            let s = script(n).expect("packaged scenario");
            println!("{:<18} {}", n, s.summary);
        }
        return Status::Pass;
    }
    let Some(name) = name else {
        return fail("give a scenario name or --list");
    };
    let report = match step_budget {
        None => run_scenario(name),
        Some(b) => match script(name) {
            None => return fail(format!("no scenario named `{name}`")),
            Some(mut s) => {
                s.config.step_budget = b;
                run_script(&s)
            }
        },
    };
    let report = match report {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let mut verdict = format!("{}\n", report.verdict);
    verdict.push_str(&format!("liveness={:?}\n", report.liveness));
    for m in std::iter::once(&report.real_time).chain(report.ams.as_ref()) {
        let word = if m.passed() { "pass" } else { "fail" };
        verdict.push_str(&format!("monitor={} result={word}\n", m.name));
        for v in &m.violations {
            verdict.push_str(&format!("  {v}\n"));
        }
    }
    verdict.push_str(&format!(
        "expected={:?} as_expected={}\n",
        report.expect,
        report.as_expected()
    ));
    let written = write_file(out_dir, &format!("{name}-trace.txt"), &report.result.trace.to_text())
        .and_then(|_| {
            write_file(
                out_dir,
                &format!("{name}-history.txt"),
                &report.result.history.to_text(),
            )
        })
        .and_then(|_| write_file(out_dir, &format!("{name}-verdict.txt"), &verdict));
    if let Err(e) = written {
        return fail(format!("cannot write output: {e}"));
    }
    print!("{verdict}");
    let flagged = report.verdict.is_violation() || report.ams.as_ref().is_some_and(|m| !m.passed());
    if flagged {
        Status::Violation
    } else {
        Status::Pass
    }
}

fn cmd_bench_latency(workloads: u64, first: u64) -> Status {
    println!(
        "{:<8} {:>2} {:>6} {:>9} {:>9} {:>10} {:>10}",
        "variant", "n", "runs", "read_min", "read_max", "write_min", "write_max"
    );
    let mut exact = true;
    for (label, variant) in [("A1", Variant::A1), ("A2", Variant::A2), ("D", Variant::D)] {
        for n in [3, 5, 7] {
            let exp = failure_free(variant, n, 8);
            let mut reads: Vec<u32> = Vec::new();
            let mut writes: Vec<u32> = Vec::new();
            for seed in first..first + workloads {
                let (report, result) = match run_seed(&exp, seed) {
                    Ok(x) => x,
                    Err(e) => return fail(e),
                };
                if report.verdict != SeedVerdict::Pass {
                    println!("{label} n={n} seed={seed}: {:?}", report.verdict);
                    exact = false;
                }
                for r in &result.trace.records {
                    if let TraceEvent::Respond { op, delays, .. } = r.event {
                        if result.history.ops[op].is_write() {
                            writes.push(delays);
                        } else {
                            reads.push(delays);
                        }
                    }
                }
            }
            let lo = |v: &[u32]| v.iter().min().copied();
            let hi = |v: &[u32]| v.iter().max().copied();
            exact &= reads.iter().chain(&writes).all(|d| *d == 4);
            println!(
                "{:<8} {:>2} {:>6} {:>9} {:>9} {:>10} {:>10}",
                label,
                n,
                workloads,
                show_delays(lo(&reads)),
                show_delays(hi(&reads)),
                show_delays(lo(&writes)),
                show_delays(hi(&writes))
            );
        }
    }
    if exact {
        Status::Pass
    } else {
        println!("some operation did not take exactly 4 message delays");
        Status::Violation
    }
}
