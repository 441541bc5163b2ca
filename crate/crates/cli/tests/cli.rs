//! The binary's subcommands, exit codes and output files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_crr-sim"));
    c.env_remove("CRR_LOG");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn exec(cmd: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = cmd.output().expect("binary runs");
    (
        status.code().expect("exit code"),
        String::from_utf8(stdout).unwrap(),
        String::from_utf8(stderr).unwrap(),
    )
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

const A2: &str = r#"
protocol = "A"
n = 3
k = 1
r = 0
b = 0
seed = 4

[workload]
kind = "random"
ops = 6

[schedule]
kind = "random"
"#;

#[test]
fn run_writes_trace_and_history() {
    let dir = TempDir::new().unwrap();
    let (code, out, _) = exec(
        bin()
            .arg("run")
            .arg(configs().join("a2-failure-free.toml"))
            .arg("--out-dir")
            .arg(dir.path()),
    );
    assert_eq!(code, 0, "{out}");
    assert!(out.starts_with("outcome=completed"));
    let trace = fs::read_to_string(dir.path().join("trace.txt")).unwrap();
    let history = fs::read_to_string(dir.path().join("history.txt")).unwrap();
    assert!(trace
        .lines()
        .all(|l| l.starts_with("t=") && l.contains(" kind=") && l.contains(" actor=")));
    assert_eq!(history.lines().count(), 8);
    assert!(history.lines().all(|l| l.starts_with("op=")));
}

#[test]
fn rollbacks_above_the_fault_threshold_are_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "bad.toml", &A2.replace("r = 0", "r = 2"));
    let (code, _, err) = exec(bin().arg("run").arg(&cfg).arg("--out-dir").arg(dir.path()));
    assert_eq!(code, 2);
    assert!(err.contains("`r`"), "{err}");
    assert!(!dir.path().join("trace.txt").exists());
}

#[test]
fn malformed_configs_name_the_problem() {
    let dir = TempDir::new().unwrap();
    let unknown = write_config(&dir, "u.toml", &A2.replace("seed = 4", "seed = 4\ncolour = 1"));
    let (code, _, err) = exec(bin().arg("run").arg(&unknown));
    assert_eq!(code, 2);
    assert!(err.contains("colour"), "{err}");

    let (code, _, _) = exec(bin().arg("run").arg(dir.path().join("missing.toml")));
    assert_eq!(code, 2);

    let unknown_r = write_config(&dir, "ur.toml", &A2.replace("r = 0", "r = \"sometimes\""));
    let (code, _, _) = exec(bin().arg("run").arg(&unknown_r));
    assert_eq!(code, 2);
}

#[test]
fn unknown_thresholds_are_accepted() {
    let dir = TempDir::new().unwrap();
    let text = A2
        .replace("r = 0", "r = \"unknown\"")
        .replace("b = 0", "b = \"unknown\"");
    let cfg = write_config(&dir, "u.toml", &text);
    let (code, out, err) = exec(bin().arg("run").arg(&cfg).arg("--out-dir").arg(dir.path()));
    assert_eq!(code, 0, "{out}{err}");
}

#[test]
fn crash_vector_register_below_its_bound_runs_with_a_warning() {
    let dir = TempDir::new().unwrap();
    let text = A2.replace("\"A\"", "\"D\"").replace("b = 0", "b = 1");
    let cfg = write_config(&dir, "d.toml", &text);
    let (code, _, err) = exec(bin().arg("run").arg(&cfg).arg("--out-dir").arg(dir.path()));
    assert_eq!(code, 0);
    assert!(err.contains("warning"), "{err}");
    assert!(dir.path().join("history.txt").exists());
}

#[test]
fn check_flags_the_lost_write_and_passes_clean_runs() {
    let dir = TempDir::new().unwrap();
    let (code, _, _) = exec(
        bin()
            .args(["scenario", "lost-write-naive", "--out-dir"])
            .arg(dir.path()),
    );
    assert_eq!(code, 1);
    let history = dir.path().join("lost-write-naive-history.txt");
    let trace = dir.path().join("lost-write-naive-trace.txt");
    let (code, out, _) = exec(bin().arg("check").arg(&history).arg(&trace));
    assert_eq!(code, 1, "{out}");
    assert!(out.starts_with("verdict=violation"));
    assert!(out.contains("monitor=real_time result=fail"));

    let clean = TempDir::new().unwrap();
    exec(
        bin()
            .arg("run")
            .arg(configs().join("a2-failure-free.toml"))
            .arg("--out-dir")
            .arg(clean.path()),
    );
    let (code, out, _) = exec(
        bin()
            .arg("check")
            .arg(clean.path().join("history.txt"))
            .arg(clean.path().join("trace.txt")),
    );
    assert_eq!(code, 0, "{out}");
    assert!(out.starts_with("verdict=linearizable"));
    assert!(out.contains("monitor=incarnation_monotonicity result=pass"));
}

#[test]
fn check_rejects_truncated_input() {
    let dir = TempDir::new().unwrap();
    exec(
        bin()
            .arg("run")
            .arg(configs().join("a2-failure-free.toml"))
            .arg("--out-dir")
            .arg(dir.path()),
    );
    let text = fs::read_to_string(dir.path().join("history.txt")).unwrap();
    let cut = &text[..text.len() / 2];
    let truncated = dir.path().join("cut.txt");
    fs::write(&truncated, cut).unwrap();
    let (code, _, err) = exec(bin().arg("check").arg(&truncated));
    assert_eq!(code, 2, "{err}");
    let (code, _, _) = exec(bin().arg("check").arg(dir.path().join("absent.txt")));
    assert_eq!(code, 2);
}

#[test]
fn in_model_sweep_passes_and_reports_latency() {
    let (code, out, _) = exec(
        bin()
            .args(["sweep"])
            .arg(configs().join("a1-in-model.toml"))
            .args(["--seeds", "0..100"]),
    );
    assert_eq!(code, 0, "{out}");
    let row = out.lines().nth(1).unwrap();
    let cols: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(cols, ["0..100", "100", "0", "0"]);

    let (code, out, _) = exec(
        bin()
            .args(["sweep"])
            .arg(configs().join("a2-failure-free.toml"))
            .args(["--seeds", "0..20"]),
    );
    assert_eq!(code, 0);
    assert!(out.contains("max_latency read=4 write=4"), "{out}");
}

#[test]
fn naive_recovery_sweep_reports_the_violating_seed() {
    let (code, out, _) = exec(
        bin()
            .args(["sweep"])
            .arg(configs().join("naive-recovery-sweep.toml"))
            .args(["--seeds", "7000..7010"]),
    );
    assert_eq!(code, 1);
    assert!(out.contains("violation seed=7004"), "{out}");
    assert!(out.contains("violating_seeds=7004"));
}

#[test]
fn bad_seed_ranges_are_usage_errors() {
    let (code, _, _) = exec(
        bin()
            .args(["sweep"])
            .arg(configs().join("a1-in-model.toml"))
            .args(["--seeds", "9..3"]),
    );
    assert_eq!(code, 2);
    let (code, _, _) = exec(bin().arg("frobnicate"));
    assert_eq!(code, 2);
}

#[test]
fn scenarios_write_their_files() {
    let (code, out, _) = exec(bin().args(["scenario", "--list"]));
    assert_eq!(code, 0);
    for name in ["lost-write-naive", "lost-write-d", "rr", "ams", "below-bound"] {
        assert!(out.lines().any(|l| l.starts_with(name)), "{name} missing from {out}");
    }

    let dir = TempDir::new().unwrap();
    let (code, _, _) = exec(bin().args(["scenario", "lost-write-d", "--out-dir"]).arg(dir.path()));
    assert_eq!(code, 0);
    let verdict = fs::read_to_string(dir.path().join("lost-write-d-verdict.txt")).unwrap();
    assert!(verdict.starts_with("verdict=linearizable"));
    assert!(verdict.contains("as_expected=true"));
    assert!(dir.path().join("lost-write-d-trace.txt").exists());
    assert!(dir.path().join("lost-write-d-history.txt").exists());

    let (code, _, _) = exec(bin().args(["scenario", "ams", "--out-dir"]).arg(dir.path()));
    assert_eq!(code, 1);
    let (code, _, _) = exec(bin().args(["scenario", "below-bound", "--out-dir"]).arg(dir.path()));
    assert_eq!(code, 0);
    let (code, _, _) = exec(bin().args(["scenario", "fig9"]));
    assert_eq!(code, 2);
}

#[test]
fn scripted_config_reproduces_the_lost_write() {
    let dir = TempDir::new().unwrap();
    let (code, _, _) = exec(
        bin()
            .arg("run")
            .arg(configs().join("lost-write-naive.toml"))
            .arg("--out-dir")
            .arg(dir.path()),
    );
    assert_eq!(code, 0);
    let (code, _, _) = exec(bin().arg("check").arg(dir.path().join("history.txt")));
    assert_eq!(code, 1);
}

#[test]
fn repeated_runs_are_byte_identical() {
    for cfg in [
        "a1-in-model.toml",
        "d-eventual.toml",
        "naive-recovery-sweep.toml",
        "lost-write-naive.toml",
    ] {
        let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
        for d in [&a, &b] {
            let (code, _, _) = exec(
                bin()
                    .arg("run")
                    .arg(configs().join(cfg))
                    .args(["--seed", "11", "--out-dir"])
                    .arg(d.path()),
            );
            assert_eq!(code, 0, "{cfg}");
        }
        for f in ["trace.txt", "history.txt"] {
            assert_eq!(
                fs::read(a.path().join(f)).unwrap(),
                fs::read(b.path().join(f)).unwrap(),
                "{cfg} {f}"
            );
        }
    }
}

#[test]
fn step_budget_flag_limits_the_run() {
    let dir = TempDir::new().unwrap();
    let (code, out, _) = exec(
        bin()
            .arg("run")
            .arg(configs().join("a2-failure-free.toml"))
            .args(["--step-budget", "5", "--out-dir"])
            .arg(dir.path()),
    );
    assert_eq!(code, 0);
    assert!(out.contains("steps=5"), "{out}");
}

#[test]
fn latency_bench_reports_four_delays() {
    let (code, out, _) = exec(bin().args(["bench-latency", "--workloads", "5"]));
    assert_eq!(code, 0, "{out}");
}
