use std::path::Path;
use std::process::{Command, Output};

fn lfgp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lfgp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &[&str] = &[
    "--set",
    "total_steps=240",
    "--set",
    "eval_every=120",
    "--set",
    "eval_episodes=2",
    "--set",
    "warmup=100",
    "--set",
    "exploration=120",
    "--set",
    "expert_pairs=60",
    "--set",
    "final_pairs=10",
    "--set",
    "batch_size=16",
    "--set",
    "d_batch_size=16",
    "--set",
    "policy_hidden=16,16",
    "--set",
    "q_hidden=16,16",
    "--set",
    "d_hidden=16,16",
];

fn collect(dir: &Path) {
    let o = lfgp(&[
        "collect-expert",
        "--pairs",
        "60",
        "--final-pairs",
        "10",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

fn assert_error_line(o: &Output, kind: &str, code: i32) {
    assert_eq!(o.status.code(), Some(code), "{}", stderr(o));
    let line = stderr(o);
    let line = line.lines().last().unwrap_or("");
    assert!(
        line.starts_with(&format!("error kind={kind} message=\"")),
        "{line}"
    );
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_error_line(&lfgp(&["train", "--bogus"]), "usage", 2);
}

#[test]
fn unknown_key_is_a_config_error() {
    assert_error_line(&lfgp(&["train", "--set", "nope=1"]), "config", 2);
    assert_error_line(&lfgp(&["train", "--set", "nope"]), "usage", 2);
}

#[test]
fn missing_experts_name_the_task() {
    let dir = tempfile::tempdir().unwrap();
    let o = lfgp(&[
        "train",
        "--algorithm",
        "dac",
        "--expert-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_error_line(&o, "config", 2);
    assert!(stderr(&o).contains("stack"));
}

#[test]
fn explain_config_prints_provenance_for_every_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "batch_size = 32\n").unwrap();
    let o = lfgp(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "5",
        "--explain-config",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text
        .lines()
        .any(|l| l.starts_with("batch_size = 32") && l.contains("run.cfg:1")));
    assert!(text
        .lines()
        .any(|l| l.starts_with("seed = 5") && l.contains("command line")));
    assert!(text
        .lines()
        .any(|l| l.starts_with("warmup = 2500") && l.contains("desk scale")));
    assert!(text.lines().all(|l| l.contains('#')));
}

#[test]
fn collect_train_evaluate_plot() {
    let root = tempfile::tempdir().unwrap();
    let experts = root.path().join("experts");
    collect(&experts);
    assert!(experts.join("stack.expert").exists());
    assert!(experts.join("stack.single.expert").exists());
    assert!(experts.join("open-gripper.expert").exists());

    let run = root.path().join("run");
    let mut args = vec![
        "train",
        "--algorithm",
        "lfgp",
        "--expert-dir",
        experts.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ];
    args.extend_from_slice(TINY);
    let o = lfgp(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("step=120 task=stack"));
    for f in ["metrics.csv", "policy.ckpt", "config.cfg"] {
        assert!(run.join(f).exists(), "{f}");
    }

    let ck = run.join("policy.ckpt");
    let o = lfgp(&[
        "evaluate",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--task",
        "reach",
        "--episodes",
        "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("task=reach success_rate="));

    let plots = root.path().join("plots");
    let metrics = run.join("metrics.csv");
    let o = lfgp(&[
        "plot",
        metrics.to_str().unwrap(),
        "--out",
        plots.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = std::fs::read_to_string(plots.join("stack.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("lfgp"));
}

#[test]
fn ablate_runs_each_cell() {
    let root = tempfile::tempdir().unwrap();
    let experts = root.path().join("experts");
    collect(&experts);
    let matrix = root.path().join("matrix.txt");
    std::fs::write(&matrix, "scheduler = wrs, none\n").unwrap();
    let out = root.path().join("ablate");
    let expert_set = format!("expert_dir={}", experts.display());
    let mut args = vec![
        "ablate",
        "--matrix",
        matrix.to_str().unwrap(),
        "--jobs",
        "2",
        "--out",
        out.to_str().unwrap(),
        "--set",
        &expert_set,
    ];
    args.extend_from_slice(TINY);
    let o = lfgp(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("scheduler-wrs/metrics.csv").exists());
    assert!(out.join("scheduler-none/metrics.csv").exists());
}

#[test]
fn six_state_writes_text_and_csv() {
    let out = tempfile::tempdir().unwrap();
    let o = lfgp(&[
        "six-state",
        "--seeds",
        "3",
        "--episodes",
        "50",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("after episode 1: Q(s1,a15) = 2.7000"));
    let csv = std::fs::read_to_string(out.path().join("six_state.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);
}
