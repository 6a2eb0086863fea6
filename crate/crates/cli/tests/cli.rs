use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use explore_bench::harness::{read_logs, Termination, TranscriptEntry};
use explore_bench::protocol::ObservationKind;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_explore-bench"));
    c.env_remove("EXPLORE_BENCH_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn jsonl_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    v.sort();
    v
}

/// Reply lines querying x = 0.2, 0.4, ... for a hill episode.
fn hill_script(dir: &Path, n: usize) -> PathBuf {
    let path = dir.join("script.jsonl");
    let lines: Vec<String> = (1..=n)
        .map(|i| format!(r#"{{"reason": "sweep", "query": {{"x": {}}}}}"#, i as f64 * 0.2))
        .collect();
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

#[test]
fn gen_prints_structure() {
    let o = run(&["gen", "--preset", "tree-main"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("tree: 772 nodes, max value 45"));
    let o = run(&["gen", "--preset", "sat-main"]);
    assert!(stdout(&o).starts_with("sat: n=15, m=120, w_gold=80"));
    let o = run(&["gen", "--preset", "hill-sweep-k5"]);
    assert!(stdout(&o).starts_with("hill: 16 hills, needle height 20"));
    let o = run(&["gen", "--list"]);
    assert_eq!(stdout(&o).lines().count(), 30);
}

#[test]
fn presets_are_frozen() {
    let dir = tempfile::tempdir().unwrap();
    for (name, id) in [
        ("hill-main", "fe2e03ddf2e443c3"),
        ("tree-main", "8b3eb2770c9c2d75"),
        ("sat-main", "fcf16bd177b2fff1"),
    ] {
        let a = dir.path().join(format!("{name}-a.json"));
        let b = dir.path().join(format!("{name}-b.json"));
        let o = run(&["gen", "--preset", name, "-o", a.to_str().unwrap()]);
        assert!(stdout(&o).contains(&format!("(id {id})")), "{name}: {}", stdout(&o));
        run(&["gen", "--preset", name, "-o", b.to_str().unwrap()]);
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}

#[test]
fn bad_generator_parameters_exit_2() {
    assert_eq!(
        run(&["gen", "--task", "sat", "--param", "k_gold=0"]).status.code(),
        Some(2)
    );
    assert_eq!(run(&["gen", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(run(&["run", "--budgets", "5"]).status.code(), Some(2));
}

#[test]
fn summary_handoffs_at_segment_boundaries() {
    let dir = tempfile::tempdir().unwrap();
    let script = hill_script(dir.path(), 48);
    let out = dir.path().join("out");
    let o = run(&[
        "run",
        "--preset",
        "hill-main",
        "--script",
        script.to_str().unwrap(),
        "--budgets",
        "48",
        "--summaries",
        "4",
        "--episodes",
        "2",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let logs = read_logs(&jsonl_files(&out)[0]).unwrap();
    assert_eq!(logs.len(), 2);
    for log in &logs {
        assert_eq!(log.handoff_rounds, vec![12, 24, 36]);
        assert_eq!(log.termination, Termination::Completed);
        let handoffs = log
            .transcript
            .iter()
            .filter(|e| matches!(e, TranscriptEntry::ToAgent { message } if message.kind == ObservationKind::SummaryHandoff))
            .count();
        assert_eq!(handoffs, 3);
    }
}

#[test]
fn subprocess_replay_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let script = hill_script(dir.path(), 12);
    let agent = format!(
        "{} replay-agent {}",
        env!("CARGO_BIN_EXE_explore-bench"),
        script.display()
    );
    let mut files = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("out{i}"));
        let o = run(&[
            "run",
            "--preset",
            "hill-main",
            "--command",
            &agent,
            "--budgets",
            "12",
            "--episodes",
            "3",
            "--seed",
            "5",
            "-o",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        files.push(jsonl_files(&out)[0].clone());
    }
    let a = std::fs::read(&files[0]).unwrap();
    assert_eq!(a, std::fs::read(&files[1]).unwrap());
    let logs = read_logs(&files[0]).unwrap();
    assert!(logs.iter().all(|l| l.steps.len() == 12 && !l.transcript.is_empty()));
}

#[test]
fn crashing_agent_exits_3_and_still_logs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "run",
        "--preset",
        "sat-main",
        "--command",
        "exit 1",
        "--budgets",
        "6",
        "--episodes",
        "2",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let logs = read_logs(&jsonl_files(&out)[0]).unwrap();
    assert!(logs
        .iter()
        .all(|l| matches!(l.termination, Termination::AgentCrash { .. })));
}

#[test]
fn run_then_analyze_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(
        &config,
        "preset = \"tree-main\"\nbudgets = [6, 12]\nepisodes = 8\nseed = 2\n\n[agent]\nkind = \"baseline\"\nparams = { tau = 3.0 }\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = bin()
        .args(["run", "-c", config.to_str().unwrap(), "--budgets", "12,6,4", "-j", "2"])
        .env("EXPLORE_BENCH_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files = jsonl_files(&out);
    assert_eq!(files.len(), 3);
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 6);

    let mut args = vec!["analyze", "--parallel", "2,3", "--budget", "12", "--bootstrap", "200"];
    let paths: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
    args.extend(paths.iter().map(String::as_str));
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("tree-baseline(tau=3.0)"));
    let pooled = text
        .lines()
        .skip_while(|l| !l.starts_with("# tree pooled"))
        .nth(2)
        .unwrap();
    for cell in pooled.split('\t').skip(1) {
        let v: f64 = cell.split(' ').next().unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }

    let mut args = vec!["pool", "--budget", "12", "--p", "1,2,3"];
    args.extend(paths.iter().map(String::as_str));
    let o = run(&args);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 2);
    let mut args = vec!["pool", "--budget", "60"];
    args.extend(paths.iter().map(String::as_str));
    assert_eq!(run(&args).status.code(), Some(2));
}

#[test]
fn parallel_cells_log_every_thread() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "run",
        "--preset",
        "sat-main",
        "--budgets",
        "12",
        "--parallel",
        "3",
        "--episodes",
        "4",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let logs = read_logs(&jsonl_files(&out)[0]).unwrap();
    assert_eq!(logs.len(), 12);
    assert!(logs.iter().all(|l| l.budget == 4 && l.intervention.parallel_p == 3));
    assert_eq!(
        run(&[
            "run",
            "--preset",
            "sat-main",
            "--budgets",
            "10",
            "--parallel",
            "3",
            "-o",
            out.to_str().unwrap()
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn theory_reports_thresholds() {
    let o = run(&["theory", "--alpha", "0.5", "--c", "1", "--p", "2"]);
    assert!(o.status.success());
    let row = stdout(&o).lines().nth(2).unwrap().to_string();
    let v2: f64 = row.split('\t').nth(2).unwrap().parse().unwrap();
    assert!((v2 - 2.0 * (2.0 - 2f64.sqrt()).powi(2)).abs() < 1e-10);
}

#[test]
fn sweep_prints_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "sweep",
        "--task",
        "sat",
        "--param",
        "alpha",
        "--values",
        "0:1:0.5",
        "--budget",
        "10",
        "--episodes",
        "5",
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 4);
}
