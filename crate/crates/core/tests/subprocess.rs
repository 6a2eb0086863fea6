use std::time::Duration;

use explore_bench::harness::{run_episode, EpisodeConfig, Termination, TranscriptEntry};
use explore_bench::instance::Instance;
use explore_bench::presets::build_preset;
use explore_bench::protocol::{ObservationKind, SubprocessAgent, WireConfig};

fn hill() -> Instance {
    build_preset("hill-main").unwrap()
}

fn agent(script: &str, timeout_ms: u64) -> SubprocessAgent {
    SubprocessAgent::shell(
        script,
        WireConfig {
            timeout: Duration::from_millis(timeout_ms),
            ..WireConfig::default()
        },
    )
}

#[test]
fn constant_agent_completes() {
    let mut a = agent(
        r#"read -r h; while read -r l; do echo '{"reason": "center", "query": {"x": 5.5}}'; done"#,
        10_000,
    );
    let log = run_episode(&hill(), &mut a, &EpisodeConfig::new(6, 2)).unwrap();
    assert_eq!(log.termination, Termination::Completed);
    assert_eq!(log.steps.len(), 6);
    assert!(log.steps.iter().all(|s| s.reason == "center"));
    assert_eq!(log.agent.name, "subprocess");
    let first = log.transcript.iter().find_map(|e| match e {
        TranscriptEntry::ToAgent { message } => Some(message.kind),
        _ => None,
    });
    assert_eq!(first, Some(ObservationKind::TaskIntro));
}

#[test]
fn header_line_comes_first() {
    let mut a = agent(
        r#"read -r h; case "$h" in *'"protocol":"explore-bench-wire"'*'"budget":3'*) ;; *) exit 1;; esac;
           while read -r l; do echo '{"reason": "", "query": {"x": 1}}'; done"#,
        10_000,
    );
    let log = run_episode(&hill(), &mut a, &EpisodeConfig::new(3, 0)).unwrap();
    assert_eq!(log.termination, Termination::Completed);
}

#[test]
fn early_exit_is_a_crash() {
    let mut a = agent(
        r#"read -r h; read -r l; echo '{"reason": "", "query": {"x": 2}}'; exit 0"#,
        10_000,
    );
    let log = run_episode(&hill(), &mut a, &EpisodeConfig::new(5, 0)).unwrap();
    assert!(
        matches!(log.termination, Termination::AgentCrash { .. }),
        "{:?}",
        log.termination
    );
    assert_eq!(log.steps.len(), 1);
    assert_eq!(log.termination.code(), 11);
}

#[test]
fn missing_program_is_a_crash() {
    let mut a = SubprocessAgent::new("/nonexistent/agent-binary", vec![], WireConfig::default());
    let log = run_episode(&hill(), &mut a, &EpisodeConfig::new(5, 0)).unwrap();
    assert!(matches!(log.termination, Termination::AgentCrash { .. }));
    assert!(log.steps.is_empty());
}

#[test]
fn silent_agent_times_out() {
    let mut a = agent("read -r h; sleep 30", 300);
    let log = run_episode(&hill(), &mut a, &EpisodeConfig::new(5, 0)).unwrap();
    assert!(
        matches!(log.termination, Termination::ProtocolTimeout { .. }),
        "{:?}",
        log.termination
    );
    assert_eq!(log.termination.code(), 12);
}

#[test]
fn oversize_line_is_malformed() {
    let mut a = agent(
        "read -r h; read -r l; head -c 2000000 /dev/zero | tr '\\0' 'a'; echo",
        10_000,
    );
    let log = run_episode(&hill(), &mut a, &EpisodeConfig::new(5, 0)).unwrap();
    assert!(
        matches!(log.termination, Termination::MalformedMessage { .. }),
        "{:?}",
        log.termination
    );
    assert_eq!(log.termination.code(), 13);
}

#[test]
fn non_utf8_is_malformed() {
    let mut a = agent(r"read -r h; read -r l; printf '\377\376\n'", 10_000);
    let log = run_episode(&hill(), &mut a, &EpisodeConfig::new(5, 0)).unwrap();
    assert!(
        matches!(log.termination, Termination::MalformedMessage { .. }),
        "{:?}",
        log.termination
    );
}

#[test]
fn invalid_then_valid_consumes_no_budget() {
    let mut a = agent(
        r#"read -r h; read -r l; echo '{"reason": "", "query": {"x": -1}}';
           while read -r l; do echo '{"reason": "", "query": {"x": 3}}'; done"#,
        10_000,
    );
    let log = run_episode(&hill(), &mut a, &EpisodeConfig::new(4, 0)).unwrap();
    assert_eq!(log.termination, Termination::Completed);
    assert_eq!(log.steps.len(), 4);
    assert_eq!((log.retries.invalid, log.retries.silent), (1, 1));
    assert_eq!(log.invalid_attempts[0].after_step, 0);
}
