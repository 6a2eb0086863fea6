//! Newline-delimited JSON over an agent process's stdin and stdout.
//!
//! The harness first writes a [`WireHeader`] line, then one
//! [`ObservationMessage`](super::ObservationMessage) per line. The agent
//! answers every observation with exactly one query message line.

use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agents::{Agent, AgentError, AgentReply, AgentSpec, EpisodeStart, Turn};
use crate::query::Task;

pub const WIRE_PROTOCOL: &str = "explore-bench-wire";
pub const WIRE_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT_SECS: u64 = 120;
pub const MAX_LINE_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WireConfig {
    /// Longest wait for one reply line.
    pub timeout: Duration,
    /// Longest accepted reply line, excluding the newline.
    pub max_line_bytes: usize,
}

impl Default for WireConfig {
    fn default() -> Self {
        WireConfig {
            timeout: Duration::from_secs(DEFAULT_TIMEOUT_SECS),
            max_line_bytes: MAX_LINE_BYTES,
        }
    }
}

/// First line of every session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireHeader {
    pub protocol: String,
    pub version: u32,
    pub task: Task,
    pub budget: u32,
    pub seed: u64,
}

enum ReadEvent {
    Line(Vec<u8>),
    TooLong,
    Eof,
    Failed(String),
}

fn spawn_reader<R: Read + Send + 'static>(out: R, max: usize) -> Receiver<ReadEvent> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut reader = BufReader::new(out);
        loop {
            let mut buf = Vec::new();
            let limit = max as u64 + 2;
            let event = match (&mut reader).take(limit).read_until(b'\n', &mut buf) {
                Ok(0) => ReadEvent::Eof,
                Ok(_) if buf.last() != Some(&b'\n') && buf.len() as u64 >= limit => ReadEvent::TooLong,
                Ok(_) => {
                    while matches!(buf.last(), Some(b'\n' | b'\r')) {
                        buf.pop();
                    }
                    if buf.len() > max {
                        ReadEvent::TooLong
                    } else {
                        ReadEvent::Line(buf)
                    }
                }
                Err(e) => ReadEvent::Failed(e.to_string()),
            };
            let stop = !matches!(event, ReadEvent::Line(_));
            if tx.send(event).is_err() || stop {
                return;
            }
        }
    });
    rx
}

/// An external agent process speaking the wire protocol.
pub struct SubprocessAgent {
    program: String,
    args: Vec<String>,
    config: WireConfig,
    child: Option<Child>,
    stdin: Option<ChildStdin>,
    rx: Option<Receiver<ReadEvent>>,
}

impl SubprocessAgent {
    pub fn new(program: impl Into<String>, args: Vec<String>, config: WireConfig) -> Self {
        SubprocessAgent {
            program: program.into(),
            args,
            config,
            child: None,
            stdin: None,
            rx: None,
        }
    }

    /// Runs `script` through `sh -c`.
    pub fn shell(script: &str, config: WireConfig) -> Self {
        SubprocessAgent::new("sh", vec!["-c".into(), script.into()], config)
    }

    fn send_line(&mut self, line: &str) -> Result<(), AgentError> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| AgentError::Crash("agent process is not running".into()))?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.write_all(b"\n"))
            .and_then(|_| stdin.flush())
            .map_err(|e| self.crash_reason(format!("write failed: {e}")))
    }

    fn crash_reason(&mut self, what: String) -> AgentError {
        let status = self
            .child
            .as_mut()
            .and_then(|c| c.wait_timeout_brief())
            .map(|s| format!(" ({s})"))
            .unwrap_or_default();
        AgentError::Crash(format!("{what}{status}"))
    }

    fn shutdown(&mut self) {
        self.stdin = None;
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
        self.rx = None;
    }
}

trait BriefWait {
    fn wait_timeout_brief(&mut self) -> Option<std::process::ExitStatus>;
}

impl BriefWait for Child {
    /// Exit status if the process ends within a short grace period.
    fn wait_timeout_brief(&mut self) -> Option<std::process::ExitStatus> {
        for _ in 0..20 {
            if let Ok(Some(s)) = self.try_wait() {
                return Some(s);
            }
            thread::sleep(Duration::from_millis(5));
        }
        None
    }
}

impl Agent for SubprocessAgent {
    fn spec(&self) -> AgentSpec {
        let mut cmd = vec![Value::from(self.program.clone())];
        cmd.extend(self.args.iter().cloned().map(Value::from));
        AgentSpec::new("subprocess").with("command", Value::from(cmd))
    }

    fn is_conversational(&self) -> bool {
        true
    }

    fn start(&mut self, episode: &EpisodeStart<'_>) -> Result<(), AgentError> {
        self.shutdown();
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| AgentError::Crash(format!("could not start `{}`: {e}", self.program)))?;
        let stdout = child.stdout.take().expect("piped stdout");
        self.stdin = child.stdin.take();
        self.rx = Some(spawn_reader(stdout, self.config.max_line_bytes));
        self.child = Some(child);
        let header = WireHeader {
            protocol: WIRE_PROTOCOL.into(),
            version: WIRE_VERSION,
            task: episode.task,
            budget: episode.budget,
            seed: episode.seed,
        };
        self.send_line(&serde_json::to_string(&header).expect("header serializes"))
    }

    fn act(&mut self, turn: &Turn<'_>) -> Result<AgentReply, AgentError> {
        let obs = turn
            .observation
            .ok_or_else(|| AgentError::Config("subprocess agents need rendered observations".into()))?;
        self.send_line(&serde_json::to_string(obs).expect("observations serialize"))?;
        let rx = self.rx.as_ref().expect("reader runs while the process does");
        match rx.recv_timeout(self.config.timeout) {
            Ok(ReadEvent::Line(bytes)) => String::from_utf8(bytes)
                .map(AgentReply::Line)
                .map_err(|_| AgentError::Malformed("reply is not valid UTF-8".into())),
            Ok(ReadEvent::TooLong) => Err(AgentError::Malformed(format!(
                "reply exceeds {} bytes",
                self.config.max_line_bytes
            ))),
            Ok(ReadEvent::Eof) | Err(RecvTimeoutError::Disconnected) => {
                Err(self.crash_reason("agent closed its output".into()))
            }
            Ok(ReadEvent::Failed(e)) => Err(self.crash_reason(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(AgentError::Timeout(self.config.timeout.as_millis() as u64)),
        }
    }

    fn finish(&mut self) {
        self.shutdown();
    }
}

impl Drop for SubprocessAgent {
    fn drop(&mut self) {
        self.shutdown();
    }
}
