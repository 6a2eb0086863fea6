//! The agent interface shared by built-in baselines, scripted replays and
//! external processes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::envcore::StepRecord;
use crate::instance::PublicInfo;
use crate::protocol::ObservationMessage;
use crate::query::{NodeId, Query, Task};

mod baseline;

pub use baseline::{
    HillBaseline, HillBaselineParams, SatBaseline, SatBaselineParams, TreeBaseline, TreeBaselineParams,
};

/// Agent name plus the parameters that determine its behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
}

impl AgentSpec {
    pub fn new(name: impl Into<String>) -> Self {
        AgentSpec {
            name: name.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }
}

/// Failures that end an episode outright rather than going through the
/// retry policy.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AgentError {
    #[error("agent crashed: {0}")]
    Crash(String),
    #[error("agent did not reply within {0} ms")]
    Timeout(u64),
    #[error("agent sent a malformed message: {0}")]
    Malformed(String),
    #[error("bad agent configuration: {0}")]
    Config(String),
}

/// How the current observation relates to the previous reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attempt {
    Fresh,
    /// Previous reply was invalid; the same observation is presented again.
    SilentRetry,
    /// Previous reply was invalid; the observation is an error message.
    FeedbackRetry,
}

/// Fixed per-episode context handed to [`Agent::start`].
#[derive(Debug, Clone, Copy)]
pub struct EpisodeStart<'a> {
    pub task: Task,
    pub public: &'a PublicInfo,
    pub budget: u32,
    pub seed: u64,
}

/// Everything an agent may look at when choosing its next query.
#[derive(Debug, Clone, Copy)]
pub struct Turn<'a> {
    pub public: &'a PublicInfo,
    pub budget: u32,
    pub history: &'a [StepRecord],
    /// Tree only: the availability list most recently shown.
    pub available: Option<&'a [NodeId]>,
    /// Rendered observation, present when the harness renders transcripts.
    pub observation: Option<&'a ObservationMessage>,
    pub attempt: Attempt,
}

impl Turn<'_> {
    pub fn remaining(&self) -> u32 {
        self.budget - self.history.len() as u32
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentReply {
    /// An already structured query.
    Query { reason: String, query: Query },
    /// A raw query message line, parsed by the harness.
    Line(String),
}

pub trait Agent: Send {
    fn spec(&self) -> AgentSpec;

    /// Conversational agents read rendered observations and receive summary
    /// hand-offs; the built-in baselines keep their own state and do not.
    fn is_conversational(&self) -> bool {
        false
    }

    fn start(&mut self, episode: &EpisodeStart<'_>) -> Result<(), AgentError>;

    fn act(&mut self, turn: &Turn<'_>) -> Result<AgentReply, AgentError>;

    /// Called once when the episode ends, however it ends.
    fn finish(&mut self) {}
}

/// Replays a fixed list of replies in order. Running past the end is a crash.
#[derive(Debug, Clone)]
pub struct ScriptedAgent {
    replies: Vec<AgentReply>,
    next: usize,
    conversational: bool,
}

impl ScriptedAgent {
    pub fn from_queries(queries: impl IntoIterator<Item = Query>) -> Self {
        ScriptedAgent {
            replies: queries
                .into_iter()
                .map(|query| AgentReply::Query {
                    reason: String::new(),
                    query,
                })
                .collect(),
            next: 0,
            conversational: false,
        }
    }

    pub fn from_lines(lines: impl IntoIterator<Item = String>) -> Self {
        ScriptedAgent {
            replies: lines.into_iter().map(AgentReply::Line).collect(),
            next: 0,
            conversational: false,
        }
    }

    /// Makes the harness render observations and hand-offs for this agent.
    pub fn conversational(mut self, yes: bool) -> Self {
        self.conversational = yes;
        self
    }

    pub fn consumed(&self) -> usize {
        self.next
    }
}

impl Agent for ScriptedAgent {
    fn spec(&self) -> AgentSpec {
        AgentSpec::new("scripted").with("replies", self.replies.len())
    }

    fn is_conversational(&self) -> bool {
        self.conversational
    }

    fn start(&mut self, _episode: &EpisodeStart<'_>) -> Result<(), AgentError> {
        self.next = 0;
        Ok(())
    }

    fn act(&mut self, _turn: &Turn<'_>) -> Result<AgentReply, AgentError> {
        let reply = self
            .replies
            .get(self.next)
            .cloned()
            .ok_or_else(|| AgentError::Crash(format!("script ended after {} replies", self.next)))?;
        self.next += 1;
        Ok(reply)
    }
}

/// Builds the task's baseline, applying parameter overrides such as
/// `alpha`, `beta` or `tau`.
pub fn baseline_for(task: Task, overrides: &BTreeMap<String, Value>) -> Result<Box<dyn Agent>, AgentError> {
    let get = |key: &str| -> Result<Option<f64>, AgentError> {
        match overrides.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| AgentError::Config(format!("parameter `{key}` must be a number"))),
        }
    };
    let allowed: &[&str] = match task {
        Task::Hill => &["alpha", "beta"],
        Task::Tree => &["tau"],
        Task::Sat => &["alpha"],
    };
    if let Some(bad) = overrides.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(AgentError::Config(format!(
            "unknown {task} baseline parameter `{bad}` (expected one of {})",
            allowed.join(", ")
        )));
    }
    Ok(match task {
        Task::Hill => {
            let mut p = HillBaselineParams::default();
            if let Some(a) = get("alpha")? {
                p.alpha = a;
            }
            if let Some(b) = get("beta")? {
                p.beta = b;
            }
            Box::new(HillBaseline::new(p)?)
        }
        Task::Tree => {
            let mut p = TreeBaselineParams::default();
            if let Some(t) = get("tau")? {
                p.tau = t;
            }
            Box::new(TreeBaseline::new(p)?)
        }
        Task::Sat => {
            let mut p = SatBaselineParams::default();
            if let Some(a) = get("alpha")? {
                p.alpha = a;
            }
            Box::new(SatBaseline::new(p)?)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_are_checked() {
        let mut o = BTreeMap::new();
        o.insert("tau".to_string(), Value::from(0.0));
        assert!(baseline_for(Task::Tree, &o).is_ok());
        assert!(baseline_for(Task::Hill, &o).is_err());
        o.insert("tau".to_string(), Value::from(-1.0));
        assert!(baseline_for(Task::Tree, &o).is_err());
        o.clear();
        o.insert("alpha".to_string(), Value::from("high"));
        assert!(baseline_for(Task::Sat, &o).is_err());
    }

    #[test]
    fn baseline_spec_reports_parameters() {
        let agent = baseline_for(Task::Hill, &BTreeMap::new()).unwrap();
        let spec = agent.spec();
        assert_eq!(spec.name, "hill-baseline");
        assert_eq!(spec.params["alpha"], Value::from(0.8));
        assert_eq!(spec.params["beta"], Value::from(0.05));
    }
}
