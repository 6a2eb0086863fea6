//! Episode runner: retry policy, summary hand-offs, run logs and replay.

use serde::{Deserialize, Serialize};

use crate::agents::{Agent, AgentError, AgentReply, AgentSpec, Attempt, EpisodeStart, Turn};
use crate::envcore::{normalize, EnvError, EpisodeState, StepRecord};
use crate::instance::{Environment, Instance};
use crate::protocol::{
    parse_query_message, render_error, render_feedback, render_summary, render_task_intro, ObservationMessage,
    QueryMessage,
};
use crate::query::{Feedback, InvalidQuery, NodeId, Query, Task};

mod parallel;
mod runs;

pub use parallel::{
    pooled_parallel_estimate, replay_reward, run_parallel, thread_seed, union_replay_queries, union_replay_reward,
    ParallelOutcome,
};
pub use runs::{
    episode_seed, read_logs, run_many, run_many_parallel, write_manifest, AgentFactory, JsonlSink, RunManifest,
};

pub const LOG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid episode configuration: {0}")]
    Config(String),
    #[error("budget {budget} is not divisible by p={p}")]
    Indivisible { budget: u32, p: u32 },
    #[error("need at least p={p} rewards, got {n}")]
    TooFewRewards { n: usize, p: usize },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("log record is not valid: {0}")]
    Log(#[from] serde_json::Error),
}

/// Invalid replies first get silent retries, then retries that show the
/// error. One more invalid reply after both are used up ends the episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub silent_retries: u32,
    pub feedback_retries: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            silent_retries: 20,
            feedback_retries: 5,
        }
    }
}

impl RetryPolicy {
    /// What follows the `k`-th invalid reply of an episode (1-based).
    pub fn after_invalid(&self, k: u32) -> Option<Attempt> {
        if k <= self.silent_retries {
            Some(Attempt::SilentRetry)
        } else if k <= self.silent_retries + self.feedback_retries {
            Some(Attempt::FeedbackRetry)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionSpec {
    /// Number of independent threads the total budget is split over.
    pub parallel_p: u32,
    /// Number of segments; `s - 1` summary hand-offs happen mid-episode.
    pub summary_s: u32,
}

impl Default for InterventionSpec {
    fn default() -> Self {
        InterventionSpec {
            parallel_p: 1,
            summary_s: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub budget: u32,
    pub seed: u64,
    pub retry: RetryPolicy,
    pub intervention: InterventionSpec,
    /// Record rendered observations and raw replies. Defaults to on for
    /// conversational agents.
    pub transcript: Option<bool>,
}

impl EpisodeConfig {
    pub fn new(budget: u32, seed: u64) -> Self {
        EpisodeConfig {
            budget,
            seed,
            retry: RetryPolicy::default(),
            intervention: InterventionSpec::default(),
            transcript: None,
        }
    }

    pub fn with_summaries(mut self, s: u32) -> Self {
        self.intervention.summary_s = s;
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.budget == 0 {
            return Err(HarnessError::Config("budget must be at least 1".into()));
        }
        let s = self.intervention.summary_s;
        if s == 0 {
            return Err(HarnessError::Config("summary count s must be at least 1".into()));
        }
        if s > self.budget {
            return Err(HarnessError::Config(format!(
                "summary count s={s} exceeds the budget {}",
                self.budget
            )));
        }
        if self.intervention.parallel_p == 0 {
            return Err(HarnessError::Config("parallel p must be at least 1".into()));
        }
        Ok(())
    }
}

/// Rounds after which a hand-off replaces the conversation: multiples of
/// `floor(N/s)`, `s - 1` of them.
pub fn handoff_schedule(budget: u32, s: u32) -> Vec<u32> {
    if s <= 1 || budget < s {
        return Vec::new();
    }
    let seg = budget / s;
    (1..s).map(|k| k * seg).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "cause", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    RetryExhausted,
    AgentCrash { message: String },
    ProtocolTimeout { message: String },
    MalformedMessage { message: String },
    AgentConfig { message: String },
}

impl Termination {
    pub fn is_completed(&self) -> bool {
        matches!(self, Termination::Completed)
    }

    /// Distinct numeric code per cause.
    pub fn code(&self) -> u8 {
        match self {
            Termination::Completed => 0,
            Termination::RetryExhausted => 10,
            Termination::AgentCrash { .. } => 11,
            Termination::ProtocolTimeout { .. } => 12,
            Termination::MalformedMessage { .. } => 13,
            Termination::AgentConfig { .. } => 14,
        }
    }

    fn from_agent(e: AgentError) -> Self {
        let message = e.to_string();
        match e {
            AgentError::Crash(_) => Termination::AgentCrash { message },
            AgentError::Timeout(_) => Termination::ProtocolTimeout { message },
            AgentError::Malformed(_) => Termination::MalformedMessage { message },
            AgentError::Config(_) => Termination::AgentConfig { message },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedStep {
    pub step: u32,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub reason: String,
    pub query: Query,
    pub feedback: Feedback,
    pub best: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryCounters {
    pub invalid: u32,
    pub silent: u32,
    pub feedback: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvalidAttempt {
    /// Valid rounds completed when the reply arrived.
    pub after_step: u32,
    pub reply: String,
    pub error: InvalidQuery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dir", rename_all = "snake_case")]
pub enum TranscriptEntry {
    ToAgent { message: ObservationMessage },
    FromAgent { line: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub schema_version: u32,
    pub task: Task,
    pub instance_id: String,
    pub agent: AgentSpec,
    pub seed: u64,
    pub budget: u32,
    pub intervention: InterventionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thread: Option<u32>,
    pub retry_policy: RetryPolicy,
    pub steps: Vec<LoggedStep>,
    pub retries: RetryCounters,
    pub invalid_attempts: Vec<InvalidAttempt>,
    pub handoff_rounds: Vec<u32>,
    pub final_raw: f64,
    pub final_normalized: f64,
    pub instance_max: f64,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transcript: Vec<TranscriptEntry>,
}

impl EpisodeLog {
    pub fn queries(&self) -> impl Iterator<Item = &Query> {
        self.steps.iter().map(|s| &s.query)
    }

    pub fn history(&self) -> Vec<StepRecord> {
        self.steps
            .iter()
            .map(|s| StepRecord {
                step: s.step,
                query: s.query.clone(),
                feedback: s.feedback.clone(),
                best: s.best,
            })
            .collect()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("logs serialize")
    }
}

fn parse_reply(
    reply: AgentReply,
    instance: &Instance,
    public: &crate::instance::PublicInfo,
) -> (String, Result<QueryMessage, InvalidQuery>) {
    match reply {
        AgentReply::Query { reason, query } => {
            let msg = QueryMessage { reason, query };
            let line = msg.to_line();
            let checked = if msg.query.task() == instance.task() {
                Ok(msg)
            } else {
                Err(InvalidQuery::WrongTask {
                    got: msg.query.task(),
                    expected: instance.task(),
                })
            };
            (line, checked)
        }
        AgentReply::Line(line) => {
            let parsed = parse_query_message(&line, public);
            (line, parsed)
        }
    }
}

/// Runs one episode to completion or early termination.
pub fn run_episode(
    instance: &Instance,
    agent: &mut dyn Agent,
    config: &EpisodeConfig,
) -> Result<EpisodeLog, HarnessError> {
    run_episode_thread(instance, agent, config, None)
}

pub(crate) fn run_episode_thread(
    instance: &Instance,
    agent: &mut dyn Agent,
    config: &EpisodeConfig,
    thread: Option<u32>,
) -> Result<EpisodeLog, HarnessError> {
    config.validate()?;
    let budget = config.budget;
    let public = instance.public();
    let mut env = Environment::new(instance, config.seed);
    let mut state = EpisodeState::new(budget, config.seed)?;
    let conversational = agent.is_conversational();
    let render = conversational || config.transcript.unwrap_or(false);
    let keep_transcript = config.transcript.unwrap_or(conversational);
    let handoffs = if conversational {
        handoff_schedule(budget, config.intervention.summary_s)
    } else {
        Vec::new()
    };

    let mut available: Option<Vec<NodeId>> = env.initial_available();
    let mut reasons: Vec<String> = Vec::new();
    let mut counters = RetryCounters::default();
    let mut invalid_attempts = Vec::new();
    let mut handoff_rounds = Vec::new();
    let mut transcript = Vec::new();
    let mut attempt = Attempt::Fresh;

    let start = EpisodeStart {
        task: instance.task(),
        public: &public,
        budget,
        seed: config.seed,
    };
    let mut termination = match agent.start(&start) {
        Ok(()) => None,
        Err(e) => Some(Termination::from_agent(e)),
    };
    let mut observation: Option<ObservationMessage> = if render && termination.is_none() {
        Some(render_task_intro(&public, budget, available.as_deref(), config.seed))
    } else {
        None
    };

    while termination.is_none() && !state.budget().is_exhausted() {
        if keep_transcript {
            if let Some(obs) = &observation {
                transcript.push(TranscriptEntry::ToAgent { message: obs.clone() });
            }
        }
        let turn = Turn {
            public: &public,
            budget,
            history: state.history(),
            available: available.as_deref(),
            observation: observation.as_ref(),
            attempt,
        };
        let reply = match agent.act(&turn) {
            Ok(r) => r,
            Err(e) => {
                termination = Some(Termination::from_agent(e));
                break;
            }
        };
        let (line, parsed) = parse_reply(reply, instance, &public);
        if keep_transcript {
            transcript.push(TranscriptEntry::FromAgent { line: line.clone() });
        }
        let outcome = parsed.and_then(|msg| env.evaluate(&msg.query).map(|fb| (msg, fb)));
        match outcome {
            Ok((msg, feedback)) => {
                if let Feedback::Tree { available: a, .. } = &feedback {
                    available = Some(a.clone());
                }
                state = state.record_step(msg.query, feedback)?;
                reasons.push(msg.reason);
                attempt = Attempt::Fresh;
                let used = state.budget().used();
                if render {
                    observation = Some(if handoffs.contains(&used) {
                        handoff_rounds.push(used);
                        render_summary(
                            &public,
                            state.history(),
                            budget,
                            config.seed,
                            handoff_rounds.len() as u32,
                        )
                    } else {
                        render_feedback(state.history().last().expect("just recorded"), budget)
                    });
                }
            }
            Err(error) => {
                counters.invalid += 1;
                let used = state.budget().used();
                invalid_attempts.push(InvalidAttempt {
                    after_step: used,
                    reply: line,
                    error: error.clone(),
                });
                match config.retry.after_invalid(counters.invalid) {
                    Some(Attempt::SilentRetry) => {
                        counters.silent += 1;
                        attempt = Attempt::SilentRetry;
                    }
                    Some(_) => {
                        counters.feedback += 1;
                        attempt = Attempt::FeedbackRetry;
                        if render {
                            observation = Some(render_error(instance.task(), &error, budget, used));
                        }
                    }
                    None => termination = Some(Termination::RetryExhausted),
                }
            }
        }
    }
    agent.finish();

    let instance_max = instance.max_reward();
    let final_raw = state.best_reward_raw();
    let steps = state
        .history()
        .iter()
        .zip(reasons)
        .map(|(r, reason)| LoggedStep {
            step: r.step,
            reason,
            query: r.query.clone(),
            feedback: r.feedback.clone(),
            best: r.best,
        })
        .collect();
    Ok(EpisodeLog {
        schema_version: LOG_SCHEMA_VERSION,
        task: instance.task(),
        instance_id: instance.id(),
        agent: agent.spec(),
        seed: config.seed,
        budget,
        intervention: config.intervention,
        thread,
        retry_policy: config.retry,
        steps,
        retries: counters,
        invalid_attempts,
        handoff_rounds,
        final_raw,
        final_normalized: normalize(final_raw, instance_max)?.value(),
        instance_max,
        termination: termination.unwrap_or(Termination::Completed),
        transcript,
    })
}

/// Re-runs the oracle over the logged queries and checks that every
/// feedback, running best and the final reward match exactly.
pub fn replay_check(instance: &Instance, log: &EpisodeLog) -> Result<(), String> {
    if instance.id() != log.instance_id {
        return Err(format!(
            "log is for instance {}, not {}",
            log.instance_id,
            instance.id()
        ));
    }
    let mut env = Environment::new(instance, log.seed);
    env.initial_available();
    let mut best = 0.0f64;
    for s in &log.steps {
        let fb = env
            .evaluate(&s.query)
            .map_err(|e| format!("step {}: logged query is invalid on replay: {e}", s.step))?;
        if fb != s.feedback {
            return Err(format!(
                "step {}: feedback {:?} differs from logged {:?}",
                s.step, fb, s.feedback
            ));
        }
        best = best.max(fb.reward());
        if best != s.best {
            return Err(format!(
                "step {}: running best {best} differs from logged {}",
                s.step, s.best
            ));
        }
    }
    if best != log.final_raw {
        return Err(format!("final reward {best} differs from logged {}", log.final_raw));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_for_four_segments() {
        assert_eq!(handoff_schedule(48, 4), vec![12, 24, 36]);
        assert_eq!(handoff_schedule(50, 4), vec![12, 24, 36]);
        assert_eq!(handoff_schedule(48, 1), Vec::<u32>::new());
        assert_eq!(handoff_schedule(48, 2), vec![24]);
    }

    #[test]
    fn retry_policy_steps() {
        let p = RetryPolicy::default();
        assert_eq!(p.after_invalid(1), Some(Attempt::SilentRetry));
        assert_eq!(p.after_invalid(20), Some(Attempt::SilentRetry));
        assert_eq!(p.after_invalid(21), Some(Attempt::FeedbackRetry));
        assert_eq!(p.after_invalid(25), Some(Attempt::FeedbackRetry));
        assert_eq!(p.after_invalid(26), None);
        let none = RetryPolicy {
            silent_retries: 0,
            feedback_retries: 0,
        };
        assert_eq!(none.after_invalid(1), None);
    }

    #[test]
    fn config_validation() {
        assert!(EpisodeConfig::new(0, 1).validate().is_err());
        assert!(EpisodeConfig::new(3, 1).with_summaries(4).validate().is_err());
        assert!(EpisodeConfig::new(3, 1).with_summaries(0).validate().is_err());
        assert!(EpisodeConfig::new(48, 1).with_summaries(4).validate().is_ok());
    }
}
