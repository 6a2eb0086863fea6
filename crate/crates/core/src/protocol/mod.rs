//! Messages exchanged with agents: rendered observations going out and
//! JSON query messages coming back.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::instance::PublicInfo;
use crate::query::{InvalidQuery, NodeId, Query};

mod render;
mod wire;

pub use render::{
    feedback_text, py_float, render_error, render_feedback, render_summary, render_task_intro, system_prompt,
};
pub use wire::{
    SubprocessAgent, WireConfig, WireHeader, DEFAULT_TIMEOUT_SECS, MAX_LINE_BYTES, WIRE_PROTOCOL, WIRE_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    TaskIntro,
    Feedback,
    Availability,
    SummaryHandoff,
    Error,
}

/// One outgoing message: the rendered text plus a machine-readable mirror.
///
/// `system` is set on messages that start a fresh context (the task intro
/// and summary hand-offs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationMessage {
    pub kind: ObservationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub text: String,
    pub structured: Value,
}

impl ObservationMessage {
    pub fn remaining(&self) -> Option<u64> {
        self.structured.get("remaining").and_then(Value::as_u64)
    }
}

/// A parsed reply: free-text reason (logged, never interpreted) and query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryMessage {
    pub reason: String,
    pub query: Query,
}

impl QueryMessage {
    /// Wire form, e.g. `{"reason":"..","query":{"x":5.0}}`.
    pub fn to_line(&self) -> String {
        let mut obj = Map::new();
        obj.insert("reason".into(), Value::from(self.reason.clone()));
        obj.insert("query".into(), query_payload(&self.query));
        Value::Object(obj).to_string()
    }
}

/// Task-specific payload object of a query.
pub fn query_payload(query: &Query) -> Value {
    let mut obj = Map::new();
    match query {
        Query::Hill { x } => {
            obj.insert("x".into(), Value::from(*x));
        }
        Query::Tree { node } => {
            obj.insert("node".into(), Value::from(*node));
        }
        Query::Sat { bits } => {
            for (i, &b) in bits.iter().enumerate() {
                obj.insert(format!("x{i}"), Value::from(u8::from(b)));
            }
        }
    }
    Value::Object(obj)
}

fn malformed(msg: impl Into<String>) -> InvalidQuery {
    InvalidQuery::Malformed(msg.into())
}

/// Parses one reply line against the task's query grammar.
pub fn parse_query_message(line: &str, public: &PublicInfo) -> Result<QueryMessage, InvalidQuery> {
    let value: Value = serde_json::from_str(line.trim()).map_err(|e| malformed(format!("not valid JSON: {e}")))?;
    let Value::Object(top) = value else {
        return Err(malformed("expected a JSON object"));
    };
    if let Some(k) = top.keys().find(|k| *k != "reason" && *k != "query") {
        return Err(malformed(format!("unexpected field `{k}`")));
    }
    let reason = match top.get("reason") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(malformed("`reason` must be a string")),
    };
    let Some(Value::Object(payload)) = top.get("query") else {
        return Err(malformed("missing `query` object"));
    };
    let query = match public {
        PublicInfo::Hill { .. } => {
            only_keys(payload, &["x"])?;
            let x = payload
                .get("x")
                .and_then(Value::as_f64)
                .ok_or_else(|| malformed("`x` must be a number"))?;
            Query::Hill { x }
        }
        PublicInfo::Tree { .. } => {
            only_keys(payload, &["node"])?;
            let node = payload
                .get("node")
                .and_then(Value::as_u64)
                .ok_or_else(|| malformed("`node` must be a non-negative integer"))?;
            let node = NodeId::try_from(node).map_err(|_| InvalidQuery::UnknownNode(NodeId::MAX))?;
            Query::Tree { node }
        }
        PublicInfo::Sat { n, .. } => {
            let n = *n as usize;
            let mut bits = vec![false; n];
            let mut seen = vec![false; n];
            for (key, v) in payload {
                let idx = key
                    .strip_prefix('x')
                    .and_then(|d| d.parse::<usize>().ok())
                    .filter(|i| key == &format!("x{i}"))
                    .ok_or_else(|| malformed(format!("unexpected key `{key}`")))?;
                if idx >= n {
                    return Err(InvalidQuery::WrongLength {
                        got: idx + 1,
                        expected: n,
                    });
                }
                bits[idx] = match v {
                    Value::Bool(b) => *b,
                    Value::Number(num) => match num.as_u64() {
                        Some(0) => false,
                        Some(1) => true,
                        _ => return Err(malformed(format!("`{key}` must be 0 or 1"))),
                    },
                    _ => return Err(malformed(format!("`{key}` must be 0 or 1"))),
                };
                seen[idx] = true;
            }
            let got = seen.iter().filter(|&&s| s).count();
            if got != n {
                return Err(InvalidQuery::WrongLength { got, expected: n });
            }
            Query::Sat { bits }
        }
    };
    Ok(QueryMessage { reason, query })
}

fn only_keys(payload: &Map<String, Value>, keys: &[&str]) -> Result<(), InvalidQuery> {
    if let Some(k) = payload.keys().find(|k| !keys.contains(&k.as_str())) {
        return Err(malformed(format!("unexpected key `{k}` in query")));
    }
    Ok(())
}
