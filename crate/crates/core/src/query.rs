//! Validated queries and the feedback the oracles return for them.

use serde::{Deserialize, Serialize};
use std::fmt;

pub type NodeId = u32;

/// The three environments of the suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Hill,
    Tree,
    Sat,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Hill => "hill",
            Task::Tree => "tree",
            Task::Sat => "sat",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hill" | "hillsearch" => Ok(Task::Hill),
            "tree" | "treesearch" => Ok(Task::Tree),
            "sat" | "maxsat" | "maxsatsearch" => Ok(Task::Sat),
            other => Err(format!("unknown task `{other}` (expected hill, tree or sat)")),
        }
    }
}

/// A query in one task's query space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Query {
    Hill { x: f64 },
    Tree { node: NodeId },
    Sat { bits: Vec<bool> },
}

impl Query {
    pub fn task(&self) -> Task {
        match self {
            Query::Hill { .. } => Task::Hill,
            Query::Tree { .. } => Task::Tree,
            Query::Sat { .. } => Task::Sat,
        }
    }
}

/// Oracle response to a valid query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    Hill {
        value: f64,
    },
    Tree {
        value: i64,
        /// Availability list shown to the agent after this query.
        available: Vec<NodeId>,
        /// True when `available` holds only the nodes this query exposed.
        exposed_new: bool,
    },
    Sat {
        satisfied: u32,
    },
}

impl Feedback {
    /// Raw reward carried by this feedback.
    pub fn reward(&self) -> f64 {
        match self {
            Feedback::Hill { value } => *value,
            Feedback::Tree { value, .. } => *value as f64,
            Feedback::Sat { satisfied } => f64::from(*satisfied),
        }
    }
}

/// Why a query was rejected. Invalid queries never consume budget.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidQuery {
    #[error("x={0} is outside the domain [0, 10]")]
    OutOfDomain(String),
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("node {0} has already been queried")]
    DuplicateNode(NodeId),
    #[error("node {0} is not adjacent to any queried node")]
    NotAdjacent(NodeId),
    #[error("assignment has length {got}, expected {expected}")]
    WrongLength { got: usize, expected: usize },
    #[error("query is for task {got}, expected {expected}")]
    WrongTask { got: Task, expected: Task },
    #[error("could not parse query message: {0}")]
    Malformed(String),
}
