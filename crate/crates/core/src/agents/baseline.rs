//! Explore-then-exploit baselines, one per task.

use rand::Rng;
use serde_json::Value;

use super::{Agent, AgentError, AgentReply, AgentSpec, EpisodeStart, Turn};
use crate::envcore::StepRecord;
use crate::hill::{DOMAIN_HI, DOMAIN_LO};
use crate::instance::PublicInfo;
use crate::query::{Feedback, NodeId, Query};
use crate::rng::{derived_rng, rng_from_seed, stream, BenchRng};

/// Number of exploration rounds, `floor(alpha * n)`.
pub fn explore_rounds(alpha: f64, budget: u32) -> u32 {
    (alpha * f64::from(budget)).floor() as u32
}

/// Index of the earliest step with the highest reward.
fn best_step(history: &[StepRecord]) -> Option<&StepRecord> {
    let mut best: Option<&StepRecord> = None;
    for rec in history {
        if best.is_none_or(|b| rec.feedback.reward() > b.feedback.reward()) {
            best = Some(rec);
        }
    }
    best
}

fn check_fraction(name: &str, v: f64) -> Result<(), AgentError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(AgentError::Config(format!("{name} must lie in [0, 1], got {v}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HillBaselineParams {
    /// Fraction of the budget spent on stratified exploration.
    pub alpha: f64,
    /// Exploitation window width as a fraction of the domain length.
    pub beta: f64,
}

impl Default for HillBaselineParams {
    fn default() -> Self {
        HillBaselineParams { alpha: 0.8, beta: 0.05 }
    }
}

/// Stratified sampling over `floor(alpha N)` equal strata, then uniform
/// draws in a window around the best point seen.
#[derive(Debug, Clone)]
pub struct HillBaseline {
    params: HillBaselineParams,
    rng: BenchRng,
}

impl HillBaseline {
    pub fn new(params: HillBaselineParams) -> Result<Self, AgentError> {
        check_fraction("alpha", params.alpha)?;
        if !(params.beta > 0.0) || !params.beta.is_finite() {
            return Err(AgentError::Config(format!(
                "beta must be positive, got {}",
                params.beta
            )));
        }
        Ok(HillBaseline {
            params,
            rng: rng_from_seed(0),
        })
    }

    pub fn params(&self) -> HillBaselineParams {
        self.params
    }

    /// Next query given the history so far.
    pub fn choose(&mut self, history: &[StepRecord], budget: u32) -> f64 {
        let (lo, hi) = (DOMAIN_LO, DOMAIN_HI);
        let t = history.len() as u32;
        let n_explore = explore_rounds(self.params.alpha, budget);
        if t < n_explore {
            let delta = (hi - lo) / f64::from(n_explore);
            let a = lo + f64::from(t) * delta;
            return (a + self.rng.gen::<f64>() * delta).min(hi);
        }
        let best_x = best_step(history).and_then(|r| match r.query {
            Query::Hill { x } => Some(x),
            _ => None,
        });
        match best_x {
            None => lo + self.rng.gen::<f64>() * (hi - lo),
            Some(x) => {
                let w = (hi - lo) * self.params.beta;
                let u = self.rng.gen::<f64>();
                (x - w / 2.0 + u * w).clamp(lo, hi)
            }
        }
    }
}

impl Agent for HillBaseline {
    fn spec(&self) -> AgentSpec {
        AgentSpec::new("hill-baseline")
            .with("alpha", self.params.alpha)
            .with("beta", self.params.beta)
    }

    fn start(&mut self, episode: &EpisodeStart<'_>) -> Result<(), AgentError> {
        self.rng = derived_rng(episode.seed, stream::AGENT);
        Ok(())
    }

    fn act(&mut self, turn: &Turn<'_>) -> Result<AgentReply, AgentError> {
        let x = self.choose(turn.history, turn.budget);
        Ok(AgentReply::Query {
            reason: String::new(),
            query: Query::Hill { x },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeBaselineParams {
    /// Softmax temperature; 0 is greedy with uniform tie-breaking.
    pub tau: f64,
}

impl Default for TreeBaselineParams {
    fn default() -> Self {
        TreeBaselineParams { tau: 4.0 }
    }
}

/// Samples a frontier node with probability proportional to
/// `exp(parent value / tau)`.
#[derive(Debug, Clone)]
pub struct TreeBaseline {
    params: TreeBaselineParams,
    rng: BenchRng,
    parents: Vec<NodeId>,
    adjacency: Vec<Vec<NodeId>>,
    root: NodeId,
}

impl TreeBaseline {
    pub fn new(params: TreeBaselineParams) -> Result<Self, AgentError> {
        if !(params.tau >= 0.0) || !params.tau.is_finite() {
            return Err(AgentError::Config(format!(
                "tau must be non-negative, got {}",
                params.tau
            )));
        }
        Ok(TreeBaseline {
            params,
            rng: rng_from_seed(0),
            parents: Vec::new(),
            adjacency: Vec::new(),
            root: 0,
        })
    }

    /// Candidate nodes (unqueried, parent queried) with their parent values,
    /// in ascending node order.
    pub fn candidates(&self, history: &[StepRecord]) -> Vec<(NodeId, i64)> {
        let n = self.adjacency.len();
        let mut value: Vec<Option<i64>> = vec![None; n];
        value[self.root as usize] = Some(0);
        for rec in history {
            if let (Query::Tree { node }, Feedback::Tree { value: v, .. }) = (&rec.query, &rec.feedback) {
                value[*node as usize] = Some(*v);
            }
        }
        let mut out = Vec::new();
        for u in 0..n {
            if value[u].is_some() || u == self.root as usize {
                continue;
            }
            if let Some(pv) = value[self.parents[u] as usize] {
                out.push((u as NodeId, pv));
            }
        }
        out
    }

    /// Softmax draw over candidate scores.
    pub fn sample(&mut self, candidates: &[(NodeId, i64)]) -> Option<NodeId> {
        if candidates.is_empty() {
            return None;
        }
        let top = candidates.iter().map(|c| c.1).max().expect("nonempty");
        if self.params.tau == 0.0 {
            let best: Vec<NodeId> = candidates.iter().filter(|c| c.1 == top).map(|c| c.0).collect();
            return Some(best[self.rng.gen_range(0..best.len())]);
        }
        let weights: Vec<f64> = candidates
            .iter()
            .map(|c| ((c.1 - top) as f64 / self.params.tau).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        let mut u = self.rng.gen::<f64>() * total;
        for (c, w) in candidates.iter().zip(&weights) {
            if u < *w {
                return Some(c.0);
            }
            u -= w;
        }
        Some(candidates[candidates.len() - 1].0)
    }
}

impl Agent for TreeBaseline {
    fn spec(&self) -> AgentSpec {
        AgentSpec::new("tree-baseline").with("tau", self.params.tau)
    }

    fn start(&mut self, episode: &EpisodeStart<'_>) -> Result<(), AgentError> {
        let PublicInfo::Tree { structure, .. } = episode.public else {
            return Err(AgentError::Config("tree baseline needs a tree instance".into()));
        };
        self.parents = structure.parents();
        self.adjacency = structure.adjacency.clone();
        self.root = structure.root;
        self.rng = derived_rng(episode.seed, stream::AGENT);
        Ok(())
    }

    fn act(&mut self, turn: &Turn<'_>) -> Result<AgentReply, AgentError> {
        let candidates = self.candidates(turn.history);
        let node = self
            .sample(&candidates)
            .ok_or_else(|| AgentError::Crash("no frontier node left to query".into()))?;
        Ok(AgentReply::Query {
            reason: String::new(),
            query: Query::Tree { node },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatBaselineParams {
    pub alpha: f64,
}

impl Default for SatBaselineParams {
    fn default() -> Self {
        SatBaselineParams { alpha: 0.5 }
    }
}

/// Uniform random assignments, then single-bit flips of the best one.
#[derive(Debug, Clone)]
pub struct SatBaseline {
    params: SatBaselineParams,
    rng: BenchRng,
    n: usize,
}

impl SatBaseline {
    pub fn new(params: SatBaselineParams) -> Result<Self, AgentError> {
        check_fraction("alpha", params.alpha)?;
        Ok(SatBaseline {
            params,
            rng: rng_from_seed(0),
            n: 0,
        })
    }

    pub fn choose(&mut self, history: &[StepRecord], budget: u32) -> Vec<bool> {
        let t = history.len() as u32;
        let best = if t < explore_rounds(self.params.alpha, budget) {
            None
        } else {
            best_step(history).and_then(|r| match &r.query {
                Query::Sat { bits } => Some(bits.clone()),
                _ => None,
            })
        };
        match best {
            None => (0..self.n).map(|_| self.rng.gen::<bool>()).collect(),
            Some(mut bits) => {
                let i = self.rng.gen_range(0..bits.len());
                bits[i] = !bits[i];
                bits
            }
        }
    }
}

impl Agent for SatBaseline {
    fn spec(&self) -> AgentSpec {
        AgentSpec::new("sat-baseline").with("alpha", Value::from(self.params.alpha))
    }

    fn start(&mut self, episode: &EpisodeStart<'_>) -> Result<(), AgentError> {
        let PublicInfo::Sat { n, .. } = episode.public else {
            return Err(AgentError::Config("sat baseline needs a sat instance".into()));
        };
        self.n = *n as usize;
        self.rng = derived_rng(episode.seed, stream::AGENT);
        Ok(())
    }

    fn act(&mut self, turn: &Turn<'_>) -> Result<AgentReply, AgentError> {
        Ok(AgentReply::Query {
            reason: String::new(),
            query: Query::Sat {
                bits: self.choose(turn.history, turn.budget),
            },
        })
    }
}
