//! Task-agnostic episode state: budget accounting, best-so-far tracking and
//! reward normalization.
//!
//! [`EpisodeState`] is a value type. Each recorded step produces a new state,
//! which keeps replays and log reconstruction straightforward.

use serde::{Deserialize, Serialize};

use crate::query::{Feedback, Query};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("budget must be positive")]
    ZeroBudget,
    #[error("budget of {total} rounds is exhausted")]
    BudgetExhausted { total: u32 },
    #[error("instance maximum must be positive, got {0}")]
    NonPositiveMax(f64),
    #[error("raw reward {raw} exceeds instance maximum {max}")]
    RewardAboveMax { raw: f64, max: f64 },
}

/// Interaction budget `N` and the number of valid rounds used so far.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    total: u32,
    used: u32,
}

impl Budget {
    pub fn new(total: u32) -> Result<Self, EnvError> {
        if total == 0 {
            return Err(EnvError::ZeroBudget);
        }
        Ok(Budget { total, used: 0 })
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn used(&self) -> u32 {
        self.used
    }

    pub fn remaining(&self) -> u32 {
        self.total - self.used
    }

    pub fn is_exhausted(&self) -> bool {
        self.used == self.total
    }

    fn consume(self) -> Result<Self, EnvError> {
        if self.is_exhausted() {
            return Err(EnvError::BudgetExhausted { total: self.total });
        }
        Ok(Budget {
            total: self.total,
            used: self.used + 1,
        })
    }
}

/// One valid oracle round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based round index.
    pub step: u32,
    pub query: Query,
    pub feedback: Feedback,
    /// Best raw reward after this round.
    pub best: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    budget: Budget,
    history: Vec<StepRecord>,
    best_reward_raw: f64,
    seed: u64,
}

impl EpisodeState {
    /// Fresh state. The best reward starts at 0: every task's rewards are
    /// non-negative and the tree root (value 0) is revealed for free.
    pub fn new(total: u32, seed: u64) -> Result<Self, EnvError> {
        Ok(EpisodeState {
            budget: Budget::new(total)?,
            history: Vec::new(),
            best_reward_raw: 0.0,
            seed,
        })
    }

    pub fn budget(&self) -> Budget {
        self.budget
    }

    pub fn history(&self) -> &[StepRecord] {
        &self.history
    }

    pub fn best_reward_raw(&self) -> f64 {
        self.best_reward_raw
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Appends a validated query and its feedback, returning the next state.
    pub fn record_step(&self, query: Query, feedback: Feedback) -> Result<EpisodeState, EnvError> {
        let budget = self.budget.consume()?;
        let best = self.best_reward_raw.max(feedback.reward());
        let mut history = self.history.clone();
        history.push(StepRecord {
            step: budget.used(),
            query,
            feedback,
            best,
        });
        Ok(EpisodeState {
            budget,
            history,
            best_reward_raw: best,
            seed: self.seed,
        })
    }
}

/// Reward divided by the instance maximum.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormalizedReward(f64);

impl NormalizedReward {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Relative slack allowed above the instance maximum before the maximum is
/// declared wrong (covers the last-ulp error of the continuous maximizer).
const MAX_SLACK: f64 = 1e-9;

pub fn normalize(raw: f64, instance_max: f64) -> Result<NormalizedReward, EnvError> {
    if !(instance_max > 0.0) {
        return Err(EnvError::NonPositiveMax(instance_max));
    }
    if raw > instance_max * (1.0 + MAX_SLACK) {
        return Err(EnvError::RewardAboveMax { raw, max: instance_max });
    }
    Ok(NormalizedReward((raw / instance_max).clamp(0.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hill_step(x: f64, value: f64) -> (Query, Feedback) {
        (Query::Hill { x }, Feedback::Hill { value })
    }

    #[test]
    fn first_step_counts() {
        let state = EpisodeState::new(5, 1).unwrap();
        let (q, f) = hill_step(1.0, 0.3);
        let next = state.record_step(q, f).unwrap();
        assert_eq!(next.history().len(), 1);
        assert_eq!(next.budget().used(), 1);
        assert_eq!(next.history()[0].step, 1);
        // the previous state is untouched
        assert_eq!(state.history().len(), 0);
    }

    #[test]
    fn best_is_monotone() {
        let state = EpisodeState::new(5, 1).unwrap();
        let (q, f) = hill_step(1.0, 0.7);
        let state = state.record_step(q, f).unwrap();
        let (q, f) = hill_step(2.0, 0.5);
        let state = state.record_step(q, f).unwrap();
        assert_eq!(state.best_reward_raw(), 0.7);
        assert_eq!(state.history()[1].best, 0.7);
    }

    #[test]
    fn replaying_full_trace_matches_fold() {
        let rewards: Vec<f64> = (0..48).map(|i| ((i * 37) % 23) as f64 / 7.0).collect();
        let mut state = EpisodeState::new(48, 9).unwrap();
        for (i, r) in rewards.iter().enumerate() {
            let (q, f) = hill_step(i as f64 / 10.0, *r);
            state = state.record_step(q, f).unwrap();
        }
        let expected = rewards.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        assert_eq!(state.budget().used(), 48);
        assert_eq!(state.best_reward_raw(), expected);
    }

    #[test]
    fn exhausted_budget_rejects() {
        let state = EpisodeState::new(1, 0).unwrap();
        let (q, f) = hill_step(1.0, 1.0);
        let state = state.record_step(q.clone(), f.clone()).unwrap();
        assert_eq!(state.record_step(q, f), Err(EnvError::BudgetExhausted { total: 1 }));
    }

    #[test]
    fn zero_budget_is_rejected() {
        assert_eq!(EpisodeState::new(0, 0), Err(EnvError::ZeroBudget));
    }

    #[test]
    fn normalize_cases() {
        assert_eq!(normalize(45.0, 45.0).unwrap().value(), 1.0);
        assert_eq!(normalize(0.0, 45.0).unwrap().value(), 0.0);
        assert!(matches!(normalize(1.0, 0.0), Err(EnvError::NonPositiveMax(_))));
        assert!(matches!(normalize(1.0, -2.0), Err(EnvError::NonPositiveMax(_))));
        assert!(matches!(normalize(46.0, 45.0), Err(EnvError::RewardAboveMax { .. })));
    }
}
