//! Splitting one budget over independent threads, and the estimators built
//! on top of it.

use std::collections::{BTreeSet, VecDeque};

use super::{run_episode_thread, EpisodeConfig, EpisodeLog, HarnessError};
use crate::agents::Agent;
use crate::envcore::normalize;
use crate::instance::{Environment, Instance};
use crate::query::{InvalidQuery, NodeId, Query};
use crate::rng::{derive_seed, stream};

/// Seed of thread `i` of a `p`-way split. A single thread keeps the master
/// seed, so `p = 1` is exactly a plain episode.
pub fn thread_seed(master: u64, p: u32, i: u32) -> u64 {
    if p == 1 {
        master
    } else {
        derive_seed(master, stream::THREAD_BASE + u64::from(i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelOutcome {
    /// Best normalized reward over the threads.
    pub reward: f64,
    pub logs: Vec<EpisodeLog>,
}

/// Runs `p` independent episodes with budget `N/p` each. When `p` does not
/// divide `N` this is an error unless `allow_floor` is set, in which case
/// each thread gets `floor(N/p)` and the remainder is dropped.
pub fn run_parallel(
    instance: &Instance,
    factory: &dyn Fn() -> Box<dyn Agent>,
    config: &EpisodeConfig,
    p: u32,
    allow_floor: bool,
) -> Result<ParallelOutcome, HarnessError> {
    if p == 0 {
        return Err(HarnessError::Config("parallel p must be at least 1".into()));
    }
    if !config.budget.is_multiple_of(p) && !allow_floor {
        return Err(HarnessError::Indivisible {
            budget: config.budget,
            p,
        });
    }
    let per = config.budget / p;
    if per == 0 {
        return Err(HarnessError::Config(format!("p={p} leaves no budget per thread")));
    }
    let mut logs = Vec::with_capacity(p as usize);
    for i in 0..p {
        let mut cfg = config.clone();
        cfg.budget = per;
        cfg.seed = thread_seed(config.seed, p, i);
        cfg.intervention.parallel_p = p;
        let mut agent = factory();
        logs.push(run_episode_thread(
            instance,
            agent.as_mut(),
            &cfg,
            (p > 1).then_some(i),
        )?);
    }
    let reward = logs.iter().map(|l| l.final_normalized).fold(0.0, f64::max);
    Ok(ParallelOutcome { reward, logs })
}

fn ln_choose_table(n: usize) -> Vec<f64> {
    let mut lf = vec![0.0f64; n + 1];
    for k in 1..=n {
        lf[k] = lf[k - 1] + (k as f64).ln();
    }
    lf
}

/// Mean of the subset maximum over all `p`-subsets of `rewards`, computed
/// from order statistics: with ascending `r_(i)`,
/// `sum_{i >= p} r_(i) C(i-1, p-1) / C(n, p)`.
pub fn pooled_parallel_estimate(rewards: &[f64], p: usize) -> Result<f64, HarnessError> {
    let n = rewards.len();
    if p == 0 || n < p {
        return Err(HarnessError::TooFewRewards { n, p });
    }
    if p == 1 {
        // same summation order as a plain mean, so the two agree exactly
        return Ok(rewards.iter().sum::<f64>() / n as f64);
    }
    let mut sorted = rewards.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lf = ln_choose_table(n);
    let ln_c = |a: usize, b: usize| lf[a] - lf[b] - lf[a - b];
    let denom = ln_c(n, p);
    let mut total = 0.0;
    for i in p..=n {
        let w = (ln_c(i - 1, p - 1) - denom).exp();
        total += sorted[i - 1] * w;
    }
    Ok(total)
}

/// A single query sequence covering everything the threads queried. Hill
/// and sat concatenate the threads' queries; tree visits the union of the
/// explored sets in breadth-first order from the root, which is always a
/// valid exploration order because every thread's set is connected and
/// contains the root.
pub fn union_replay_queries(instance: &Instance, logs: &[EpisodeLog]) -> Vec<Query> {
    match instance {
        Instance::Tree(t) => {
            let union: BTreeSet<NodeId> = logs
                .iter()
                .flat_map(|l| l.queries())
                .filter_map(|q| match q {
                    Query::Tree { node } => Some(*node),
                    _ => None,
                })
                .collect();
            let mut seen = vec![false; t.node_count() as usize];
            let mut order = Vec::with_capacity(union.len());
            let mut queue = VecDeque::from([t.root()]);
            seen[t.root() as usize] = true;
            while let Some(u) = queue.pop_front() {
                let mut next: Vec<NodeId> = t
                    .neighbors(u)
                    .iter()
                    .copied()
                    .filter(|v| !seen[*v as usize] && union.contains(v))
                    .collect();
                next.sort_unstable();
                for v in next {
                    seen[v as usize] = true;
                    order.push(Query::Tree { node: v });
                    queue.push_back(v);
                }
            }
            order
        }
        _ => logs.iter().flat_map(|l| l.queries().cloned()).collect(),
    }
}

/// Best normalized reward of a single episode issuing `queries` in order.
pub fn replay_reward(instance: &Instance, queries: &[Query], seed: u64) -> Result<f64, InvalidQuery> {
    let mut env = Environment::new(instance, seed);
    env.initial_available();
    let mut best = 0.0f64;
    for q in queries {
        best = best.max(env.evaluate(q)?.reward());
    }
    Ok(normalize(best, instance.max_reward())
        .expect("oracle rewards never exceed the maximum")
        .value())
}

/// Reward of one episode replaying the union of the threads' queries.
pub fn union_replay_reward(instance: &Instance, logs: &[EpisodeLog]) -> Result<f64, InvalidQuery> {
    let queries = union_replay_queries(instance, logs);
    let seed = logs.first().map(|l| l.seed).unwrap_or(0);
    replay_reward(instance, &queries, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooled_small_cases() {
        assert_eq!(pooled_parallel_estimate(&[0.2, 0.8], 2).unwrap(), 0.8);
        assert!((pooled_parallel_estimate(&[0.0, 0.0, 1.0], 2).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((pooled_parallel_estimate(&[0.3, 0.1, 0.5], 1).unwrap() - 0.3).abs() < 1e-15);
        assert!(pooled_parallel_estimate(&[0.3], 2).is_err());
        assert!(pooled_parallel_estimate(&[0.3], 0).is_err());
    }

    #[test]
    fn thread_seeds() {
        assert_eq!(thread_seed(9, 1, 0), 9);
        assert_ne!(thread_seed(9, 2, 0), thread_seed(9, 2, 1));
        assert_eq!(thread_seed(9, 4, 3), thread_seed(9, 2, 3));
    }
}
