//! Aggregation of run sets: means, bootstrap standard errors, relative
//! deltas, scaling series and report tables.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::harness::{pooled_parallel_estimate, EpisodeLog};
use crate::query::Task;
use crate::rng::{derived_rng, stream};

pub const DEFAULT_BOOTSTRAP_B: usize = 10_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("no rewards to aggregate")]
    Empty,
    #[error("need at least 2 rewards, got {0}")]
    TooFew(usize),
    #[error("bootstrap needs at least one resample")]
    NoResamples,
    #[error("reference value must be positive, got {0}")]
    BadReference(f64),
    #[error("reward {0} lies outside [0, 1]")]
    OutOfRange(f64),
    #[error("pooling failed: {0}")]
    Pooling(String),
}

/// What a run set was measured on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RunKey {
    pub task: Task,
    pub instance_id: String,
    pub agent: String,
    pub budget: u32,
    pub parallel_p: u32,
    pub summary_s: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSet {
    pub key: RunKey,
    pub rewards: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl RunSet {
    pub fn new(key: RunKey, rewards: Vec<f64>, seeds: Vec<u64>) -> Result<Self, AnalysisError> {
        if rewards.is_empty() {
            return Err(AnalysisError::Empty);
        }
        if let Some(&bad) = rewards.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(AnalysisError::OutOfRange(bad));
        }
        Ok(RunSet { key, rewards, seeds })
    }

    pub fn mean(&self) -> f64 {
        mean_reward(&self.rewards).expect("run sets are nonempty")
    }
}

/// Short agent label: the name plus its parameters, e.g. `tree-baseline(tau=4.0)`.
pub fn agent_label(spec: &crate::agents::AgentSpec) -> String {
    if spec.params.is_empty() || spec.name == "subprocess" || spec.name == "scripted" {
        return spec.name.clone();
    }
    let params: Vec<String> = spec.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("{}({})", spec.name, params.join(","))
}

/// Groups single-thread episode logs into run sets; parallel threads are
/// merged into one reward per episode (their maximum).
pub fn runsets_from_logs(logs: &[EpisodeLog]) -> Result<Vec<RunSet>, AnalysisError> {
    let mut groups: BTreeMap<RunKey, (Vec<f64>, Vec<u64>)> = BTreeMap::new();
    for log in logs {
        let key = RunKey {
            task: log.task,
            instance_id: log.instance_id.clone(),
            agent: agent_label(&log.agent),
            budget: log.budget * log.intervention.parallel_p,
            parallel_p: log.intervention.parallel_p,
            summary_s: log.intervention.summary_s,
        };
        let g = groups.entry(key).or_default();
        match log.thread {
            // threads of one split are logged consecutively, thread 0 first
            Some(i) if i > 0 && !g.0.is_empty() => {
                let last = g.0.last_mut().expect("nonempty");
                *last = last.max(log.final_normalized);
            }
            _ => {
                g.0.push(log.final_normalized);
                g.1.push(log.seed);
            }
        }
    }
    groups
        .into_iter()
        .map(|(key, (rewards, seeds))| RunSet::new(key, rewards, seeds))
        .collect()
}

pub fn mean_reward(rewards: &[f64]) -> Result<f64, AnalysisError> {
    if rewards.is_empty() {
        return Err(AnalysisError::Empty);
    }
    Ok(rewards.iter().sum::<f64>() / rewards.len() as f64)
}

/// Standard deviation (n - 1 denominator) of `b` bootstrap resample means.
pub fn bootstrap_stderr(rewards: &[f64], b: usize, seed: u64) -> Result<f64, AnalysisError> {
    let n = rewards.len();
    if n < 2 {
        return Err(AnalysisError::TooFew(n));
    }
    if b == 0 {
        return Err(AnalysisError::NoResamples);
    }
    if b == 1 || rewards.iter().all(|&r| r == rewards[0]) {
        return Ok(0.0);
    }
    let mut rng = derived_rng(seed, stream::BOOTSTRAP);
    let means: Vec<f64> = (0..b)
        .map(|_| (0..n).map(|_| rewards[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    let m = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (b - 1) as f64;
    Ok(var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStat {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub bootstrap_b: usize,
}

/// Mean and bootstrap standard error; a single reward gets stderr 0.
pub fn summarize(rewards: &[f64], b: usize, seed: u64) -> Result<SummaryStat, AnalysisError> {
    let mean = mean_reward(rewards)?;
    let stderr = if rewards.len() < 2 {
        0.0
    } else {
        bootstrap_stderr(rewards, b, seed)?
    };
    Ok(SummaryStat {
        mean,
        stderr,
        n: rewards.len(),
        bootstrap_b: b,
    })
}

/// Signed percentage change of `value` relative to `reference`.
pub fn relative_delta(value: f64, reference: f64) -> Result<f64, AnalysisError> {
    if !(reference > 0.0) {
        return Err(AnalysisError::BadReference(reference));
    }
    Ok(100.0 * (value - reference) / reference)
}

/// Rounds half away from zero to `decimals` places. A small epsilon absorbs
/// binary representation error (0.125 stays 0.13 even when stored as
/// 0.12499999...).
pub fn round_half_up(v: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    let scaled = v.abs() * scale;
    let r = (scaled + 0.5 + 1e-9).floor();
    v.signum() * r / scale
}

/// Two-decimal table cell.
pub fn fmt_reward(v: f64) -> String {
    format!("{:.2}", round_half_up(v, 2))
}

/// Delta annotation such as `↑59%`, `↓7%` or `0%`.
pub fn fmt_delta(delta: f64) -> String {
    let r = round_half_up(delta, 0);
    if r > 0.0 {
        format!("↑{}%", r as i64)
    } else if r < 0.0 {
        format!("↓{}%", (-r) as i64)
    } else {
        "0%".into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub budget: u32,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// `(N, mean, stderr)` points sorted by budget.
pub fn scaling_series(runs: &[(u32, Vec<f64>)], b: usize, seed: u64) -> Result<Vec<ScalingPoint>, AnalysisError> {
    let mut out = runs
        .iter()
        .map(|(budget, rewards)| {
            let s = summarize(rewards, b, seed)?;
            Ok(ScalingPoint {
                budget: *budget,
                mean: s.mean,
                stderr: s.stderr,
                n: s.n,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    out.sort_by_key(|p| p.budget);
    Ok(out)
}

/// A delimiter-separated report table.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_tsv(&self) -> String {
        let mut s = self.header.join("\t");
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.join("\t"));
            s.push('\n');
        }
        s
    }
}

/// Mean reward per agent (rows) and task/budget (columns), using
/// single-thread, no-summary run sets.
pub fn budget_table(runsets: &[RunSet]) -> Table {
    let mut cols: Vec<(Task, u32)> = Vec::new();
    let mut cells: BTreeMap<String, BTreeMap<(Task, u32), f64>> = BTreeMap::new();
    for rs in runsets.iter().filter(|r| r.key.parallel_p == 1 && r.key.summary_s == 1) {
        let col = (rs.key.task, rs.key.budget);
        if !cols.contains(&col) {
            cols.push(col);
        }
        cells.entry(rs.key.agent.clone()).or_default().insert(col, rs.mean());
    }
    cols.sort();
    let mut header = vec!["agent".to_string()];
    header.extend(cols.iter().map(|(t, n)| format!("{t} N={n}")));
    let rows = cells
        .into_iter()
        .map(|(agent, row)| {
            let mut r = vec![agent];
            r.extend(
                cols.iter()
                    .map(|c| row.get(c).map(|&v| fmt_reward(v)).unwrap_or_else(|| "-".into())),
            );
            r
        })
        .collect();
    Table { header, rows }
}

/// Pooled best-of-p rewards at total budget `budget`: for each `p`, pools
/// the single-thread runs of budget `budget / p`. Deltas are relative to the
/// `p = 1` column.
pub fn parallel_table(runsets: &[RunSet], task: Task, budget: u32, ps: &[u32]) -> Result<Table, AnalysisError> {
    let mut header = vec!["agent".to_string()];
    header.extend(ps.iter().map(|p| format!("p={p}")));
    let mut rows = Vec::new();
    let agents: std::collections::BTreeSet<&str> = runsets
        .iter()
        .filter(|r| r.key.task == task)
        .map(|r| r.key.agent.as_str())
        .collect();
    for agent in agents {
        let pool = |p: u32| -> Option<Result<f64, AnalysisError>> {
            if !budget.is_multiple_of(p) {
                return None;
            }
            let rs = runsets.iter().find(|r| {
                r.key.task == task
                    && r.key.agent == agent
                    && r.key.budget == budget / p
                    && r.key.parallel_p == 1
                    && r.key.summary_s == 1
            })?;
            if rs.rewards.len() < p as usize {
                return None;
            }
            Some(pooled_parallel_estimate(&rs.rewards, p as usize).map_err(|e| AnalysisError::Pooling(e.to_string())))
        };
        let reference = match pool(1) {
            Some(r) => Some(r?),
            None => None,
        };
        let mut row = vec![agent.to_string()];
        let mut any = false;
        for &p in ps {
            match pool(p) {
                None => row.push("-".into()),
                Some(v) => {
                    let v = v?;
                    any = true;
                    row.push(match reference {
                        Some(r) if p != 1 && r > 0.0 => {
                            format!("{} {}", fmt_reward(v), fmt_delta(relative_delta(v, r)?))
                        }
                        _ => fmt_reward(v),
                    });
                }
            }
        }
        if any {
            rows.push(row);
        }
    }
    Ok(Table { header, rows })
}

/// Mean reward per summary count `s` at a fixed budget, deltas relative to
/// `s = 1`.
pub fn summary_table(runsets: &[RunSet], task: Task, budget: u32, ss: &[u32]) -> Result<Table, AnalysisError> {
    let mut header = vec!["agent".to_string()];
    header.extend(ss.iter().map(|s| format!("s={s}")));
    let mut by_agent: BTreeMap<&str, BTreeMap<u32, f64>> = BTreeMap::new();
    for rs in runsets
        .iter()
        .filter(|r| r.key.task == task && r.key.budget == budget && r.key.parallel_p == 1)
    {
        by_agent
            .entry(&rs.key.agent)
            .or_default()
            .insert(rs.key.summary_s, rs.mean());
    }
    let mut rows = Vec::new();
    for (agent, cells) in by_agent {
        let reference = cells.get(&1).copied();
        let mut row = vec![agent.to_string()];
        for s in ss {
            row.push(match (cells.get(s), reference) {
                (None, _) => "-".into(),
                (Some(&v), Some(r)) if *s != 1 && r > 0.0 => {
                    format!("{} {}", fmt_reward(v), fmt_delta(relative_delta(v, r)?))
                }
                (Some(&v), _) => fmt_reward(v),
            });
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Plot-ready series: `task agent N mean stderr n`, one line per point.
pub fn scaling_tsv(runsets: &[RunSet], b: usize, seed: u64) -> Result<String, AnalysisError> {
    let mut out = String::from("task\tagent\tN\tmean\tstderr\tn\n");
    let mut groups: BTreeMap<(Task, &str), Vec<(u32, Vec<f64>)>> = BTreeMap::new();
    for rs in runsets.iter().filter(|r| r.key.parallel_p == 1 && r.key.summary_s == 1) {
        groups
            .entry((rs.key.task, rs.key.agent.as_str()))
            .or_default()
            .push((rs.key.budget, rs.rewards.clone()));
    }
    for ((task, agent), runs) in groups {
        for p in scaling_series(&runs, b, seed)? {
            out.push_str(&format!(
                "{task}\t{agent}\t{}\t{:.6}\t{:.6}\t{}\n",
                p.budget, p.mean, p.stderr, p.n
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn means() {
        assert_eq!(mean_reward(&[0.5, 0.5]).unwrap(), 0.5);
        assert_eq!(mean_reward(&[1.0]).unwrap(), 1.0);
        assert_eq!(mean_reward(&[]), Err(AnalysisError::Empty));
    }

    #[test]
    fn bootstrap_of_constant_is_zero() {
        assert_eq!(bootstrap_stderr(&[0.7; 30], 500, 1).unwrap(), 0.0);
        assert_eq!(bootstrap_stderr(&[0.7], 500, 1), Err(AnalysisError::TooFew(1)));
    }

    #[test]
    fn bootstrap_matches_analytic_stderr() {
        let r: Vec<f64> = (0..100).map(|i| f64::from(i % 2)).collect();
        let analytic = {
            let m = 0.5;
            let s2 = r.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 99.0;
            (s2 / 100.0).sqrt()
        };
        let se = bootstrap_stderr(&r, DEFAULT_BOOTSTRAP_B, 7).unwrap();
        assert!((se - analytic).abs() / analytic < 0.10, "{se} vs {analytic}");
        assert!((se - 0.05).abs() < 0.005);
    }

    #[test]
    fn bootstrap_is_deterministic_and_stable() {
        let r: Vec<f64> = (0..60).map(|i| (f64::from(i) * 0.37).fract()).collect();
        let a = bootstrap_stderr(&r, 20_000, 1).unwrap();
        assert_eq!(a, bootstrap_stderr(&r, 20_000, 1).unwrap());
        let b = bootstrap_stderr(&r, 20_000, 2).unwrap();
        assert!((a - b).abs() / a < 0.02, "{a} vs {b}");
    }

    #[test]
    fn deltas_and_rounding() {
        assert_eq!(fmt_delta(relative_delta(0.52, 0.33).unwrap()), "↑58%");
        assert_eq!(fmt_delta(relative_delta(0.85, 0.91).unwrap()), "↓7%");
        assert_eq!(relative_delta(0.4, 0.4).unwrap(), 0.0);
        assert_eq!(fmt_delta(0.0), "0%");
        assert!(relative_delta(0.4, 0.0).is_err());
        assert_eq!(fmt_reward(0.125), "0.13");
        assert_eq!(fmt_reward(0.96499), "0.96");
        assert_eq!(fmt_reward(0.965), "0.97");
        assert_eq!(round_half_up(-6.5, 0), -7.0);
    }

    #[test]
    fn scaling_points_sorted() {
        let runs = vec![(48, vec![0.9, 1.0]), (36, vec![0.8, 0.9])];
        let s = scaling_series(&runs, 100, 0).unwrap();
        assert_eq!(s.iter().map(|p| p.budget).collect::<Vec<_>>(), vec![36, 48]);
        let single = scaling_series(&runs[..1], 100, 0).unwrap();
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn runset_rejects_out_of_range() {
        let key = RunKey {
            task: Task::Hill,
            instance_id: "x".into(),
            agent: "a".into(),
            budget: 4,
            parallel_p: 1,
            summary_s: 1,
        };
        assert!(RunSet::new(key.clone(), vec![1.2], vec![0]).is_err());
        assert!(RunSet::new(key.clone(), vec![], vec![]).is_err());
        assert!(RunSet::new(key, vec![0.3], vec![0]).is_ok());
    }
}
