//! Running experiment grids and writing their logs.

use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use explore_bench::analysis::{agent_label, summarize, DEFAULT_BOOTSTRAP_B};
use explore_bench::harness::{
    episode_seed, run_many, run_many_parallel, write_manifest, EpisodeConfig, EpisodeLog, JsonlSink, RunManifest,
    Termination,
};
use explore_bench::instance::Instance;
use rayon::ThreadPool;

use crate::config::{AgentBuilder, ExperimentConfig};
use crate::ConfigError;

/// One (budget, p, s) cell of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub budget: u32,
    pub p: u32,
    pub s: u32,
}

pub struct CellResult {
    pub cell: Cell,
    pub log_path: PathBuf,
    pub logs: Vec<EpisodeLog>,
    /// Best-thread normalized reward per episode.
    pub rewards: Vec<f64>,
}

pub fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &budget in &config.budgets {
        for p in config.parallel_levels() {
            for s in config.summary_levels() {
                out.push(Cell { budget, p, s });
            }
        }
    }
    out
}

fn file_stem(instance: &Instance, preset: Option<&str>, agent: &str, cell: Cell) -> String {
    let inst = preset.map(str::to_string).unwrap_or_else(|| instance.id());
    let safe: String = agent
        .chars()
        .filter_map(|c| match c {
            '(' | ',' => Some('-'),
            '=' | ')' | ' ' => None,
            c if c.is_ascii_alphanumeric() || c == '.' || c == '-' => Some(c),
            _ => Some('_'),
        })
        .collect();
    format!("{inst}_{safe}_N{}_p{}_s{}", cell.budget, cell.p, cell.s)
}

/// Whether a termination counts as an episode failure for the exit code.
pub fn is_failure(t: &Termination) -> bool {
    !matches!(t, Termination::Completed | Termination::RetryExhausted)
}

/// Runs one cell and writes its log file and manifest into `out_dir`.
pub fn run_cell(
    instance: &Instance,
    preset: Option<&str>,
    builder: &AgentBuilder,
    config: &ExperimentConfig,
    cell: Cell,
    out_dir: &Path,
    pool: &ThreadPool,
) -> Result<CellResult> {
    let task = instance.task();
    let episodes = config.episodes_for(task);
    let master = config.seed.unwrap_or(0);
    let mut base = EpisodeConfig::new(cell.budget, master).with_summaries(cell.s);
    base.transcript = config.transcript;
    if cell.p > 1 {
        let per = if cell.budget.is_multiple_of(cell.p) || config.allow_floor {
            cell.budget / cell.p
        } else {
            0
        };
        if per == 0 {
            return Err(ConfigError(format!("budget {} cannot be split over p={}", cell.budget, cell.p)).into());
        }
        base.budget = per;
        base.validate().map_err(|e| ConfigError(e.to_string()))?;
        base.budget = cell.budget;
    } else {
        base.validate().map_err(|e| ConfigError(e.to_string()))?;
    }

    let factory = || builder.build();
    let (logs, rewards) = pool.install(|| -> Result<_> {
        if cell.p == 1 {
            let logs = run_many(instance, &factory, &base, master, episodes)?;
            let rewards = logs.iter().map(|l| l.final_normalized).collect();
            Ok((logs, rewards))
        } else {
            let outcomes = run_many_parallel(instance, &factory, &base, master, episodes, cell.p, config.allow_floor)?;
            let rewards = outcomes.iter().map(|o| o.reward).collect();
            Ok((outcomes.into_iter().flat_map(|o| o.logs).collect(), rewards))
        }
    })?;

    let spec = builder.spec();
    let stem = file_stem(instance, preset, &agent_label(&spec), cell);
    let log_path = out_dir.join(format!("{stem}.jsonl"));
    File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
    let sink = JsonlSink::create(&log_path)?;
    for log in &logs {
        sink.append(log)?;
    }
    sink.flush()?;
    let manifest = RunManifest {
        schema_version: explore_bench::harness::LOG_SCHEMA_VERSION,
        code_version: RunManifest::code_version(),
        task,
        instance_id: instance.id(),
        preset: preset.map(str::to_string),
        agent: spec,
        budget: cell.budget,
        intervention: explore_bench::harness::InterventionSpec {
            parallel_p: cell.p,
            summary_s: cell.s,
        },
        master_seed: master,
        episodes,
        episode_seeds: (0..episodes as u64).map(|j| episode_seed(master, j)).collect(),
        log_file: log_path.file_name().expect("file name").to_string_lossy().into_owned(),
    };
    write_manifest(&out_dir.join(format!("{stem}.manifest.json")), &manifest)?;
    Ok(CellResult {
        cell,
        log_path,
        logs,
        rewards,
    })
}

/// One progress line per finished cell, on stderr.
pub fn report(task: explore_bench::query::Task, r: &CellResult, seed: u64) {
    let stat = summarize(&r.rewards, DEFAULT_BOOTSTRAP_B, seed);
    let failures = r.logs.iter().filter(|l| is_failure(&l.termination)).count();
    match stat {
        Ok(s) => eprintln!(
            "{task} N={} p={} s={}: {} episodes, mean {:.3} (stderr {:.3}){} -> {}",
            r.cell.budget,
            r.cell.p,
            r.cell.s,
            r.rewards.len(),
            s.mean,
            s.stderr,
            if failures > 0 {
                format!(", {failures} failed")
            } else {
                String::new()
            },
            r.log_path.display()
        ),
        Err(e) => eprintln!("{task} N={}: {e}", r.cell.budget),
    }
}
