//! Many-episode runs on a worker pool, and their persistent logs.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_episode, run_parallel, EpisodeConfig, EpisodeLog, HarnessError, InterventionSpec, ParallelOutcome};
use crate::agents::{Agent, AgentSpec};
use crate::instance::Instance;
use crate::query::Task;
use crate::rng::{derive_seed, stream};

pub type AgentFactory<'a> = dyn Fn() -> Box<dyn Agent> + Sync + 'a;

/// Seed of episode `j` in a run set.
pub fn episode_seed(master: u64, j: u64) -> u64 {
    derive_seed(master, stream::EPISODE_BASE + j)
}

/// Runs `episodes` single episodes concurrently; results come back in
/// episode order regardless of scheduling.
pub fn run_many(
    instance: &Instance,
    factory: &AgentFactory<'_>,
    base: &EpisodeConfig,
    master_seed: u64,
    episodes: usize,
) -> Result<Vec<EpisodeLog>, HarnessError> {
    (0..episodes)
        .into_par_iter()
        .map(|j| {
            let mut cfg = base.clone();
            cfg.seed = episode_seed(master_seed, j as u64);
            let mut agent = factory();
            run_episode(instance, agent.as_mut(), &cfg)
        })
        .collect()
}

/// Parallel-split counterpart of [`run_many`].
pub fn run_many_parallel(
    instance: &Instance,
    factory: &AgentFactory<'_>,
    base: &EpisodeConfig,
    master_seed: u64,
    episodes: usize,
    p: u32,
    allow_floor: bool,
) -> Result<Vec<ParallelOutcome>, HarnessError> {
    (0..episodes)
        .into_par_iter()
        .map(|j| {
            let mut cfg = base.clone();
            cfg.seed = episode_seed(master_seed, j as u64);
            run_parallel(instance, &|| factory(), &cfg, p, allow_floor)
        })
        .collect()
}

/// Append-only JSON-lines log. Each record is written whole under a lock.
pub struct JsonlSink {
    writer: Mutex<BufWriter<File>>,
}

impl JsonlSink {
    pub fn create(path: &Path) -> Result<Self, HarnessError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(JsonlSink {
            writer: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn append(&self, log: &EpisodeLog) -> Result<(), HarnessError> {
        let mut line = log.to_json_line();
        line.push('\n');
        let mut w = self.writer.lock().expect("log writer poisoned");
        w.write_all(line.as_bytes())?;
        Ok(())
    }

    pub fn flush(&self) -> Result<(), HarnessError> {
        self.writer.lock().expect("log writer poisoned").flush()?;
        Ok(())
    }
}

pub fn read_logs(path: &Path) -> Result<Vec<EpisodeLog>, HarnessError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Companion record of a run set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub code_version: String,
    pub task: Task,
    pub instance_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub agent: AgentSpec,
    pub budget: u32,
    pub intervention: InterventionSpec,
    pub master_seed: u64,
    pub episodes: usize,
    pub episode_seeds: Vec<u64>,
    pub log_file: String,
}

impl RunManifest {
    pub fn code_version() -> String {
        env!("CARGO_PKG_VERSION").to_string()
    }
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(manifest)? + "\n";
    std::fs::write(path, text)?;
    Ok(())
}
