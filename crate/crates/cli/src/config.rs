//! Experiment configuration: a TOML file, with command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use explore_bench::agents::{baseline_for, Agent, AgentSpec, ScriptedAgent};
use explore_bench::instance::{read_instance, Instance};
use explore_bench::presets::build_preset;
use explore_bench::protocol::{SubprocessAgent, WireConfig, DEFAULT_TIMEOUT_SECS};
use explore_bench::query::Task;
use serde::Deserialize;
use serde_json::Value;

use crate::ConfigError;

pub const OUT_DIR_ENV: &str = "EXPLORE_BENCH_OUT";
pub const DEFAULT_OUT_DIR: &str = "runs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Baseline,
    Subprocess,
    Scripted,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub kind: Option<AgentKind>,
    /// Numeric parameter overrides for the baselines.
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
    /// Program and arguments of a subprocess agent.
    #[serde(default)]
    pub command: Vec<String>,
    /// Reply lines replayed by a scripted agent, one per line.
    pub script: Option<PathBuf>,
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Option<Task>,
    pub preset: Option<String>,
    pub instance: Option<PathBuf>,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub budgets: Vec<u32>,
    pub episodes: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub parallel: Vec<u32>,
    #[serde(default)]
    pub summaries: Vec<u32>,
    pub out_dir: Option<PathBuf>,
    pub transcript: Option<bool>,
    #[serde(default)]
    pub allow_floor: bool,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())).into())
    }

    pub fn agent_kind(&self) -> AgentKind {
        self.agent.kind.unwrap_or(AgentKind::Baseline)
    }

    /// Default episodes per cell: baselines 500 (hill) or 200 runs; external
    /// agents 50, 100 and 60 for hill, tree and sat.
    pub fn episodes_for(&self, task: Task) -> usize {
        self.episodes.unwrap_or(match (self.agent_kind(), task) {
            (AgentKind::Baseline, Task::Hill) => 500,
            (AgentKind::Baseline, _) => 200,
            (_, Task::Hill) => 50,
            (_, Task::Tree) => 100,
            (_, Task::Sat) => 60,
        })
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| -> Result<()> { Err(ConfigError(m).into()) };
        match (&self.preset, &self.instance) {
            (None, None) => return err("either a preset or an instance file is required".into()),
            (Some(_), Some(_)) => return err("give a preset or an instance file, not both".into()),
            (_, Some(p)) if !p.exists() => return err(format!("instance file {} does not exist", p.display())),
            _ => {}
        }
        if self.budgets.is_empty() {
            return err("at least one budget is required".into());
        }
        if self.budgets.contains(&0) {
            return err("budgets must be positive".into());
        }
        if self.episodes == Some(0) {
            return err("episodes must be at least 1".into());
        }
        if self.parallel.contains(&0) || self.summaries.contains(&0) {
            return err("parallel and summary counts must be at least 1".into());
        }
        match self.agent_kind() {
            AgentKind::Subprocess if self.agent.command.is_empty() => {
                return err("a subprocess agent needs a command".into())
            }
            AgentKind::Scripted => match &self.agent.script {
                None => return err("a scripted agent needs a script file".into()),
                Some(p) if !p.exists() => return err(format!("script file {} does not exist", p.display())),
                _ => {}
            },
            _ => {}
        }
        Ok(())
    }

    /// The instance and the preset name it came from, if any.
    pub fn load_instance(&self) -> Result<(Instance, Option<String>)> {
        let (instance, preset) = match (&self.preset, &self.instance) {
            (Some(name), _) => (
                build_preset(name).map_err(|e| ConfigError(e.to_string()))?,
                Some(name.clone()),
            ),
            (None, Some(path)) => (
                read_instance(path).with_context(|| format!("loading {}", path.display()))?,
                None,
            ),
            (None, None) => bail!(ConfigError("no instance given".into())),
        };
        if let Some(task) = self.task {
            if task != instance.task() {
                bail!(ConfigError(format!(
                    "config says task {task} but the instance is a {} instance",
                    instance.task()
                )));
            }
        }
        Ok((instance, preset))
    }

    pub fn parallel_levels(&self) -> Vec<u32> {
        if self.parallel.is_empty() {
            vec![1]
        } else {
            self.parallel.clone()
        }
    }

    pub fn summary_levels(&self) -> Vec<u32> {
        if self.summaries.is_empty() {
            vec![1]
        } else {
            self.summaries.clone()
        }
    }

    pub fn wire_config(&self) -> WireConfig {
        WireConfig {
            timeout: Duration::from_secs(self.agent.timeout_secs.unwrap_or(DEFAULT_TIMEOUT_SECS)),
            ..WireConfig::default()
        }
    }
}

/// Builds agents for one task. Baseline parameters are checked up front so
/// the factory itself cannot fail.
pub struct AgentBuilder {
    task: Task,
    kind: AgentKind,
    params: BTreeMap<String, Value>,
    command: Vec<String>,
    script: Vec<String>,
    wire: WireConfig,
}

impl AgentBuilder {
    pub fn new(config: &ExperimentConfig, task: Task) -> Result<Self> {
        let kind = config.agent_kind();
        if kind == AgentKind::Baseline {
            baseline_for(task, &config.agent.params).map_err(|e| ConfigError(e.to_string()))?;
        }
        let script = match (&config.agent.script, kind) {
            (Some(path), AgentKind::Scripted) => std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?
                .lines()
                .map(str::to_string)
                .collect(),
            _ => Vec::new(),
        };
        Ok(AgentBuilder {
            task,
            kind,
            params: config.agent.params.clone(),
            command: config.agent.command.clone(),
            script,
            wire: config.wire_config(),
        })
    }

    pub fn build(&self) -> Box<dyn Agent> {
        match self.kind {
            AgentKind::Baseline => baseline_for(self.task, &self.params).expect("parameters checked"),
            AgentKind::Subprocess => Box::new(SubprocessAgent::new(
                self.command[0].clone(),
                self.command[1..].to_vec(),
                self.wire,
            )),
            AgentKind::Scripted => Box::new(ScriptedAgent::from_lines(self.script.clone()).conversational(true)),
        }
    }

    pub fn spec(&self) -> AgentSpec {
        self.build().spec()
    }
}

/// Parses `key=value` pairs; values are JSON when they parse as JSON and
/// strings otherwise.
pub fn parse_params(pairs: &[String]) -> Result<BTreeMap<String, Value>> {
    let mut out = BTreeMap::new();
    for pair in pairs {
        let Some((k, v)) = pair.split_once('=') else {
            bail!(ConfigError(format!("expected key=value, got `{pair}`")));
        };
        let value = serde_json::from_str(v.trim()).unwrap_or_else(|_| Value::from(v.trim()));
        out.insert(k.trim().to_string(), value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg: ExperimentConfig = toml::from_str(
            r#"
            preset = "tree-main"
            budgets = [36, 48]
            episodes = 5
            seed = 3
            summaries = [1, 4]

            [agent]
            kind = "baseline"
            params = { tau = 2.5 }
            "#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.budgets, vec![36, 48]);
        assert_eq!(cfg.summary_levels(), vec![1, 4]);
        assert_eq!(cfg.agent.params["tau"], Value::from(2.5));
        let (inst, preset) = cfg.load_instance().unwrap();
        assert_eq!(inst.task(), Task::Tree);
        assert_eq!(preset.as_deref(), Some("tree-main"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("budgetz = [1]").is_err());
    }

    #[test]
    fn default_run_counts() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(cfg.episodes_for(Task::Hill), 500);
        assert_eq!(cfg.episodes_for(Task::Sat), 200);
        cfg.agent.kind = Some(AgentKind::Subprocess);
        assert_eq!(cfg.episodes_for(Task::Tree), 100);
        assert_eq!(cfg.episodes_for(Task::Sat), 60);
    }

    #[test]
    fn params_parse_as_json_first() {
        let p = parse_params(&["alpha=0.3".into(), "name=x".into()]).unwrap();
        assert_eq!(p["alpha"], Value::from(0.3));
        assert_eq!(p["name"], Value::from("x"));
        assert!(parse_params(&["alpha".into()]).is_err());
    }
}
