use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use explore_bench::analysis::{
    budget_table, parallel_table, runsets_from_logs, scaling_tsv, summarize, summary_table, RunSet,
};
use explore_bench::harness::{read_logs, EpisodeLog};
use explore_bench::hill::HillGenParams;
use explore_bench::instance::{public_to_string, write_instance, Instance};
use explore_bench::presets::{
    all_presets, build_preset, find_preset, main_preset, random_params, GenParams, PresetSource, PINNED_SEED,
    SWEEP_LEVELS,
};
use explore_bench::query::Task;
use explore_bench::theory::{approx_v2, budget_threshold, condition_table, fit_power_law, success_rate, PowerLawModel};
use serde_json::Value;

use crate::config::{parse_params, AgentBuilder, AgentKind, ExperimentConfig};
use crate::run::{cells, is_failure, report, run_cell};
use crate::{AnalyzeArgs, ConfigError, EpisodeFailure, GenArgs, PoolArgs, RunArgs, SweepArgs, TheoryArgs};

fn config_err(e: impl std::fmt::Display) -> anyhow::Error {
    ConfigError(e.to_string()).into()
}

/// One-line structural summary of an instance.
pub fn describe(instance: &Instance) -> String {
    let body = match instance {
        Instance::Hill(h) => format!(
            "hill: {} hills, needle height {} at x={}, global max {:.6}",
            h.hills().len(),
            h.needle().height,
            h.needle().center,
            h.global_max()
        ),
        Instance::Tree(t) => format!("tree: {} nodes, max value {}", t.node_count(), t.max_value()),
        Instance::Sat(s) => format!(
            "sat: n={}, m={}, w_gold={}, gold arity {}",
            s.n(),
            s.m(),
            s.w_gold(),
            s.gold_vars().len()
        ),
    };
    format!("{body} (id {})", instance.id())
}

/// Default generator parameters of a task: the main evaluated configuration
/// (hill uses levels k=3, k'=4).
fn base_params(task: Task) -> GenParams {
    match task {
        Task::Hill => GenParams::Hill(HillGenParams::with_levels(3, 4, PINNED_SEED)),
        _ => match find_preset(main_preset(task)).expect("main preset exists").source {
            PresetSource::Generated(p) => p,
            PresetSource::Literal(_) => unreachable!("only hill presets are literal"),
        },
    }
}

fn explicit_params(task: Task, pairs: &[String], seed: Option<u64>) -> Result<GenParams> {
    let mut value = serde_json::to_value(base_params(task)).expect("params serialize");
    let map = value.as_object_mut().expect("params are an object");
    for (k, v) in parse_params(pairs)? {
        if k == "task" || !map.contains_key(&k) {
            bail!(ConfigError(format!("unknown {task} generator parameter `{k}`")));
        }
        map.insert(k, v);
    }
    if let Some(s) = seed {
        map.insert("seed".into(), Value::from(s));
    }
    serde_json::from_value(value).map_err(config_err)
}

pub fn gen(args: GenArgs) -> Result<()> {
    if args.list {
        for p in all_presets() {
            println!("{}\t{}", p.name, p.task);
        }
        return Ok(());
    }
    let (instance, preset) = match (&args.preset, args.task) {
        (Some(name), _) => (build_preset(name).map_err(config_err)?, Some(name.as_str())),
        (None, Some(task)) => {
            let params = match args.random {
                Some(seed) => random_params(task, seed),
                None => explicit_params(task, &args.params, args.seed)?,
            };
            (params.generate().map_err(config_err)?, None)
        }
        (None, None) => bail!(ConfigError("give --preset, --task or --list".into())),
    };
    println!("{}", describe(&instance));
    if let Some(out) = &args.out {
        if args.public {
            std::fs::write(out, public_to_string(&instance))?;
        } else {
            write_instance(out, &instance, preset)?;
        }
        eprintln!("wrote {}", out.display());
    }
    Ok(())
}

fn merge_run_args(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if args.task.is_some() {
        cfg.task = args.task;
    }
    if let Some(p) = &args.preset {
        cfg.preset = Some(p.clone());
        cfg.instance = None;
    }
    if let Some(p) = &args.instance {
        cfg.instance = Some(p.clone());
        cfg.preset = None;
    }
    if args.agent.is_some() {
        cfg.agent.kind = args.agent;
    }
    cfg.agent.params.extend(parse_params(&args.params)?);
    if let Some(c) = &args.command {
        cfg.agent.command = vec!["sh".into(), "-c".into(), c.clone()];
        cfg.agent.kind.get_or_insert(AgentKind::Subprocess);
    }
    if let Some(s) = &args.script {
        cfg.agent.script = Some(s.clone());
        cfg.agent.kind.get_or_insert(AgentKind::Scripted);
    }
    if args.timeout.is_some() {
        cfg.agent.timeout_secs = args.timeout;
    }
    if !args.budgets.is_empty() {
        cfg.budgets = args.budgets.clone();
    }
    if args.episodes.is_some() {
        cfg.episodes = args.episodes;
    }
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if !args.parallel.is_empty() {
        cfg.parallel = args.parallel.clone();
    }
    if !args.summaries.is_empty() {
        cfg.summaries = args.summaries.clone();
    }
    cfg.allow_floor |= args.allow_floor;
    if args.transcript.is_some() {
        cfg.transcript = args.transcript;
    }
    if let Some(o) = &args.out {
        cfg.out_dir = Some(o.clone());
    }
    Ok(cfg)
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            bail!(ConfigError("--jobs must be at least 1".into()));
        }
        b = b.num_threads(j);
    }
    b.build().context("starting worker pool")
}

/// Runs every cell of `cfg`; returns the per-cell results.
fn run_grid(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<Vec<crate::run::CellResult>> {
    cfg.validate()?;
    let (instance, preset) = cfg.load_instance()?;
    let builder = AgentBuilder::new(cfg, instance.task())?;
    let out_dir = cfg.out_dir();
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let pool = thread_pool(jobs)?;
    eprintln!("{}", describe(&instance));
    let mut results = Vec::new();
    for cell in cells(cfg) {
        let r = run_cell(&instance, preset.as_deref(), &builder, cfg, cell, &out_dir, &pool)?;
        report(instance.task(), &r, cfg.seed.unwrap_or(0));
        results.push(r);
    }
    Ok(results)
}

fn check_failures(results: &[crate::run::CellResult]) -> Result<()> {
    let failed: Vec<&EpisodeLog> = results
        .iter()
        .flat_map(|r| &r.logs)
        .filter(|l| is_failure(&l.termination))
        .collect();
    if let Some(first) = failed.first() {
        bail!(EpisodeFailure(format!(
            "{} episode(s) failed; first: seed {} ended with {:?}",
            failed.len(),
            first.seed,
            first.termination
        )));
    }
    Ok(())
}

pub fn run(args: RunArgs) -> Result<()> {
    let cfg = merge_run_args(&args)?;
    let results = run_grid(&cfg, args.jobs)?;
    check_failures(&results)
}

fn load_runsets(paths: &[PathBuf]) -> Result<Vec<RunSet>> {
    let mut logs = Vec::new();
    for p in paths {
        logs.extend(read_logs(p).with_context(|| format!("reading {}", p.display()))?);
    }
    if logs.is_empty() {
        bail!(ConfigError("the log files hold no episodes".into()));
    }
    runsets_from_logs(&logs).map_err(config_err)
}

fn tasks_of(runsets: &[RunSet]) -> Vec<Task> {
    let mut t: Vec<Task> = runsets.iter().map(|r| r.key.task).collect();
    t.sort();
    t.dedup();
    t
}

pub fn pool(args: PoolArgs) -> Result<()> {
    let runsets = load_runsets(&args.logs)?;
    let task = match args.task {
        Some(t) => t,
        None => match tasks_of(&runsets)[..] {
            [t] => t,
            _ => bail!(ConfigError("logs cover several tasks; pick one with --task".into())),
        },
    };
    let table = parallel_table(&runsets, task, args.budget, &args.p).map_err(config_err)?;
    if table.rows.is_empty() {
        bail!(ConfigError(format!(
            "no single-thread {task} runs at budget N/p for N={} and p in {:?}",
            args.budget, args.p
        )));
    }
    print!("{}", table.to_tsv());
    Ok(())
}

pub fn analyze(args: AnalyzeArgs) -> Result<()> {
    let runsets = load_runsets(&args.logs)?;
    let mut out = String::from("# runs\ntask\tinstance\tagent\tN\tp\ts\tn\tmean\tstderr\n");
    for rs in &runsets {
        let s = summarize(&rs.rewards, args.bootstrap, args.seed).map_err(config_err)?;
        let k = &rs.key;
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.4}\t{:.4}\n",
            k.task, k.instance_id, k.agent, k.budget, k.parallel_p, k.summary_s, s.n, s.mean, s.stderr
        ));
    }
    let budgets = budget_table(&runsets);
    if !budgets.rows.is_empty() {
        out.push_str("\n# mean reward by budget\n");
        out.push_str(&budgets.to_tsv());
    }
    for task in tasks_of(&runsets) {
        let single = |r: &&RunSet| r.key.task == task && r.key.parallel_p == 1;
        if !args.parallel.is_empty() {
            let n = args
                .budget
                .or_else(|| runsets.iter().filter(single).map(|r| r.key.budget).max())
                .expect("task has runs");
            let mut ps = vec![1];
            ps.extend(args.parallel.iter().copied().filter(|&p| p != 1));
            let t = parallel_table(&runsets, task, n, &ps).map_err(config_err)?;
            out.push_str(&format!("\n# {task} pooled parallel, N={n}\n{}", t.to_tsv()));
        }
        let mut by_budget: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for r in runsets.iter().filter(single) {
            by_budget.entry(r.key.budget).or_default().push(r.key.summary_s);
        }
        for (n, mut ss) in by_budget {
            if args.budget.is_some_and(|b| b != n) || ss.iter().all(|&s| s == 1) {
                continue;
            }
            ss.sort();
            ss.dedup();
            let t = summary_table(&runsets, task, n, &ss).map_err(config_err)?;
            out.push_str(&format!("\n# {task} summaries, N={n}\n{}", t.to_tsv()));
        }
    }
    let series = scaling_tsv(&runsets, args.bootstrap, args.seed).map_err(config_err)?;
    match &args.series {
        Some(path) => std::fs::write(path, &series).with_context(|| format!("writing {}", path.display()))?,
        None => out.push_str(&format!("\n# scaling\n{series}")),
    }
    print!("{out}");
    Ok(())
}

pub fn theory(args: TheoryArgs) -> Result<()> {
    if !args.fit.is_empty() {
        return theory_fit(&args);
    }
    let model = PowerLawModel::new(args.c, args.alpha).map_err(config_err)?;
    println!("# thresholds (c={}, alpha={})", args.c, args.alpha);
    println!("p\ty_star\tv_p\tv_p_clamped");
    for &p in &args.p {
        let t = budget_threshold(&model, p).map_err(config_err)?;
        println!("{}\t{:.12}\t{:.12}\t{:.12}", t.p, t.y_star, t.v_p, t.v_p_clamped);
    }
    if args.p.contains(&2) {
        println!("approx v_2 = 4 ln2 (1 - alpha) / c = {:.12}", approx_v2(&model));
    }
    if args.points == 0 {
        bail!(ConfigError("--points must be at least 1".into()));
    }
    for &p in &args.p {
        println!("\n# benefit condition, p={p}");
        println!("x\tparallel\tsingle\tholds");
        for row in condition_table(&model, p, args.points).map_err(config_err)? {
            println!("{:.4}\t{:.6}\t{:.6}\t{}", row.x, row.parallel, row.single, row.holds);
        }
    }
    Ok(())
}

/// Fits `q(x) = c x^alpha` with `x = N / N_max` per (task, instance, agent).
fn theory_fit(args: &TheoryArgs) -> Result<()> {
    let runsets = load_runsets(&args.fit)?;
    let mut groups: BTreeMap<(Task, &str, &str), Vec<(u32, f64)>> = BTreeMap::new();
    for rs in runsets.iter().filter(|r| r.key.parallel_p == 1 && r.key.summary_s == 1) {
        groups
            .entry((rs.key.task, &rs.key.instance_id, &rs.key.agent))
            .or_default()
            .push((rs.key.budget, success_rate(&rs.rewards, args.threshold)));
    }
    println!("task\tinstance\tagent\tN_max\tc\talpha\tpoints");
    for ((task, inst, agent), pts) in groups {
        let n_max = pts.iter().map(|p| p.0).max().expect("nonempty group");
        let xs: Vec<(f64, f64)> = pts.iter().map(|&(n, q)| (f64::from(n) / f64::from(n_max), q)).collect();
        match fit_power_law(&xs) {
            Ok(f) => println!(
                "{task}\t{inst}\t{agent}\t{n_max}\t{:.6}\t{:.6}\t{}",
                f.c, f.alpha, f.points_used
            ),
            Err(e) => println!("{task}\t{inst}\t{agent}\t{n_max}\t-\t-\t{e}"),
        }
    }
    Ok(())
}

/// `a,b,c` or `start:stop:step` (inclusive of stop up to rounding).
fn parse_values(spec: &str) -> Result<Vec<f64>> {
    let bad = || ConfigError(format!("cannot parse values `{spec}`"));
    if let [a, b, step] = spec.split(':').collect::<Vec<_>>()[..] {
        let (a, b, step): (f64, f64, f64) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
            step.trim().parse().map_err(|_| bad())?,
        );
        if !(step > 0.0) || b < a {
            bail!(bad());
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| ((a + step * i as f64) * 1e9).round() / 1e9).collect());
    }
    spec.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| bad().into()))
        .collect()
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let mut base = ExperimentConfig {
        task: Some(args.task),
        budgets: vec![args.budget],
        episodes: args.episodes,
        seed: Some(args.seed),
        out_dir: args.out.clone(),
        ..ExperimentConfig::default()
    };
    let mut rows = Vec::new();
    match (&args.param, &args.values) {
        (Some(param), Some(values)) => {
            base.preset = Some(main_preset(args.task).into());
            println!("{param}\tmean\tstderr\tn");
            for v in parse_values(values)? {
                let mut cfg = base.clone();
                cfg.agent.params.insert(param.clone(), Value::from(v));
                let results = run_grid(&cfg, args.jobs)?;
                let s = summarize(
                    &results[0].rewards,
                    explore_bench::analysis::DEFAULT_BOOTSTRAP_B,
                    args.seed,
                )
                .map_err(config_err)?;
                rows.push(format!("{v}\t{:.4}\t{:.4}\t{}", s.mean, s.stderr, s.n));
            }
        }
        (None, None) => {
            let levels = SWEEP_LEVELS
                .iter()
                .find(|(t, _)| *t == args.task)
                .expect("every task has a sweep")
                .1
                .clone();
            println!("level\tpreset\tmean\tstderr\tn");
            for level in levels {
                let name = match args.task {
                    Task::Hill => format!("hill-sweep-k{level}"),
                    Task::Tree => format!("tree-sweep-r{level}"),
                    Task::Sat => format!("sat-sweep-k{level}"),
                };
                let mut cfg = base.clone();
                cfg.preset = Some(name.clone());
                let results = run_grid(&cfg, args.jobs)?;
                let s = summarize(
                    &results[0].rewards,
                    explore_bench::analysis::DEFAULT_BOOTSTRAP_B,
                    args.seed,
                )
                .map_err(config_err)?;
                rows.push(format!("{level}\t{name}\t{:.4}\t{:.4}\t{}", s.mean, s.stderr, s.n));
            }
        }
        _ => bail!(ConfigError("--param and --values go together".into())),
    }
    for r in rows {
        println!("{r}");
    }
    Ok(())
}

/// Answers each observation with the next line of `trace`, then exits.
pub fn replay_agent(trace: &Path) -> Result<()> {
    let text = std::fs::read_to_string(trace).with_context(|| format!("reading {}", trace.display()))?;
    let mut replies = text.lines();
    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    if lines.next().transpose()?.is_none() {
        return Ok(());
    }
    let mut out = std::io::stdout().lock();
    while lines.next().transpose()?.is_some() {
        let Some(reply) = replies.next() else {
            return Ok(());
        };
        writeln!(out, "{reply}")?;
        out.flush()?;
    }
    Ok(())
}
