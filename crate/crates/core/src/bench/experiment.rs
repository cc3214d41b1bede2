//! Seeded trial orchestration and result files.
//!
//! An output directory holds `config.toml` (self-contained copy of the
//! configuration), `logs/trial-NNNN.jsonl`, `memory/trial-NNNN.json`,
//! `trials.csv` (per-trial metrics), `summary.csv` (one row) and
//! `timing.csv`. Wall-clock figures live only in the logs and `timing.csv`,
//! so identical configurations give byte-identical summaries.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Experiment, ExperimentConfig, Preset, StartKind, TrapSet};
use super::env::AnyEnv;
use super::metrics::{
    detect_trap_episodes, escape_rate, escaped_from_start, rank_auc, realized_cost_to_go,
    sample_efficiency, trailing_mean, trap_frequency, value_consistency, RunningStats, TrapTrace,
};
use crate::controller::{run_episode, EpisodeLog, MaMppi, StepRecord};
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::memory::MemoryStore;

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "MAMPPI_WORKERS";

/// Worker threads for trial execution: `MAMPPI_WORKERS`, else the number of
/// available cores.
pub fn workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// One finished trial.
#[derive(Debug, Clone)]
pub struct Trial {
    pub index: usize,
    pub seed: u64,
    pub start: Vec<f64>,
    pub log: EpisodeLog,
    pub memory: MemoryStore,
}

pub fn run_trial(exp: &Experiment, index: usize) -> Result<Trial> {
    let seed = exp.seed(index);
    let mut cfg = exp.controller.clone();
    cfg.mppi.seed = seed;
    let mut ctrl = MaMppi::new(cfg, exp.env.clone())?;
    let start = exp.start(index);
    let log = run_episode(&mut ctrl, &start, exp.config.steps)?;
    Ok(Trial { index, seed, start, log, memory: ctrl.memory().clone() })
}

/// Runs every trial on a pool of [`workers`] threads. Each trial owns its
/// controller, memory and noise streams; results come back in trial order.
pub fn run_trials(exp: &Experiment) -> Result<Vec<Trial>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers())
        .build()
        .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
    pool.install(|| (0..exp.config.trials).into_par_iter().map(|i| run_trial(exp, i)).collect())
}

/// Metrics of one trial, computed from its log alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub trial: usize,
    pub seed: u64,
    pub cumulative_reward: f64,
    pub cumulative_cost: f64,
    pub final_value: f64,
    pub trap_events: usize,
    pub trapped: bool,
    /// Only for trials started at a trap state.
    pub escaped: Option<bool>,
    /// Final state in the high-return region.
    pub success: bool,
    pub collided: bool,
    pub diverged: bool,
    /// Steps to 80% of the asymptotic value improvement.
    pub n80: Option<usize>,
    pub value_consistency: Option<f64>,
}

pub fn trial_metrics(exp: &Experiment, trial: usize, seed: u64, log: &EpisodeLog) -> TrialMetrics {
    let env = &exp.env;
    let features: Vec<Vec<f64>> = log.records.iter().map(|r| env.projected(&r.state)).collect();
    let values: Vec<f64> = log.records.iter().map(|r| r.value).collect();
    let goal_value = env.goal().map(|g| env.value(&g)).unwrap_or(0.0);
    let trace = TrapTrace { features: &features, values: &values, goal_value, value_scale: env.value_scale() };
    let events = detect_trap_episodes(&trace, &exp.criteria);

    let final_value = env.value(&env.projected(&log.final_state));
    let q = (-(final_value - goal_value) / env.value_scale()).exp();

    let curve: Vec<f64> = values.iter().map(|v| values[0] - v).collect();
    let n80 = trailing_mean(&curve, 0.1).filter(|&a| a > 0.0).and_then(|a| sample_efficiency(&curve, a));

    let costs: Vec<f64> = log.records.iter().map(|r| r.cost).collect();
    let realized = realized_cost_to_go(&costs, exp.controller.mppi.horizon);
    let predicted: Vec<f64> = log.records.iter().take(realized.len()).map(|r| r.predicted_cost).collect();

    TrialMetrics {
        trial,
        seed,
        cumulative_reward: log.cumulative_reward(),
        cumulative_cost: log.cumulative_cost(),
        final_value,
        trap_events: events.len(),
        trapped: !events.is_empty(),
        escaped: (exp.config.starts == StartKind::Trap).then(|| escaped_from_start(&trace, &exp.criteria)),
        success: !log.diverged && q >= exp.criteria.value_threshold_frac,
        collided: log.collided(),
        diverged: log.diverged,
        n80,
        value_consistency: value_consistency(&predicted, &realized).ok(),
    }
}

/// The one-row experiment summary: mean and standard deviation per metric,
/// rates in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub preset: Preset,
    pub env: String,
    pub scenario: String,
    pub starts: StartKind,
    pub trials: usize,
    pub steps: usize,
    pub config_hash: String,
    pub cumulative_reward_mean: f64,
    pub cumulative_reward_std: f64,
    pub cumulative_cost_mean: f64,
    pub cumulative_cost_std: f64,
    pub final_value_mean: f64,
    pub final_value_std: f64,
    pub n80_mean: Option<f64>,
    pub n80_std: Option<f64>,
    pub n80_count: usize,
    pub value_consistency_mean: Option<f64>,
    pub value_consistency_std: Option<f64>,
    pub value_consistency_count: usize,
    pub trap_frequency: f64,
    pub escape_rate: Option<f64>,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub diverged: usize,
}

pub fn summarize(exp: &Experiment, trials: &[TrialMetrics]) -> Result<Summary> {
    if trials.is_empty() {
        return Err(Error::Metric("summary over zero trials".into()));
    }
    let stats = |f: &dyn Fn(&TrialMetrics) -> Option<f64>| -> RunningStats {
        trials.iter().filter_map(f).collect()
    };
    let reward = stats(&|t| Some(t.cumulative_reward)).finish();
    let cost = stats(&|t| Some(t.cumulative_cost)).finish();
    let final_value = stats(&|t| Some(t.final_value)).finish();
    let n80 = stats(&|t| t.n80.map(|n| n as f64)).finish();
    let rho = stats(&|t| t.value_consistency).finish();
    let flags = |f: &dyn Fn(&TrialMetrics) -> bool| -> Vec<bool> { trials.iter().map(f).collect() };
    let escapes: Vec<bool> = trials.iter().filter_map(|t| t.escaped).collect();
    let some = |m: f64, n: usize| (n > 0).then_some(m);
    Ok(Summary {
        experiment: exp.config.name.clone(),
        preset: exp.config.preset,
        env: exp.env.name().to_string(),
        scenario: exp.env.scenario_name(),
        starts: exp.config.starts,
        trials: trials.len(),
        steps: exp.config.steps,
        config_hash: exp.hash.clone(),
        cumulative_reward_mean: reward.mean,
        cumulative_reward_std: reward.std,
        cumulative_cost_mean: cost.mean,
        cumulative_cost_std: cost.std,
        final_value_mean: final_value.mean,
        final_value_std: final_value.std,
        n80_mean: some(n80.mean, n80.n),
        n80_std: some(n80.std, n80.n),
        n80_count: n80.n,
        value_consistency_mean: some(rho.mean, rho.n),
        value_consistency_std: some(rho.std, rho.n),
        value_consistency_count: rho.n,
        trap_frequency: trap_frequency(&flags(&|t| t.trapped))?,
        escape_rate: if escapes.is_empty() { None } else { Some(escape_rate(&escapes)?) },
        success_rate: trap_frequency(&flags(&|t| t.success))?,
        collision_rate: trap_frequency(&flags(&|t| t.collided))?,
        diverged: trials.iter().filter(|t| t.diverged).count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogHeader {
    pub config_hash: String,
    pub trial: usize,
    pub seed: u64,
    pub env: String,
    pub preset: Preset,
    pub start: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogEnd {
    pub diverged: bool,
    pub final_state: Vec<f64>,
}

/// One line of a trial log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogLine {
    Header(LogHeader),
    Step(StepRecord),
    End(LogEnd),
}

pub fn write_log(path: &Path, header: &LogHeader, log: &EpisodeLog) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut line = |l: &LogLine| -> Result<()> {
        serde_json::to_writer(&mut w, l)?;
        w.write_all(b"\n")?;
        Ok(())
    };
    line(&LogLine::Header(header.clone()))?;
    for r in &log.records {
        line(&LogLine::Step(r.clone()))?;
    }
    line(&LogLine::End(LogEnd { diverged: log.diverged, final_state: log.final_state.clone() }))?;
    w.flush()?;
    Ok(())
}

pub fn read_log(path: &Path) -> Result<(LogHeader, EpisodeLog)> {
    let mut header = None;
    let mut records = Vec::new();
    let mut end = None;
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line)? {
            LogLine::Header(h) => header = Some(h),
            LogLine::Step(r) => records.push(r),
            LogLine::End(e) => end = Some(e),
        }
    }
    let bad = |what: &str| Error::Metric(format!("{}: missing {what} line", path.display()));
    let header = header.ok_or_else(|| bad("header"))?;
    let end = end.ok_or_else(|| bad("end"))?;
    let log = EpisodeLog { env: header.env.clone(), records, diverged: end.diverged, final_state: end.final_state };
    Ok((header, log))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

fn csv_error(e: csv::Error) -> Error {
    Error::Metric(format!("csv: {e}"))
}

#[derive(Debug, Clone, Serialize)]
struct TimingRow {
    trial: usize,
    steps: usize,
    wall_time_s: f64,
    mean_step_ms: f64,
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunReport {
    pub dir: PathBuf,
    pub summary: Summary,
    pub trials: Vec<TrialMetrics>,
}

fn trial_file(dir: &Path, sub: &str, i: usize, ext: &str) -> PathBuf {
    dir.join(sub).join(format!("trial-{i:04}.{ext}"))
}

/// Writes a copy of the configuration that resolves from inside `dir`.
fn write_config(exp: &Experiment, dir: &Path) -> Result<()> {
    let mut cfg = exp.config.clone();
    cfg.output = PathBuf::from(".");
    if let AnyEnv::PointMass(nav) = &exp.env {
        nav.scenario().save(&dir.join("scenario.toml"))?;
        cfg.environment.scenario_file = Some(PathBuf::from("scenario.toml"));
    }
    if cfg.trap_starts.is_some() {
        let set = TrapSet { env: exp.env.name().into(), config_hash: exp.hash.clone(), starts: exp.trap_starts.clone() };
        set.save(&dir.join("trap_starts.toml"))?;
        cfg.trap_starts = Some(PathBuf::from("trap_starts.toml"));
    }
    fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    Ok(())
}

/// Runs all trials and writes the output directory.
pub fn run_experiment(exp: &Experiment) -> Result<RunReport> {
    let dir = exp.config.output.clone();
    fs::create_dir_all(dir.join("logs"))?;
    fs::create_dir_all(dir.join("memory"))?;
    write_config(exp, &dir)?;
    let trials = run_trials(exp)?;
    let mut metrics = Vec::with_capacity(trials.len());
    let mut timing = Vec::with_capacity(trials.len());
    for t in &trials {
        let header = LogHeader {
            config_hash: exp.hash.clone(),
            trial: t.index,
            seed: t.seed,
            env: t.log.env.clone(),
            preset: exp.config.preset,
            start: t.start.clone(),
        };
        write_log(&trial_file(&dir, "logs", t.index, "jsonl"), &header, &t.log)?;
        fs::write(trial_file(&dir, "memory", t.index, "json"), t.memory.to_json()?)?;
        metrics.push(trial_metrics(exp, t.index, t.seed, &t.log));
        let wall = t.log.total_wall_time();
        let steps = t.log.records.len();
        timing.push(TimingRow {
            trial: t.index,
            steps,
            wall_time_s: wall,
            mean_step_ms: 1e3 * wall / steps.max(1) as f64,
        });
    }
    let summary = summarize(exp, &metrics)?;
    write_csv(&dir.join("trials.csv"), &metrics)?;
    write_csv(&dir.join("summary.csv"), std::slice::from_ref(&summary))?;
    write_csv(&dir.join("timing.csv"), &timing)?;
    Ok(RunReport { dir, summary, trials: metrics })
}

/// Recomputes per-trial metrics and the summary from the logs in `dir`.
pub fn recompute(dir: &Path) -> Result<(Summary, Vec<TrialMetrics>)> {
    let exp = ExperimentConfig::load(&dir.join("config.toml"))?.resolve()?;
    let mut paths: Vec<PathBuf> = fs::read_dir(dir.join("logs"))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut metrics = Vec::with_capacity(paths.len());
    for p in &paths {
        let (h, log) = read_log(p)?;
        if h.config_hash != exp.hash {
            return Err(Error::Metric(format!(
                "{}: config hash {} does not match {}",
                p.display(),
                h.config_hash,
                exp.hash
            )));
        }
        metrics.push(trial_metrics(&exp, h.trial, h.seed, &log));
    }
    let summary = summarize(&exp, &metrics)?;
    Ok((summary, metrics))
}

pub fn read_summary(dir: &Path) -> Result<Summary> {
    read_csv::<Summary>(&dir.join("summary.csv"))?
        .into_iter()
        .next()
        .ok_or_else(|| Error::Metric(format!("{}: empty summary", dir.display())))
}

pub fn read_trials(dir: &Path) -> Result<Vec<TrialMetrics>> {
    read_csv(&dir.join("trials.csv"))
}

/// Renders the summary as CSV text.
pub fn summary_csv(summary: &Summary) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(summary).map_err(csv_error)?;
    let bytes = w.into_inner().map_err(|e| Error::Metric(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Metric(e.to_string()))
}

/// Side-by-side report of two output directories.
pub fn compare(dir_a: &Path, dir_b: &Path) -> Result<String> {
    let (sa, sb) = (read_summary(dir_a)?, read_summary(dir_b)?);
    let (ta, tb) = (read_trials(dir_a)?, read_trials(dir_b)?);
    let mut out = String::new();
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
    writeln!(out, "{:<22} {:>24} {:>24}", "", format!("A: {}", sa.preset.name()), format!("B: {}", sb.preset.name())).ok();
    let mut row = |name: &str, a: String, b: String| {
        writeln!(out, "{name:<22} {a:>24} {b:>24}").ok();
    };
    let pm = |m: f64, s: f64| format!("{m:.3} ± {s:.3}");
    row("config hash", sa.config_hash.clone(), sb.config_hash.clone());
    row("trials", sa.trials.to_string(), sb.trials.to_string());
    row("cumulative cost", pm(sa.cumulative_cost_mean, sa.cumulative_cost_std), pm(sb.cumulative_cost_mean, sb.cumulative_cost_std));
    row("final value", pm(sa.final_value_mean, sa.final_value_std), pm(sb.final_value_mean, sb.final_value_std));
    row("escape rate %", opt(sa.escape_rate), opt(sb.escape_rate));
    row("trap frequency %", format!("{:.1}", sa.trap_frequency), format!("{:.1}", sb.trap_frequency));
    row("success rate %", format!("{:.1}", sa.success_rate), format!("{:.1}", sb.success_rate));
    row("collision rate %", format!("{:.1}", sa.collision_rate), format!("{:.1}", sb.collision_rate));
    row("N80 mean", opt(sa.n80_mean), opt(sb.n80_mean));
    row("value consistency", opt(sa.value_consistency_mean), opt(sb.value_consistency_mean));
    let ca: Vec<f64> = ta.iter().map(|t| t.cumulative_cost).collect();
    let cb: Vec<f64> = tb.iter().map(|t| t.cumulative_cost).collect();
    if let Ok(auc) = rank_auc(&ca, &cb) {
        writeln!(out, "P(cost A < cost B) = {auc:.3}").ok();
    }
    Ok(out)
}

/// Runs standard MPPI from normal starts and collects the state at the entry
/// of the first trap event of every trapped trial. Writes
/// `trap_starts.toml` (and, for navigation, `scenario.toml` with the states
/// embedded) into the output directory.
pub fn generate_traps(exp: &Experiment) -> Result<TrapSet> {
    let mut cfg = exp.config.clone();
    cfg.preset = Preset::Mppi;
    cfg.starts = StartKind::Normal;
    let gen = cfg.resolve()?;
    let trials = run_trials(&gen)?;
    let mut starts = Vec::new();
    for t in &trials {
        let env = &gen.env;
        let features: Vec<Vec<f64>> = t.log.records.iter().map(|r| env.projected(&r.state)).collect();
        let values: Vec<f64> = t.log.records.iter().map(|r| r.value).collect();
        let goal_value = env.goal().map(|g| env.value(&g)).unwrap_or(0.0);
        let trace = TrapTrace { features: &features, values: &values, goal_value, value_scale: env.value_scale() };
        if let Some(e) = detect_trap_episodes(&trace, &gen.criteria).first() {
            starts.push(t.log.records[e.entry].state.clone());
        }
    }
    let set = TrapSet { env: gen.env.name().into(), config_hash: gen.hash.clone(), starts };
    let dir = &exp.config.output;
    fs::create_dir_all(dir)?;
    set.save(&dir.join("trap_starts.toml"))?;
    if let AnyEnv::PointMass(nav) = &gen.env {
        let mut scenario = nav.scenario().clone();
        scenario.trap_starts = set.starts.clone();
        scenario.save(&dir.join("scenario.toml"))?;
    }
    Ok(set)
}
