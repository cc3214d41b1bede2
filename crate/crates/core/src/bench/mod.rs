//! Benchmark harness: experiment configuration, metrics, and seeded trial
//! orchestration with persisted logs and summaries.

mod config;
mod env;
mod experiment;
pub mod metrics;

pub use config::{
    default_controller, default_criteria, normal_start, EnvKind, EnvironmentConfig, Experiment,
    ExperimentConfig, Preset, StartKind, TrapSet,
};
pub use env::AnyEnv;
pub use experiment::{
    compare, generate_traps, read_log, read_summary, read_trials, recompute, run_experiment, run_trial,
    run_trials, summarize, summary_csv, trial_metrics, workers, write_log, LogEnd, LogHeader, LogLine,
    RunReport, Summary, Trial, TrialMetrics, WORKERS_ENV,
};
