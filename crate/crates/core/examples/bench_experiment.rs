//! Runs a small seeded experiment from an inline TOML config, then reloads
//! the written logs and recomputes the summary.

use mamppi::bench::{self, ExperimentConfig};

const CONFIG: &str = r#"
name = "pendulum-demo"
preset = "ma-mppi"
trials = 4
steps = 200
seed_base = 42

[environment]
kind = "pendulum"

[controller.mppi]
samples = 300
"#;

fn main() -> mamppi::Result<()> {
    let mut cfg = ExperimentConfig::parse(CONFIG)?;
    cfg.output = std::env::temp_dir().join("mamppi-bench-demo");
    let exp = cfg.resolve()?;
    println!("config hash {}, {} workers", exp.hash, bench::workers());
    let report = bench::run_experiment(&exp)?;
    print!("{}", bench::summary_csv(&report.summary)?);
    for t in &report.trials {
        println!("trial {} seed {}: cumulative reward {:.1}", t.trial, t.seed, t.cumulative_reward);
    }
    let (again, _) = bench::recompute(&report.dir)?;
    assert_eq!(bench::summary_csv(&again)?, bench::summary_csv(&report.summary)?);
    println!("recomputed summary matches, logs in {}", report.dir.display());
    Ok(())
}
