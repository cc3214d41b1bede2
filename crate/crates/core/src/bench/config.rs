//! Experiment configuration: a TOML file naming an environment, a
//! controller preset and trial counts, with optional `[controller]`,
//! `[environment.params]` and `[metrics]` tables merged over per-environment
//! defaults. Unknown keys anywhere are rejected.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::env::AnyEnv;
use super::metrics::TrapCriteria;
use crate::controller::{DetectionMode, MaMppiConfig};
use crate::envs::{DoubleWell, Environment, NavScenario, Pendulum, PointMassNav, QuadScenario, Quadrotor};
use crate::error::{Error, Result};
use crate::memory::MemoryParams;
use crate::model::DynamicsModel;
use crate::mppi::MppiConfig;

/// Controller variants compared in experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Standard MPPI.
    Mppi,
    /// Full memory-augmented controller.
    #[default]
    MaMppi,
    /// Memory store and potential removed.
    NoMemory,
    /// Memory filled along the visited trail instead of by detection.
    NoDetection,
    /// α frozen, temperature and covariance not adapted.
    NoAdaptiveWeights,
}

impl Preset {
    pub const ALL: [Preset; 5] =
        [Preset::Mppi, Preset::MaMppi, Preset::NoMemory, Preset::NoDetection, Preset::NoAdaptiveWeights];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Mppi => "mppi",
            Preset::MaMppi => "ma-mppi",
            Preset::NoMemory => "no-memory",
            Preset::NoDetection => "no-detection",
            Preset::NoAdaptiveWeights => "no-adaptive-weights",
        }
    }

    pub fn apply(self, cfg: &mut MaMppiConfig) {
        match self {
            Preset::Mppi | Preset::NoMemory => cfg.memory_enabled = false,
            Preset::MaMppi => {}
            Preset::NoDetection => cfg.detection_mode = DetectionMode::Trail,
            Preset::NoAdaptiveWeights => cfg.adaptive_weights = false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    PointMass,
    Pendulum,
    Quadrotor,
    DoubleWell,
}

/// Where each trial starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StartKind {
    /// Drawn from the environment's start distribution.
    #[default]
    Normal,
    /// Cycled through the predefined trap states.
    Trap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub kind: EnvKind,
    /// Built-in scenario name (navigation and quadrotor).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    /// Navigation scenario file; takes precedence over `scenario`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_file: Option<PathBuf>,
    /// Field overrides for the environment struct.
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub params: toml::Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub preset: Preset,
    #[serde(default = "one")]
    pub trials: usize,
    pub steps: usize,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub starts: StartKind,
    /// Trap-state file written by `gen-traps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trap_starts: Option<PathBuf>,
    pub environment: EnvironmentConfig,
    /// Overrides merged over the environment's default controller.
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub controller: toml::Table,
    /// Overrides merged over the default trap criteria.
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub metrics: toml::Table,
}

fn one() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

/// Predefined trap states, as written by `gen-traps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapSet {
    pub env: String,
    pub config_hash: String,
    pub starts: Vec<Vec<f64>>,
}

impl TrapSet {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, toml::to_string(self)?)?;
        Ok(())
    }
}

/// Default controller for each environment before overrides.
pub fn default_controller(env: &AnyEnv) -> MaMppiConfig {
    let diag = |d: &[f64]| DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d));
    let (samples, horizon, temperature, covariance, memory_weight) = match env {
        AnyEnv::PointMass(_) => (256, 20, 1.0, diag(&[1.0, 1.0]), 45.0),
        AnyEnv::Pendulum(_) => (1000, 15, 0.1, diag(&[1.0]), 1.0),
        AnyEnv::Quadrotor(_) => (256, 50, 1.0, diag(&[16.0, 0.01, 0.01, 0.004]), 30.0),
        AnyEnv::DoubleWell(_) => (64, 10, 0.02, diag(&[0.01, 0.01]), 1.0),
    };
    let mppi = MppiConfig {
        samples,
        horizon,
        temperature,
        control_covariance: covariance,
        control_bounds: env.control_bounds(),
        seed: 0,
    };
    let mut cfg = MaMppiConfig::for_env(env, mppi);
    cfg.memory_weight = memory_weight;
    if let AnyEnv::Pendulum(_) = env {
        cfg.memory.decay = MemoryParams::fast_decay().decay;
    }
    cfg
}

/// Default trap criteria for an environment.
pub fn default_criteria(env: &AnyEnv) -> TrapCriteria {
    TrapCriteria { min_radius: 0.05 * env.characteristic_scale(), ..TrapCriteria::default() }
}

/// Recursively overlays `over` onto `base`.
fn merge_tables(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

fn overlay<T>(base: &T, over: &toml::Table, what: &str) -> Result<T>
where
    T: Clone + Serialize + serde::de::DeserializeOwned,
{
    if over.is_empty() {
        return Ok(base.clone());
    }
    let toml::Value::Table(mut table) = toml::Value::try_from(base)? else {
        return Err(Error::Contract(format!("[{what}] defaults are not a table")));
    };
    merge_tables(&mut table, over);
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::InvalidConfig(format!("[{what}]: {}", e.message())))
}

/// A configuration with every default filled in.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub env: AnyEnv,
    pub controller: MaMppiConfig,
    pub criteria: TrapCriteria,
    pub trap_starts: Vec<Vec<f64>>,
    pub hash: String,
}

#[derive(Serialize)]
struct HashDocument<'a> {
    name: &'a str,
    preset: Preset,
    trials: usize,
    steps: usize,
    seed_base: u64,
    starts: StartKind,
    env: &'a AnyEnv,
    controller: &'a MaMppiConfig,
    criteria: &'a TrapCriteria,
    trap_starts: &'a [Vec<f64>],
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::parse(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let absolutize = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.trap_starts.as_mut().map(absolutize);
        cfg.environment.scenario_file.as_mut().map(absolutize);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    fn build_env(&self) -> Result<AnyEnv> {
        let e = &self.environment;
        let params = &e.params;
        Ok(match e.kind {
            EnvKind::PointMass => {
                let scenario = match (&e.scenario_file, &e.scenario) {
                    (Some(path), _) => NavScenario::load(path)?,
                    (None, Some(name)) => NavScenario::builtin(name)
                        .ok_or_else(|| Error::InvalidConfig(format!("unknown navigation scenario {name:?}")))?,
                    (None, None) => NavScenario::u_trap(),
                };
                let env: PointMassNav = overlay(&PointMassNav::default(), params, "environment.params")?;
                AnyEnv::PointMass(env.with_scenario(scenario))
            }
            EnvKind::Quadrotor => {
                let kind = match &e.scenario {
                    Some(name) => QuadScenario::deserialize(toml::Value::String(name.clone()))
                        .map_err(|_| Error::InvalidConfig(format!("unknown quadrotor scenario {name:?}")))?,
                    None => QuadScenario::OpenField,
                };
                AnyEnv::Quadrotor(overlay(&Quadrotor::scenario(kind), params, "environment.params")?)
            }
            EnvKind::Pendulum => AnyEnv::Pendulum(overlay(&Pendulum::default(), params, "environment.params")?),
            EnvKind::DoubleWell => {
                AnyEnv::DoubleWell(overlay(&DoubleWell::default(), params, "environment.params")?)
            }
        })
    }

    /// Fills in defaults, applies the preset and validates everything,
    /// collecting every problem into one diagnostic.
    pub fn resolve(&self) -> Result<Experiment> {
        let mut problems = Vec::new();
        if self.trials == 0 {
            problems.push("trials must be >= 1".to_string());
        }
        if self.steps == 0 {
            problems.push("steps must be >= 1".to_string());
        }
        let env = self.build_env()?;
        let mut controller = overlay(&default_controller(&env), &self.controller, "controller")?;
        self.preset.apply(&mut controller);
        if let Err(e) = controller.validate() {
            problems.push(e.to_string());
        }
        if controller.mppi.control_dim() != env.control_dim() {
            problems.push(format!(
                "controller covariance is {0}x{0}, environment has {1} controls",
                controller.mppi.control_dim(),
                env.control_dim()
            ));
        }
        let criteria: TrapCriteria = overlay(&default_criteria(&env), &self.metrics, "metrics")?;
        if let Err(e) = criteria.validate() {
            problems.push(e.to_string());
        }
        let trap_starts = match (&self.trap_starts, &env) {
            (Some(path), _) => TrapSet::load(path)?.starts,
            (None, AnyEnv::PointMass(nav)) => nav.scenario().trap_starts.clone(),
            (None, _) => Vec::new(),
        };
        if self.starts == StartKind::Trap && trap_starts.is_empty() {
            problems.push("starts = \"trap\" needs trap states (run gen-traps first)".into());
        }
        if trap_starts.iter().any(|s| s.len() != env.state_dim()) {
            problems.push(format!("trap states must have {} entries", env.state_dim()));
        }
        if !problems.is_empty() {
            return Err(Error::InvalidConfig(problems.join("; ")));
        }
        let hash = config_hash(&HashDocument {
            name: &self.name,
            preset: self.preset,
            trials: self.trials,
            steps: self.steps,
            seed_base: self.seed_base,
            starts: self.starts,
            env: &env,
            controller: &controller,
            criteria: &criteria,
            trap_starts: &trap_starts,
        })?;
        Ok(Experiment { config: self.clone(), env, controller, criteria, trap_starts, hash })
    }
}

fn config_hash<T: Serialize>(doc: &T) -> Result<String> {
    let bytes = serde_json::to_vec(doc)?;
    Ok(hex::encode(&Sha256::digest(&bytes)[..8]))
}

impl Experiment {
    pub fn seed(&self, trial: usize) -> u64 {
        self.config.seed_base.wrapping_add(trial as u64)
    }

    /// Start state of trial `trial`.
    pub fn start(&self, trial: usize) -> Vec<f64> {
        match self.config.starts {
            StartKind::Trap => self.trap_starts[trial % self.trap_starts.len()].clone(),
            StartKind::Normal => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed(trial) ^ 0x5eed_57a2_7000_0000);
                normal_start(&self.env, &mut rng)
            }
        }
    }
}

/// A draw from the environment's start distribution.
pub fn normal_start(env: &AnyEnv, rng: &mut impl Rng) -> Vec<f64> {
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
    match env {
        AnyEnv::PointMass(nav) => {
            let (lo, hi) = nav.start_box();
            vec![u(lo[0], hi[0]), u(lo[1], hi[1]), 0.0, 0.0]
        }
        AnyEnv::Pendulum(_) => {
            let theta = crate::envs::wrap_angle(std::f64::consts::PI + u(-0.2, 0.2));
            vec![theta, u(-0.2, 0.2)]
        }
        AnyEnv::Quadrotor(q) => q.hover_state([u(-0.3, 0.3), u(-0.3, 0.3), 2.0]),
        AnyEnv::DoubleWell(_) => vec![-1.0 + u(-0.1, 0.1), u(-0.1, 0.1)],
    }
}
