//! The memory-augmented controller: detection, memory update, α-driven
//! adaptation of temperature and sampling covariance, and rollout costs
//! reshaped by the memory potential.

use std::borrow::Cow;
use std::collections::HashMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::detect::{numeric_gradient, CandidateFeature, DetectionOutcome, DetectionThresholds, Detector, FeatureKind};
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::memory::{InsertOutcome, MemoryParams, MemoryStore};
use crate::model::{ControlVector, CostModel};
use crate::mppi::{
    effective_sample_size, mppi_weights, optimal_control, sample_controls, score_batch,
    simulate_batch, weighted_cost, MppiConfig, NominalPlan,
};
use crate::potential::{
    adaptive_covariance, adaptive_temperature, alpha, directional_bias, memory_potential_by_kind,
    LocalField, PotentialParams,
};

const MAX_FEATURE_DIM: usize = 8;

/// How memory is populated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DetectionMode {
    /// Variance, gradient and curvature tests.
    #[default]
    Topological,
    /// No detection: a local-minimum feature is dropped at the current state
    /// every `window` steps, marking the visited trail.
    Trail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaMppiConfig {
    pub mppi: MppiConfig,
    pub detection: DetectionThresholds,
    pub memory: MemoryParams,
    pub potential: PotentialParams,
    /// `false` reproduces standard MPPI exactly.
    pub memory_enabled: bool,
    /// `w_mem` in `c + w_mem·(1−α)·V_mem`.
    pub memory_weight: f64,
    pub detection_mode: DetectionMode,
    /// `false` freezes α at `fixed_alpha` and disables temperature and
    /// covariance adaptation.
    pub adaptive_weights: bool,
    pub fixed_alpha: f64,
    /// Keep memory across [`MaMppi::reset_episode`].
    pub persist_memory: bool,
}

impl MaMppiConfig {
    /// Defaults for `env`, with radii and finite-difference steps scaled to
    /// its characteristic size.
    pub fn for_env<E: Environment + ?Sized>(env: &E, mppi: MppiConfig) -> Self {
        let scale = env.characteristic_scale();
        let detection = DetectionThresholds {
            min_radius: 0.05 * scale,
            fd_step: 1e-4 * scale,
            ..DetectionThresholds::default()
        };
        let memory = MemoryParams { novelty_distance: 0.01 * scale, ..MemoryParams::default() };
        Self {
            mppi,
            detection,
            memory,
            potential: PotentialParams::default(),
            memory_enabled: true,
            memory_weight: 1.0,
            detection_mode: DetectionMode::Topological,
            adaptive_weights: true,
            fixed_alpha: 0.5,
            persist_memory: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for r in [
            self.mppi.validate(),
            self.detection.validate(),
            self.memory.validate(),
            self.potential.validate(),
        ] {
            if let Err(e) = r {
                problems.push(e.to_string());
            }
        }
        if !(self.memory_weight >= 0.0) {
            problems.push("memory_weight must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.fixed_alpha) {
            problems.push("fixed_alpha must be in [0, 1]".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }
}

/// Per-step observables.
#[derive(Debug, Clone, Default)]
pub struct StepDiagnostics {
    pub alpha: f64,
    pub temperature: f64,
    pub memory_len: usize,
    pub active_features: usize,
    pub stagnating: bool,
    pub candidate: Option<FeatureKind>,
    pub insertion: Option<InsertOutcome>,
    /// `V_mem(x_t)` split by kind.
    pub memory_potential: [f64; 3],
    pub min_cost: f64,
    /// Weighted mean rollout cost.
    pub predicted_cost: f64,
    pub effective_sample_size: f64,
    pub sample_time: Duration,
    pub rollout_time: Duration,
    pub memory_time: Duration,
    pub potential_time: Duration,
    pub wall_time: Duration,
}

/// Environment cost plus `w·(1−α(z))·V_mem(z)` on every rollout state.
struct AugmentedCost<'a, E> {
    env: &'a E,
    field: &'a LocalField,
    weight: f64,
    fixed_alpha: Option<f64>,
}

impl<E: Environment> AugmentedCost<'_, E> {
    #[inline]
    fn term(&self, x: &[f64]) -> f64 {
        let mut buf = [0.0; MAX_FEATURE_DIM];
        let z = &mut buf[..self.field.dim()];
        self.env.project(x, z);
        let (a, v) = self.field.evaluate(z);
        if v == 0.0 {
            return 0.0;
        }
        self.weight * (1.0 - self.fixed_alpha.unwrap_or(a)) * v
    }
}

impl<E: Environment> CostModel for AugmentedCost<'_, E> {
    fn stage_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        self.env.stage_cost(x, u) + self.term(x)
    }
    fn terminal_cost(&self, x: &[f64]) -> f64 {
        self.env.terminal_cost(x) + self.term(x)
    }
}

pub struct MaMppi<E> {
    config: MaMppiConfig,
    env: E,
    nominal: NominalPlan,
    detector: Detector,
    memory: MemoryStore,
    control_std: Vec<f64>,
    goal: Option<Vec<f64>>,
    previous: Option<Vec<f64>>,
    step: u64,
}

impl<E: Environment> MaMppi<E> {
    pub fn new(config: MaMppiConfig, env: E) -> Result<Self> {
        config.validate()?;
        if config.mppi.control_dim() != env.control_dim() {
            return Err(Error::DimensionMismatch {
                expected: env.control_dim(),
                got: config.mppi.control_dim(),
            });
        }
        let fd = env.feature_dim();
        if fd == 0 || fd > MAX_FEATURE_DIM {
            return Err(Error::InvalidConfig(format!("feature dimension {fd} outside 1..={MAX_FEATURE_DIM}")));
        }
        let memory = MemoryStore::new(fd, config.memory.clone())?;
        let detector = Detector::new(config.detection.clone());
        let control_std = (0..config.mppi.control_dim())
            .map(|i| config.mppi.control_covariance[(i, i)].max(0.0).sqrt())
            .collect();
        let nominal = Self::initial_plan(&config, &env);
        let goal = env.goal();
        Ok(Self { config, env, nominal, detector, memory, control_std, goal, previous: None, step: 0 })
    }

    fn initial_plan(config: &MaMppiConfig, env: &E) -> NominalPlan {
        NominalPlan::constant(config.mppi.horizon, &env.nominal_control(), &config.mppi.control_bounds)
    }

    pub fn config(&self) -> &MaMppiConfig {
        &self.config
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn memory(&self) -> &MemoryStore {
        &self.memory
    }

    /// Replaces the memory (e.g. a snapshot from an earlier episode).
    pub fn set_memory(&mut self, store: MemoryStore) -> Result<()> {
        if store.dim() != self.env.feature_dim() {
            return Err(Error::DimensionMismatch { expected: self.env.feature_dim(), got: store.dim() });
        }
        self.memory = store;
        Ok(())
    }

    pub fn nominal(&self) -> &NominalPlan {
        &self.nominal
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Clears per-episode state; memory survives when `persist_memory`.
    pub fn reset_episode(&mut self) {
        self.nominal = Self::initial_plan(&self.config, &self.env);
        self.detector.reset();
        self.previous = None;
        if !self.config.persist_memory {
            self.memory.clear();
        }
    }

    fn detect(&mut self, z: &[f64]) -> DetectionOutcome {
        let step = self.step;
        match self.config.detection_mode {
            DetectionMode::Topological => {
                let env = &self.env;
                let h = self.config.detection.fd_step;
                let value = |q: &[f64]| env.value(q);
                let gradient = |q: &[f64]| {
                    env.value_gradient(q).or_else(|| numeric_gradient(&value, q, h).ok())
                };
                self.detector.observe(step, z, &value, &gradient, self.goal.as_deref())
            }
            DetectionMode::Trail => {
                let stagnating = self.detector.observe_stagnation(step, z);
                let th = &self.config.detection;
                let candidate = (step % th.window as u64 == th.window as u64 - 1).then(|| CandidateFeature {
                    position: z.to_vec(),
                    kind: FeatureKind::LocalMinimum,
                    direction: None,
                    radius: th.radius_gain * th.min_radius,
                });
                DetectionOutcome { stagnating, candidate, ..DetectionOutcome::default() }
            }
        }
    }

    /// Directional features just left behind learn the observed escape
    /// direction.
    fn record_escapes(&mut self, z: &[f64]) -> Result<()> {
        let Some(prev) = self.previous.as_deref() else { return Ok(()) };
        let mut escaped: HashMap<u64, Vec<f64>> = HashMap::new();
        for (i, _) in self.memory.query_active(prev) {
            let f = &self.memory.features()[i];
            if f.kind.is_directional() && !f.contains(z) {
                let d: Vec<f64> = z.iter().zip(&f.position).map(|(a, b)| a - b).collect();
                let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > 0.0 {
                    escaped.insert(f.id, d.into_iter().map(|v| v / n).collect());
                }
            }
        }
        for (id, d) in escaped {
            self.memory.set_direction(id, d)?;
        }
        Ok(())
    }

    /// One control step from state `x`.
    pub fn step(&mut self, x: &[f64]) -> Result<(ControlVector, StepDiagnostics)> {
        let start = Instant::now();
        let mut diag = StepDiagnostics::default();
        let z = self.env.projected(x);
        let enabled = self.config.memory_enabled;

        if enabled {
            let outcome = self.detect(&z);
            self.record_escapes(&z)?;
            diag.stagnating = outcome.stagnating;
            diag.candidate = outcome.candidate.as_ref().map(|c| c.kind);
            diag.insertion =
                self.memory.memory_update(&z, outcome.candidate.as_ref(), outcome.stagnating)?;
            self.previous = Some(z.clone());
        }
        diag.memory_time = start.elapsed();

        let t = Instant::now();
        let cfg = &self.config;
        let lambda0 = cfg.mppi.temperature;
        let use_memory = enabled && !self.memory.is_empty();
        let (a, bias) = if use_memory {
            let a = if cfg.adaptive_weights { alpha(&z, &self.memory, &cfg.potential) } else { cfg.fixed_alpha };
            diag.active_features = self.memory.query_active(&z).len();
            diag.memory_potential = memory_potential_by_kind(&z, &self.memory, &cfg.potential);
            let env = &self.env;
            let bias = directional_bias(
                &z,
                &self.memory,
                |d| env.direction_to_control(d),
                &self.control_std,
                cfg.potential.bias_gain,
            );
            (a, bias)
        } else {
            (1.0, None)
        };
        let adapt = use_memory && cfg.adaptive_weights && a < 1.0;
        let temperature = if adapt && cfg.potential.adapt_temperature {
            adaptive_temperature(lambda0, cfg.potential.eta, a)
        } else {
            lambda0
        };
        let covariance = if adapt && cfg.potential.adapt_covariance {
            Cow::Owned(adaptive_covariance(&cfg.mppi.control_covariance, cfg.potential.mu, a))
        } else {
            Cow::Borrowed(&cfg.mppi.control_covariance)
        };
        diag.potential_time = t.elapsed();

        let t = Instant::now();
        let samples = sample_controls(&cfg.mppi, &self.nominal, &covariance, bias.as_deref(), self.step)?;
        diag.sample_time = t.elapsed();

        let t = Instant::now();
        let mut batch = simulate_batch(&self.env, x, samples)?;
        let mut field = None;
        if use_memory {
            let tf = Instant::now();
            let fd = self.env.feature_dim();
            let env = &self.env;
            if let Some((lo, hi)) = batch.projected_bounds(fd, |s, out| env.project(s, out)) {
                let f = LocalField::from_box(&self.memory, &lo, &hi, &cfg.potential);
                if !f.is_empty() {
                    field = Some(f);
                }
            }
            diag.potential_time += tf.elapsed();
        }
        match &field {
            Some(field) => {
                let cost = AugmentedCost {
                    env: &self.env,
                    field,
                    weight: cfg.memory_weight,
                    fixed_alpha: (!cfg.adaptive_weights).then_some(cfg.fixed_alpha),
                };
                score_batch(&mut batch, &cost);
            }
            None => score_batch(&mut batch, &self.env),
        }
        diag.rollout_time = t.elapsed();

        let weights = mppi_weights(&batch.costs, temperature)?;
        let plan = optimal_control(&batch.controls, &weights, &cfg.mppi.control_bounds);
        let m = cfg.mppi.control_dim();
        let u0 = ControlVector::from_slice(&plan[..m])?;
        self.nominal = NominalPlan::from_flat(cfg.mppi.horizon, m, plan)?;
        self.nominal.shift();
        self.step += 1;

        diag.alpha = a;
        diag.temperature = temperature;
        diag.memory_len = self.memory.len();
        diag.min_cost = batch.costs.iter().copied().fold(f64::INFINITY, f64::min);
        diag.predicted_cost = weighted_cost(&batch.costs, &weights);
        diag.effective_sample_size = effective_sample_size(&weights);
        diag.wall_time = start.elapsed();
        Ok((u0, diag))
    }
}

/// One closed-loop step as logged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub step: u64,
    pub state: Vec<f64>,
    pub control: Vec<f64>,
    pub cost: f64,
    /// Base value proxy at the state.
    pub value: f64,
    pub alpha: f64,
    pub temperature: f64,
    pub memory_len: usize,
    pub active_features: usize,
    pub stagnating: bool,
    pub memory_potential: [f64; 3],
    pub predicted_cost: f64,
    pub effective_sample_size: f64,
    pub collision: bool,
    /// Seconds.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeLog {
    pub env: String,
    pub records: Vec<StepRecord>,
    pub diverged: bool,
    pub final_state: Vec<f64>,
}

impl EpisodeLog {
    pub fn cumulative_cost(&self) -> f64 {
        self.records.iter().map(|r| r.cost).sum()
    }

    /// `R_cum`, with reward = −stage cost.
    pub fn cumulative_reward(&self) -> f64 {
        self.records.iter().map(|r| -r.cost).sum()
    }

    pub fn collided(&self) -> bool {
        self.records.iter().any(|r| r.collision)
    }

    pub fn total_wall_time(&self) -> f64 {
        self.records.iter().map(|r| r.wall_time).sum()
    }
}

/// Runs `steps` closed-loop steps from `x0`. A non-finite state ends the
/// episode early with `diverged` set.
pub fn run_episode<E: Environment>(ctrl: &mut MaMppi<E>, x0: &[f64], steps: usize) -> Result<EpisodeLog> {
    if steps == 0 {
        return Err(Error::Contract("episode needs at least one step".into()));
    }
    let env_name = ctrl.env().name().to_string();
    let mut x = x0.to_vec();
    let mut records = Vec::with_capacity(steps);
    let mut diverged = false;
    for i in 0..steps {
        let (u, d) = ctrl.step(&x)?;
        let env = ctrl.env();
        let z = env.projected(&x);
        records.push(StepRecord {
            step: i as u64,
            state: x.clone(),
            control: u.to_vec(),
            cost: env.stage_cost(&x, &u),
            value: env.value(&z),
            alpha: d.alpha,
            temperature: d.temperature,
            memory_len: d.memory_len,
            active_features: d.active_features,
            stagnating: d.stagnating,
            memory_potential: d.memory_potential,
            predicted_cost: d.predicted_cost,
            effective_sample_size: d.effective_sample_size,
            collision: env.in_collision(&x),
            wall_time: d.wall_time.as_secs_f64(),
        });
        let next = env.step(&x, &u);
        if next.iter().any(|v| !v.is_finite()) {
            diverged = true;
            break;
        }
        x = next;
    }
    Ok(EpisodeLog { env: env_name, records, diverged, final_state: x })
}
