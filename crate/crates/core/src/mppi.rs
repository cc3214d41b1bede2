//! Standard MPPI: perturbed control sampling, batched rollouts, softmax
//! weighting over trajectory costs and receding-horizon warm starts.
//!
//! The pieces are exposed individually so the memory-augmented controller
//! can reuse them with its own covariance, temperature and cost.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    covariance_factor, stream_rng, ControlVector, CostModel, DynamicsModel, StateVector,
    Trajectory,
};

/// Closed interval for one control dimension. Infinite ends are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBound {
    pub lo: f64,
    pub hi: f64,
}

impl ControlBound {
    pub const UNBOUNDED: ControlBound = ControlBound { lo: f64::NEG_INFINITY, hi: f64::INFINITY };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    #[inline]
    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

pub(crate) mod serde_matrix {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> =
            (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
    }
}

/// Sampling and weighting parameters shared by every MPPI variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MppiConfig {
    /// Number of sampled control sequences `K`.
    pub samples: usize,
    /// Horizon `H` in control steps.
    pub horizon: usize,
    /// Base temperature `λ₀`.
    pub temperature: f64,
    /// Nominal per-step control perturbation covariance (m×m).
    #[serde(with = "serde_matrix")]
    pub control_covariance: DMatrix<f64>,
    pub control_bounds: Vec<ControlBound>,
    pub seed: u64,
}

impl MppiConfig {
    pub fn control_dim(&self) -> usize {
        self.control_bounds.len()
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.samples == 0 {
            problems.push("samples must be >= 1".to_string());
        }
        if self.horizon == 0 {
            problems.push("horizon must be >= 1".to_string());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            problems.push(format!("temperature must be > 0, got {}", self.temperature));
        }
        let m = self.control_bounds.len();
        if m == 0 {
            problems.push("control_bounds must not be empty".to_string());
        }
        if self.control_covariance.shape() != (m, m) {
            problems.push(format!(
                "control_covariance must be {m}x{m}, got {:?}",
                self.control_covariance.shape()
            ));
        } else if let Err(e) = covariance_factor(&self.control_covariance) {
            problems.push(format!("control_covariance: {e}"));
        }
        for (i, b) in self.control_bounds.iter().enumerate() {
            if !(b.lo < b.hi) {
                problems.push(format!("control_bounds[{i}]: lo {} must be < hi {}", b.lo, b.hi));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }

    pub fn clamp(&self, u: &mut [f64]) {
        clamp_sequence(u, &self.control_bounds);
    }
}

fn clamp_sequence(u: &mut [f64], bounds: &[ControlBound]) {
    let m = bounds.len();
    for (i, v) in u.iter_mut().enumerate() {
        *v = bounds[i % m].clamp(*v);
    }
}

/// Warm-start control sequence of length `H`, flattened step-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalPlan {
    horizon: usize,
    control_dim: usize,
    data: Vec<f64>,
}

impl NominalPlan {
    pub fn zeros(horizon: usize, control_dim: usize) -> Self {
        Self { horizon, control_dim, data: vec![0.0; horizon * control_dim] }
    }

    pub fn from_flat(horizon: usize, control_dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != horizon * control_dim {
            return Err(Error::DimensionMismatch {
                expected: horizon * control_dim,
                got: data.len(),
            });
        }
        Ok(Self { horizon, control_dim, data })
    }

    /// Constant plan repeating `u` over the horizon, clamped to bounds.
    pub fn constant(horizon: usize, u: &[f64], bounds: &[ControlBound]) -> Self {
        let mut data: Vec<f64> = (0..horizon).flat_map(|_| u.iter().copied()).collect();
        clamp_sequence(&mut data, bounds);
        Self { horizon, control_dim: u.len(), data }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn control(&self, t: usize) -> &[f64] {
        &self.data[t * self.control_dim..(t + 1) * self.control_dim]
    }

    /// Drops the first control and repeats the last one.
    pub fn shift(&mut self) {
        let m = self.control_dim;
        if self.horizon > 1 {
            self.data.copy_within(m.., 0);
        }
    }
}

/// `K` control sequences of length `H`, flattened sample-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSamples {
    pub samples: usize,
    pub horizon: usize,
    pub control_dim: usize,
    pub data: Vec<f64>,
}

impl ControlSamples {
    pub fn sequence(&self, k: usize) -> &[f64] {
        let len = self.horizon * self.control_dim;
        &self.data[k * len..(k + 1) * len]
    }

    pub fn control(&self, k: usize, t: usize) -> &[f64] {
        let seq = self.sequence(k);
        &seq[t * self.control_dim..(t + 1) * self.control_dim]
    }

    /// Builds samples from explicit sequences (each `H·m` long).
    pub fn from_sequences(horizon: usize, control_dim: usize, seqs: &[Vec<f64>]) -> Result<Self> {
        let len = horizon * control_dim;
        let mut data = Vec::with_capacity(seqs.len() * len);
        for s in seqs {
            if s.len() != len {
                return Err(Error::DimensionMismatch { expected: len, got: s.len() });
            }
            data.extend_from_slice(s);
        }
        Ok(Self { samples: seqs.len(), horizon, control_dim, data })
    }
}

/// Draws `K` perturbed copies of `nominal`.
///
/// Sample 0 is the clamped nominal itself. Every other sample adds
/// `L z + bias` per step, where `L Lᵀ = covariance`, then clips to bounds.
/// Sample `k` at controller step `step` always consumes the same RNG
/// stream, so results do not depend on worker scheduling.
pub fn sample_controls(
    cfg: &MppiConfig,
    nominal: &NominalPlan,
    covariance: &DMatrix<f64>,
    bias: Option<&[f64]>,
    step: u64,
) -> Result<ControlSamples> {
    let factor = covariance_factor(covariance)?;
    let m = cfg.control_dim();
    if nominal.control_dim != m || factor.nrows() != m {
        return Err(Error::DimensionMismatch { expected: m, got: nominal.control_dim });
    }
    if let Some(b) = bias {
        if b.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: b.len() });
        }
    }
    let h = nominal.horizon;
    let len = h * m;
    let mut data = vec![0.0; cfg.samples * len];
    let seed = cfg.seed;
    data.par_chunks_mut(len).enumerate().for_each(|(k, seq)| {
        seq.copy_from_slice(&nominal.data);
        if k > 0 {
            let mut rng = stream_rng(seed, step, k as u64);
            let mut z = vec![0.0; m];
            for t in 0..h {
                for zi in z.iter_mut() {
                    *zi = rng.sample(StandardNormal);
                }
                let u = &mut seq[t * m..(t + 1) * m];
                for i in 0..m {
                    let mut eps = 0.0;
                    for (j, zj) in z.iter().enumerate() {
                        eps += factor[(i, j)] * zj;
                    }
                    u[i] += eps + bias.map_or(0.0, |b| b[i]);
                }
            }
        }
        clamp_sequence(seq, &cfg.control_bounds);
    });
    Ok(ControlSamples { samples: cfg.samples, horizon: h, control_dim: m, data })
}

/// Sampled controls together with their simulated states and total costs.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    pub controls: ControlSamples,
    pub state_dim: usize,
    /// `K·(H+1)·n` states, sample-major.
    pub states: Vec<f64>,
    /// Total cost per sample; `+∞` marks an infeasible rollout.
    pub costs: Vec<f64>,
}

impl RolloutBatch {
    pub fn samples(&self) -> usize {
        self.controls.samples
    }

    pub fn horizon(&self) -> usize {
        self.controls.horizon
    }

    pub fn states_of(&self, k: usize) -> &[f64] {
        let len = (self.horizon() + 1) * self.state_dim;
        &self.states[k * len..(k + 1) * len]
    }

    pub fn state(&self, k: usize, t: usize) -> &[f64] {
        let n = self.state_dim;
        &self.states_of(k)[t * n..(t + 1) * n]
    }

    pub fn trajectory(&self, k: usize) -> Result<Trajectory> {
        let states = (0..=self.horizon())
            .map(|t| StateVector::from_slice(self.state(k, t)))
            .collect::<Result<Vec<_>>>()?;
        let controls = (0..self.horizon())
            .map(|t| ControlVector::from_slice(self.controls.control(k, t)))
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(states, controls)
    }

    /// Axis-aligned bounds of every finite state, in whatever coordinates
    /// `project` maps states to.
    pub fn projected_bounds<F>(&self, dim: usize, project: F) -> Option<(Vec<f64>, Vec<f64>)>
    where
        F: Fn(&[f64], &mut [f64]),
    {
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        let mut z = vec![0.0; dim];
        let mut any = false;
        for x in self.states.chunks(self.state_dim) {
            if x.iter().any(|v| !v.is_finite()) {
                continue;
            }
            project(x, &mut z);
            for i in 0..dim {
                lo[i] = lo[i].min(z[i]);
                hi[i] = hi[i].max(z[i]);
            }
            any = true;
        }
        any.then_some((lo, hi))
    }
}

/// Rolls every sample forward from `x0` without dynamics noise. Costs are
/// left unset (NaN) until [`score_batch`] runs.
pub fn simulate_batch<D: DynamicsModel>(
    model: &D,
    x0: &[f64],
    controls: ControlSamples,
) -> Result<RolloutBatch> {
    let n = model.state_dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x0.len() });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rollout root state"));
    }
    if controls.control_dim != model.control_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.control_dim(),
            got: controls.control_dim,
        });
    }
    let h = controls.horizon;
    let m = controls.control_dim;
    let len = (h + 1) * n;
    let mut states = vec![0.0; controls.samples * len];
    states.par_chunks_mut(len).enumerate().for_each(|(k, traj)| {
        traj[..n].copy_from_slice(x0);
        let seq = controls.sequence(k);
        for t in 0..h {
            let (head, tail) = traj.split_at_mut((t + 1) * n);
            model.step_into(&head[t * n..], &seq[t * m..(t + 1) * m], &mut tail[..n]);
        }
    });
    let costs = vec![f64::NAN; controls.samples];
    Ok(RolloutBatch { controls, state_dim: n, states, costs })
}

/// Fills `batch.costs` with `Σ c(x_t,u_t) + c_T(x_H)`; non-finite → `+∞`.
pub fn score_batch<C: CostModel>(batch: &mut RolloutBatch, cost: &C) {
    let n = batch.state_dim;
    let h = batch.horizon();
    let m = batch.controls.control_dim;
    let len = (h + 1) * n;
    let states = &batch.states;
    let controls = &batch.controls;
    batch.costs.par_iter_mut().enumerate().for_each(|(k, out)| {
        let traj = &states[k * len..(k + 1) * len];
        let seq = controls.sequence(k);
        let mut total = 0.0;
        for t in 0..h {
            let c = cost.stage_cost(&traj[t * n..(t + 1) * n], &seq[t * m..(t + 1) * m]);
            if !c.is_finite() {
                *out = f64::INFINITY;
                return;
            }
            total += c;
        }
        let terminal = cost.terminal_cost(&traj[h * n..]);
        total += terminal;
        *out = if total.is_finite() { total } else { f64::INFINITY };
    });
}

/// Simulates and scores every sample.
pub fn evaluate_batch<D: DynamicsModel, C: CostModel>(
    model: &D,
    cost: &C,
    x0: &[f64],
    controls: ControlSamples,
) -> Result<RolloutBatch> {
    let mut batch = simulate_batch(model, x0, controls)?;
    score_batch(&mut batch, cost);
    Ok(batch)
}

/// Softmax weights `exp(-(S_k - min S)/λ)`, normalized. Infeasible samples
/// receive weight zero.
pub fn mppi_weights(costs: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::Contract(format!("temperature must be > 0, got {temperature}")));
    }
    let min = costs.iter().copied().filter(|c| c.is_finite()).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::NoFeasibleRollout);
    }
    let mut weights: Vec<f64> = costs
        .iter()
        .map(|&c| if c.is_finite() { (-(c - min) / temperature).exp() } else { 0.0 })
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(weights)
}

/// Per-step weighted average of the sampled controls, clipped to bounds.
pub fn optimal_control(
    samples: &ControlSamples,
    weights: &[f64],
    bounds: &[ControlBound],
) -> Vec<f64> {
    let len = samples.horizon * samples.control_dim;
    let mut out = vec![0.0; len];
    for (k, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (o, &u) in out.iter_mut().zip(samples.sequence(k)) {
            *o += w * u;
        }
    }
    clamp_sequence(&mut out, bounds);
    out
}

/// Kish effective sample size `1 / Σ w²`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Weighted mean of finite rollout costs.
pub fn weighted_cost(costs: &[f64], weights: &[f64]) -> f64 {
    costs
        .iter()
        .zip(weights)
        .filter(|(c, _)| c.is_finite())
        .map(|(c, w)| c * w)
        .sum()
}

#[derive(Debug, Clone)]
pub struct MppiDiagnostics {
    pub costs: Vec<f64>,
    pub min_cost: f64,
    /// Weighted mean rollout cost, used as the controller's value prediction.
    pub weighted_cost: f64,
    pub effective_sample_size: f64,
    pub wall_time: Duration,
}

/// Standard MPPI controller.
pub struct Mppi<D, C> {
    config: MppiConfig,
    model: D,
    cost: C,
    nominal: NominalPlan,
    step: u64,
}

impl<D: DynamicsModel, C: CostModel> Mppi<D, C> {
    pub fn new(config: MppiConfig, model: D, cost: C) -> Result<Self> {
        config.validate()?;
        if config.control_dim() != model.control_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.control_dim(),
                got: config.control_dim(),
            });
        }
        let nominal = NominalPlan::zeros(config.horizon, config.control_dim());
        let mut nominal = nominal;
        clamp_sequence(&mut nominal.data, &config.control_bounds);
        Ok(Self { config, model, cost, nominal, step: 0 })
    }

    pub fn config(&self) -> &MppiConfig {
        &self.config
    }

    pub fn nominal(&self) -> &NominalPlan {
        &self.nominal
    }

    pub fn set_nominal(&mut self, plan: NominalPlan) -> Result<()> {
        if plan.horizon != self.config.horizon || plan.control_dim != self.config.control_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.config.horizon * self.config.control_dim(),
                got: plan.data.len(),
            });
        }
        self.nominal = plan;
        clamp_sequence(&mut self.nominal.data, &self.config.control_bounds);
        Ok(())
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Sample, roll out, weight and average; returns the first control of
    /// the new plan and shifts the plan for the next call.
    pub fn step(&mut self, x0: &[f64]) -> Result<(ControlVector, MppiDiagnostics)> {
        let start = Instant::now();
        let samples = sample_controls(
            &self.config,
            &self.nominal,
            &self.config.control_covariance,
            None,
            self.step,
        )?;
        let batch = evaluate_batch(&self.model, &self.cost, x0, samples)?;
        let weights = mppi_weights(&batch.costs, self.config.temperature)?;
        let plan = optimal_control(&batch.controls, &weights, &self.config.control_bounds);
        let m = self.config.control_dim();
        let u0 = ControlVector::from_slice(&plan[..m])?;
        self.nominal.data = plan;
        self.nominal.shift();
        self.step += 1;
        let min_cost = batch.costs.iter().copied().fold(f64::INFINITY, f64::min);
        let diagnostics = MppiDiagnostics {
            min_cost,
            weighted_cost: weighted_cost(&batch.costs, &weights),
            effective_sample_size: effective_sample_size(&weights),
            costs: batch.costs,
            wall_time: start.elapsed(),
        };
        Ok((u0, diagnostics))
    }
}
