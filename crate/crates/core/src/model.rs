//! Shared domain types: state and control vectors, the dynamics and cost
//! abstractions, trajectories, and seeded Gaussian noise.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::ops::Deref;

use crate::error::{Error, Result};

/// A point in state space. Always non-empty with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StateVector(Vec<f64>);

/// A point in control space. Always non-empty with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ControlVector(Vec<f64>);

macro_rules! finite_vector {
    ($ty:ident, $what:literal) => {
        impl $ty {
            pub fn new(values: Vec<f64>) -> Result<Self> {
                if values.is_empty() {
                    return Err(Error::DimensionMismatch { expected: 1, got: 0 });
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite($what));
                }
                Ok(Self(values))
            }

            pub fn zeros(dim: usize) -> Self {
                assert!(dim > 0, "zero-dimensional vector");
                Self(vec![0.0; dim])
            }

            pub fn from_slice(values: &[f64]) -> Result<Self> {
                Self::new(values.to_vec())
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }
        }

        impl Deref for $ty {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl AsRef<[f64]> for $ty {
            fn as_ref(&self) -> &[f64] {
                &self.0
            }
        }

        impl TryFrom<Vec<f64>> for $ty {
            type Error = Error;
            fn try_from(values: Vec<f64>) -> Result<Self> {
                Self::new(values)
            }
        }

        impl From<$ty> for Vec<f64> {
            fn from(v: $ty) -> Vec<f64> {
                v.0
            }
        }
    };
}

finite_vector!(StateVector, "state vector");
finite_vector!(ControlVector, "control vector");

/// Deterministic part `f` of `x_{t+1} = f(x_t, u_t) + noise`.
///
/// Implementations are called concurrently from rollout workers.
pub trait DynamicsModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    /// Integration step in seconds.
    fn dt(&self) -> f64;
    /// Writes `f(x, u)` into `next`. Slices have the model's dimensions.
    fn step_into(&self, x: &[f64], u: &[f64], next: &mut [f64]);
}

/// Stage and terminal costs of the finite-horizon objective.
pub trait CostModel: Send + Sync {
    fn stage_cost(&self, x: &[f64], u: &[f64]) -> f64;
    fn terminal_cost(&self, x: &[f64]) -> f64;
}

impl<T: DynamicsModel + ?Sized> DynamicsModel for &T {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn control_dim(&self) -> usize {
        (**self).control_dim()
    }
    fn dt(&self) -> f64 {
        (**self).dt()
    }
    fn step_into(&self, x: &[f64], u: &[f64], next: &mut [f64]) {
        (**self).step_into(x, u, next)
    }
}

impl<T: CostModel + ?Sized> CostModel for &T {
    fn stage_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        (**self).stage_cost(x, u)
    }
    fn terminal_cost(&self, x: &[f64]) -> f64 {
        (**self).terminal_cost(x)
    }
}

/// States `x_0..=x_H` and the controls `u_0..u_H` that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<StateVector>,
    pub controls: Vec<ControlVector>,
}

impl Trajectory {
    pub fn new(states: Vec<StateVector>, controls: Vec<ControlVector>) -> Result<Self> {
        if states.len() != controls.len() + 1 {
            return Err(Error::DimensionMismatch {
                expected: controls.len() + 1,
                got: states.len(),
            });
        }
        Ok(Self { states, controls })
    }

    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    /// Rolls `model` forward from `x0` without noise.
    pub fn rollout<D: DynamicsModel>(
        model: &D,
        x0: &StateVector,
        controls: Vec<ControlVector>,
    ) -> Result<Self> {
        let mut states = Vec::with_capacity(controls.len() + 1);
        states.push(x0.clone());
        for u in &controls {
            let next = dynamics_step(model, states.last().unwrap(), u, None)?;
            states.push(next);
        }
        Ok(Self { states, controls })
    }
}

/// One step of `x_{t+1} = f(x_t, u_t) + noise`.
pub fn dynamics_step<D: DynamicsModel + ?Sized>(
    model: &D,
    x: &StateVector,
    u: &ControlVector,
    noise: Option<&[f64]>,
) -> Result<StateVector> {
    let n = model.state_dim();
    if x.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.dim() });
    }
    if u.dim() != model.control_dim() {
        return Err(Error::DimensionMismatch { expected: model.control_dim(), got: u.dim() });
    }
    let mut next = vec![0.0; n];
    model.step_into(x, u, &mut next);
    if let Some(noise) = noise {
        if noise.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: noise.len() });
        }
        for (v, e) in next.iter_mut().zip(noise) {
            *v += e;
        }
    }
    StateVector::new(next)
}

/// Sum of stage costs plus the terminal cost. Any non-finite term makes the
/// whole trajectory infeasible and yields `f64::INFINITY`.
pub fn trajectory_cost<C: CostModel + ?Sized>(cost: &C, traj: &Trajectory) -> f64 {
    let mut total = 0.0;
    for (x, u) in traj.states.iter().zip(&traj.controls) {
        let c = cost.stage_cost(x, u);
        if !c.is_finite() {
            return f64::INFINITY;
        }
        total += c;
    }
    let terminal = cost.terminal_cost(traj.states.last().expect("non-empty trajectory"));
    if !terminal.is_finite() {
        return f64::INFINITY;
    }
    let total = total + terminal;
    if total.is_finite() {
        total
    } else {
        f64::INFINITY
    }
}

/// Square-root factor `L` with `L Lᵀ = Σ`.
///
/// Cholesky when Σ is positive-definite, otherwise a symmetric eigen
/// decomposition with eigenvalues in `[-1e-10, 0)` clamped to zero.
pub fn covariance_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (r, c) = cov.shape();
    if r != c || r == 0 {
        return Err(Error::NotPositiveSemiDefinite(format!("shape {r}x{c} is not square")));
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance"));
    }
    for i in 0..r {
        for j in (i + 1)..r {
            if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 {
                return Err(Error::NotPositiveSemiDefinite(format!(
                    "asymmetric at ({i},{j}): {} vs {}",
                    cov[(i, j)],
                    cov[(j, i)]
                )));
            }
        }
    }
    if let Some(chol) = cov.clone().cholesky() {
        return Ok(chol.l());
    }
    let eig = cov.clone().symmetric_eigen();
    let mut scale = DVector::zeros(r);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -1e-10 {
            return Err(Error::NotPositiveSemiDefinite(format!("eigenvalue {lambda}")));
        }
        scale[k] = lambda.max(0.0).sqrt();
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&scale))
}

/// Zero-mean Gaussian with covariance Σ and a fixed seed.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    covariance: DMatrix<f64>,
    factor: DMatrix<f64>,
    seed: u64,
}

impl NoiseModel {
    pub fn new(covariance: DMatrix<f64>, seed: u64) -> Result<Self> {
        let factor = covariance_factor(&covariance)?;
        Ok(Self { covariance, factor, seed })
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }
}

/// `count` draws from `noise`, reproducible for a given seed.
pub fn seeded_gaussian(noise: &NoiseModel, count: usize) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let n = noise.dim();
    (0..count)
        .map(|_| {
            let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            &noise.factor * z
        })
        .collect()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent RNG stream for `(seed, step, index)`, so rollouts can be
/// sampled in any order or on any worker with identical results.
pub fn stream_rng(seed: u64, step: u64, index: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    let mut state = splitmix64(seed) ^ splitmix64(step.wrapping_add(0x5851_f42d_4c95_7f2d));
    state = splitmix64(state ^ index.wrapping_mul(0xd134_2543_de82_ef95));
    for chunk in bytes.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}
