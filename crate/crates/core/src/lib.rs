//! Model predictive path integral control with an evolving memory of
//! topological features (local minima, plateaus, high-curvature regions)
//! that reshapes the value landscape and the sampling distribution.
//!
//! Layers, bottom up: [`model`] (dynamics/cost traits, seeded noise),
//! [`mppi`] (standard controller), [`detect`] (feature detection),
//! [`memory`] (feature store), [`potential`] (memory potentials and
//! α-driven adaptation), [`controller`] (the memory-augmented loop),
//! [`envs`] (built-in environments) and [`bench`] (metrics and experiments).

// `!(x > 0.0)` is how validation rejects NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod controller;
pub mod detect;
pub mod envs;
pub mod error;
pub mod memory;
pub mod model;
pub mod mppi;
pub mod potential;

pub use controller::{run_episode, DetectionMode, EpisodeLog, MaMppi, MaMppiConfig, StepDiagnostics, StepRecord};
pub use error::{Error, Result};
pub use memory::{MemoryFeature, MemoryParams, MemoryStore};
pub use mppi::{Mppi, MppiConfig};
