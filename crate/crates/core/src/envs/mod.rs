//! Built-in environments with analytic dynamics, costs and goals.
//!
//! Memory and detection work in a per-environment feature space (position
//! for the navigation tasks, `(cos θ, sin θ, ω)` for the pendulum) chosen
//! through [`Environment::project`].

mod double_well;
mod pendulum;
mod point_mass;
mod quadrotor;

pub use double_well::DoubleWell;
pub use pendulum::{wrap_angle, Pendulum};
pub use point_mass::{Disc, NavScenario, PointMassNav};
pub use quadrotor::{hat, Cylinder, QuadScenario, Quadrotor};

use crate::model::{CostModel, DynamicsModel};
use crate::mppi::ControlBound;

/// Dynamics, cost, and the landscape information the memory layer needs.
pub trait Environment: DynamicsModel + CostModel {
    fn name(&self) -> &'static str;

    fn feature_dim(&self) -> usize;

    /// Maps a state into feature space, writing `feature_dim` values.
    fn project(&self, x: &[f64], z: &mut [f64]);

    /// Base value proxy `V_base` on feature space; lower is better.
    fn value(&self, z: &[f64]) -> f64;

    /// Analytic `∇V_base`, when available.
    fn value_gradient(&self, _z: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Goal in feature space.
    fn goal(&self) -> Option<Vec<f64>> {
        None
    }

    /// Typical size of the feature space, used to scale default radii and
    /// finite-difference steps.
    fn characteristic_scale(&self) -> f64 {
        1.0
    }

    /// Value-proxy magnitude separating "near the goal" from "far"; trap
    /// detection treats states with `value > value_scale` as low-return.
    fn value_scale(&self) -> f64 {
        1.0
    }

    /// Maps a feature-space direction to a control-space direction.
    fn direction_to_control(&self, _d: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn in_collision(&self, _x: &[f64]) -> bool {
        false
    }

    fn control_bounds(&self) -> Vec<ControlBound>;

    /// Control used to initialize the nominal plan.
    fn nominal_control(&self) -> Vec<f64> {
        vec![0.0; self.control_dim()]
    }

    fn projected(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.feature_dim()];
        self.project(x, &mut z);
        z
    }

    fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut next = vec![0.0; self.state_dim()];
        self.step_into(x, u, &mut next);
        next
    }
}

impl<T: Environment + ?Sized> Environment for &T {
    fn name(&self) -> &'static str {
        (**self).name()
    }
    fn feature_dim(&self) -> usize {
        (**self).feature_dim()
    }
    fn project(&self, x: &[f64], z: &mut [f64]) {
        (**self).project(x, z)
    }
    fn value(&self, z: &[f64]) -> f64 {
        (**self).value(z)
    }
    fn value_gradient(&self, z: &[f64]) -> Option<Vec<f64>> {
        (**self).value_gradient(z)
    }
    fn goal(&self) -> Option<Vec<f64>> {
        (**self).goal()
    }
    fn characteristic_scale(&self) -> f64 {
        (**self).characteristic_scale()
    }
    fn value_scale(&self) -> f64 {
        (**self).value_scale()
    }
    fn direction_to_control(&self, d: &[f64]) -> Option<Vec<f64>> {
        (**self).direction_to_control(d)
    }
    fn in_collision(&self, x: &[f64]) -> bool {
        (**self).in_collision(x)
    }
    fn control_bounds(&self) -> Vec<ControlBound> {
        (**self).control_bounds()
    }
    fn nominal_control(&self) -> Vec<f64> {
        (**self).nominal_control()
    }
}

/// `softplus(k·(R−d)) − ln 2` inside the inflated radius `R`, zero outside.
/// Continuous at the boundary and increasing toward the centre.
pub(crate) fn barrier(d: f64, inflated: f64, sharpness: f64) -> f64 {
    if d >= inflated {
        return 0.0;
    }
    let z = sharpness * (inflated - d);
    let softplus = if z > 30.0 { z } else { z.exp().ln_1p() };
    (softplus - std::f64::consts::LN_2) / sharpness
}

/// `d barrier / d d` (negative inside).
pub(crate) fn barrier_slope(d: f64, inflated: f64, sharpness: f64) -> f64 {
    if d >= inflated {
        return 0.0;
    }
    let z = sharpness * (inflated - d);
    -1.0 / (1.0 + (-z).exp())
}
