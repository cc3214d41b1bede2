use serde::{Deserialize, Serialize};

use super::Environment;
use crate::model::{CostModel, DynamicsModel};
use crate::mppi::ControlBound;

/// Planar single integrator over `V(x, y) = (x² − 1)² + y²`, minima at
/// `(±1, 0)` separated by a unit barrier at `x = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DoubleWell {
    pub dt: f64,
    pub max_speed: f64,
    pub control_weight: f64,
    pub goal: [f64; 2],
}

impl Default for DoubleWell {
    fn default() -> Self {
        Self { dt: 0.05, max_speed: 1.0, control_weight: 0.01, goal: [1.0, 0.0] }
    }
}

impl DoubleWell {
    pub fn potential(z: &[f64]) -> f64 {
        let a = z[0] * z[0] - 1.0;
        a * a + z[1] * z[1]
    }

    pub fn potential_gradient(z: &[f64]) -> [f64; 2] {
        [4.0 * z[0] * (z[0] * z[0] - 1.0), 2.0 * z[1]]
    }
}

impl DynamicsModel for DoubleWell {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn dt(&self) -> f64 {
        self.dt
    }
    fn step_into(&self, x: &[f64], u: &[f64], next: &mut [f64]) {
        for i in 0..2 {
            next[i] = x[i] + self.dt * u[i].clamp(-self.max_speed, self.max_speed);
        }
    }
}

impl CostModel for DoubleWell {
    fn stage_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        Self::potential(x) + self.control_weight * (u[0] * u[0] + u[1] * u[1])
    }
    fn terminal_cost(&self, x: &[f64]) -> f64 {
        Self::potential(x)
    }
}

impl Environment for DoubleWell {
    fn name(&self) -> &'static str {
        "double-well"
    }

    fn feature_dim(&self) -> usize {
        2
    }

    fn project(&self, x: &[f64], z: &mut [f64]) {
        z.copy_from_slice(&x[..2]);
    }

    fn value(&self, z: &[f64]) -> f64 {
        Self::potential(z)
    }

    fn value_gradient(&self, z: &[f64]) -> Option<Vec<f64>> {
        Some(Self::potential_gradient(z).to_vec())
    }

    fn goal(&self) -> Option<Vec<f64>> {
        Some(self.goal.to_vec())
    }

    fn characteristic_scale(&self) -> f64 {
        2.0
    }

    fn value_scale(&self) -> f64 {
        0.1
    }

    fn direction_to_control(&self, d: &[f64]) -> Option<Vec<f64>> {
        Some(d.to_vec())
    }

    fn control_bounds(&self) -> Vec<ControlBound> {
        vec![ControlBound::new(-self.max_speed, self.max_speed); 2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn landscape() {
        assert_eq!(DoubleWell::potential(&[1.0, 0.0]), 0.0);
        assert_eq!(DoubleWell::potential(&[-1.0, 0.0]), 0.0);
        assert_eq!(DoubleWell::potential(&[0.0, 0.0]), 1.0);
        assert_eq!(DoubleWell::potential_gradient(&[-1.0, 0.0]), [0.0, 0.0]);
        let g = DoubleWell::potential_gradient(&[0.5, 0.3]);
        assert!((g[0] - 4.0 * 0.5 * (0.25 - 1.0)).abs() < 1e-15 && (g[1] - 0.6).abs() < 1e-15);
    }
}
