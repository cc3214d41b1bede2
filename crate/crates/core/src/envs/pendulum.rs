use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::Environment;
use crate::model::{CostModel, DynamicsModel};
use crate::mppi::ControlBound;

/// Torque-limited pendulum, `θ = 0` upright, `θ = π` hanging down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Pendulum {
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub max_torque: f64,
    pub max_speed: f64,
    pub damping: f64,
    pub dt: f64,
    pub angle_weight: f64,
    pub velocity_weight: f64,
    pub control_weight: f64,
    /// Scale of `ω` inside the feature embedding.
    pub speed_scale: f64,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self {
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            max_torque: 2.0,
            max_speed: 8.0,
            damping: 0.0,
            dt: 0.05,
            angle_weight: 1.0,
            velocity_weight: 0.1,
            control_weight: 0.001,
            speed_scale: 0.25,
        }
    }
}

/// Wraps to `(−π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t - 2.0 * PI
    } else {
        t
    }
}

impl Pendulum {
    fn state_cost(&self, theta: f64, omega: f64) -> f64 {
        let th = wrap_angle(theta);
        self.angle_weight * th * th + self.velocity_weight * omega * omega
    }

    /// Mechanical energy of the undamped, unforced system, zero at the
    /// hanging rest state.
    pub fn energy(&self, x: &[f64]) -> f64 {
        let ml2 = self.mass * self.length * self.length;
        0.5 * ml2 * x[1] * x[1] + self.mass * self.gravity * self.length * (1.0 + x[0].cos())
    }

    /// Energy corrected by the leading-order term of the modified Hamiltonian
    /// of the semi-implicit Euler map. Plain [`Pendulum::energy`] oscillates
    /// by `O(dt)` within each swing; this quantity stays within `O(dt²)`.
    pub fn shadow_energy(&self, x: &[f64]) -> f64 {
        let gravity_torque = self.mass * self.gravity * self.length * x[0].sin();
        self.energy(x) + 0.5 * self.dt * x[1] * gravity_torque
    }
}

impl DynamicsModel for Pendulum {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn dt(&self) -> f64 {
        self.dt
    }
    fn step_into(&self, x: &[f64], u: &[f64], next: &mut [f64]) {
        let (theta, omega) = (x[0], x[1]);
        let torque = u[0].clamp(-self.max_torque, self.max_torque);
        let ml2 = self.mass * self.length * self.length;
        let acc = self.gravity / self.length * theta.sin() + torque / ml2 - self.damping * omega;
        let omega = (omega + self.dt * acc).clamp(-self.max_speed, self.max_speed);
        next[0] = wrap_angle(theta + self.dt * omega);
        next[1] = omega;
    }
}

impl CostModel for Pendulum {
    fn stage_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        self.state_cost(x[0], x[1]) + self.control_weight * u[0] * u[0]
    }
    fn terminal_cost(&self, x: &[f64]) -> f64 {
        self.state_cost(x[0], x[1])
    }
}

impl Environment for Pendulum {
    fn name(&self) -> &'static str {
        "pendulum"
    }

    fn feature_dim(&self) -> usize {
        3
    }

    fn project(&self, x: &[f64], z: &mut [f64]) {
        z[0] = x[0].cos();
        z[1] = x[0].sin();
        z[2] = self.speed_scale * x[1];
    }

    fn value(&self, z: &[f64]) -> f64 {
        let theta = z[1].atan2(z[0]);
        self.state_cost(theta, z[2] / self.speed_scale)
    }

    fn value_gradient(&self, z: &[f64]) -> Option<Vec<f64>> {
        let rho2 = z[0] * z[0] + z[1] * z[1];
        if rho2 < 1e-12 {
            return None;
        }
        let theta = z[1].atan2(z[0]);
        let k = 2.0 * self.angle_weight * theta / rho2;
        let s = self.speed_scale;
        Some(vec![-k * z[1], k * z[0], 2.0 * self.velocity_weight * z[2] / (s * s)])
    }

    fn goal(&self) -> Option<Vec<f64>> {
        Some(vec![1.0, 0.0, 0.0])
    }

    fn characteristic_scale(&self) -> f64 {
        2.0
    }

    fn control_bounds(&self) -> Vec<ControlBound> {
        vec![ControlBound::new(-self.max_torque, self.max_torque)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibria() {
        let p = Pendulum::default();
        let down = p.step(&[PI, 0.0], &[0.0]);
        assert!((down[0] - PI).abs() <= p.dt * 1e-12 && down[1].abs() <= p.dt * 1e-12);
        assert_eq!(p.step(&[0.0, 0.0], &[0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn undamped_energy_is_conserved() {
        let p = Pendulum { dt: 0.01, ..Pendulum::default() };
        for theta0 in [1.0, 2.0, 3.0] {
            let mut x = vec![theta0, 0.0];
            let e0 = p.shadow_energy(&x);
            let mut worst_plain = 0.0_f64;
            for _ in 0..500 {
                x = p.step(&x, &[0.0]);
                assert!(x[0] > -PI && x[0] <= PI);
                assert!(((p.shadow_energy(&x) - e0) / e0).abs() < 0.01);
                worst_plain = worst_plain.max(((p.energy(&x) - e0) / e0).abs());
            }
            // plain energy oscillates but does not drift
            assert!(worst_plain < 0.05, "{theta0}: {worst_plain}");
        }
    }

    #[test]
    fn wrapping() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn value_matches_cost_and_gradient() {
        let p = Pendulum::default();
        let x = [0.7, -1.3];
        let z = p.projected(&x);
        assert!((p.value(&z) - p.terminal_cost(&x)).abs() < 1e-12);
        let g = p.value_gradient(&z).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut a = z.clone();
            let mut b = z.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (p.value(&a) - p.value(&b)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6, "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn upright_end_is_cheaper() {
        let p = Pendulum::default();
        assert!(p.terminal_cost(&[0.1, 0.0]) < p.terminal_cost(&[PI, 0.0]));
    }
}
