use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{barrier, Environment};
use crate::model::{CostModel, DynamicsModel};
use crate::mppi::ControlBound;

/// Skew-symmetric matrix with `hat(ω)·x = ω × x`.
pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Vertical cylinder, infinite in `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cylinder {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadScenario {
    OpenField,
    SingleCylinder,
    Corridor,
    UTrap,
    Slalom,
}

impl QuadScenario {
    pub const ALL: [QuadScenario; 5] = [
        QuadScenario::OpenField,
        QuadScenario::SingleCylinder,
        QuadScenario::Corridor,
        QuadScenario::UTrap,
        QuadScenario::Slalom,
    ];

    /// Cylinders and waypoints; the quadrotor starts hovering at the origin
    /// at 2 m altitude.
    pub fn layout(self) -> (Vec<Cylinder>, Vec<[f64; 3]>) {
        let c = |x: f64, y: f64, r: f64| Cylinder { center: [x, y], radius: r };
        let goal = [8.0, 0.0, 2.0];
        match self {
            QuadScenario::OpenField => (vec![], vec![goal]),
            QuadScenario::SingleCylinder => (vec![c(4.0, 0.0, 0.6)], vec![goal]),
            QuadScenario::Corridor => {
                let mut cyl = Vec::new();
                for i in 0..5 {
                    let x = 2.0 + i as f64;
                    cyl.push(c(x, 1.2, 0.4));
                    cyl.push(c(x, -1.2, 0.4));
                }
                (cyl, vec![[1.0, 0.0, 2.0], goal])
            }
            QuadScenario::UTrap => {
                let mut cyl = Vec::new();
                for i in 0..5 {
                    cyl.push(c(5.0, -1.6 + 0.8 * i as f64, 0.35));
                }
                for i in 0..4 {
                    let x = 2.0 + 0.8 * i as f64;
                    cyl.push(c(x, 1.6, 0.35));
                    cyl.push(c(x, -1.6, 0.35));
                }
                (cyl, vec![goal])
            }
            QuadScenario::Slalom => (
                vec![c(2.0, 0.6, 0.5), c(4.0, -0.6, 0.5), c(6.0, 0.6, 0.5)],
                vec![[3.0, -0.8, 2.0], [5.0, 0.8, 2.0], goal],
            ),
        }
    }
}

/// Rigid-body quadrotor with body-z thrust and quadratic drag.
///
/// State layout: `p (3) | v (3) | R (9, row-major) | ω (3)`; control
/// `(f, τx, τy, τz)`. Costs track the final waypoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Quadrotor {
    pub mass: f64,
    pub inertia: [f64; 3],
    pub drag: f64,
    pub gravity: f64,
    pub dt: f64,
    pub max_thrust: f64,
    pub max_torque: f64,
    pub cylinders: Vec<Cylinder>,
    pub waypoints: Vec<[f64; 3]>,
    pub position_weight: f64,
    pub obstacle_weight: f64,
    pub thrust_weight: f64,
    pub torque_weight: f64,
    pub attitude_weight: f64,
    /// Weight on squared speed at the end of the horizon, so plans brake.
    pub terminal_velocity_weight: f64,
    pub margin: f64,
    pub sharpness: f64,
}

impl Default for Quadrotor {
    fn default() -> Self {
        Self::scenario(QuadScenario::OpenField)
    }
}

pub const STATE_DIM: usize = 18;

impl Quadrotor {
    pub fn scenario(kind: QuadScenario) -> Self {
        let (cylinders, waypoints) = kind.layout();
        Self {
            mass: 1.5,
            inertia: [0.0125, 0.0125, 0.0225],
            drag: 0.1,
            gravity: 9.81,
            dt: 0.02,
            max_thrust: 30.0,
            max_torque: 0.5,
            cylinders,
            waypoints,
            position_weight: 1.0,
            obstacle_weight: 300.0,
            thrust_weight: 1e-3,
            torque_weight: 0.1,
            attitude_weight: 1.0,
            terminal_velocity_weight: 1.0,
            margin: 0.4,
            sharpness: 10.0,
        }
    }

    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }

    /// Hovering at rest with identity attitude.
    pub fn hover_state(&self, p: [f64; 3]) -> Vec<f64> {
        let mut x = vec![0.0; STATE_DIM];
        x[..3].copy_from_slice(&p);
        x[6] = 1.0;
        x[10] = 1.0;
        x[14] = 1.0;
        x
    }

    pub fn rotation(x: &[f64]) -> Matrix3<f64> {
        Matrix3::from_row_slice(&x[6..15])
    }

    /// Angular momentum in the world frame, `R J ω`.
    pub fn angular_momentum(&self, x: &[f64]) -> Vector3<f64> {
        let j = Vector3::from(self.inertia);
        let w = Vector3::new(x[15], x[16], x[17]);
        Self::rotation(x) * w.component_mul(&j)
    }

    fn derivative(&self, x: &[f64; STATE_DIM], f: f64, tau: &Vector3<f64>) -> [f64; STATE_DIM] {
        let v = Vector3::new(x[3], x[4], x[5]);
        let r = Matrix3::from_row_slice(&x[6..15]);
        let w = Vector3::new(x[15], x[16], x[17]);
        let j = Vector3::from(self.inertia);
        let acc = Vector3::new(0.0, 0.0, -self.gravity) + r * Vector3::new(0.0, 0.0, f / self.mass)
            - self.drag * v.norm() * v;
        let r_dot = r * hat(&w);
        let jw = w.component_mul(&j);
        let w_dot = (tau - w.cross(&jw)).component_div(&j);
        let mut out = [0.0; STATE_DIM];
        out[..3].copy_from_slice(v.as_slice());
        out[3..6].copy_from_slice(acc.as_slice());
        for i in 0..3 {
            for k in 0..3 {
                out[6 + 3 * i + k] = r_dot[(i, k)];
            }
        }
        out[15..18].copy_from_slice(w_dot.as_slice());
        out
    }

    fn goal(&self) -> [f64; 3] {
        *self.waypoints.last().expect("at least one waypoint")
    }

    fn obstacle_penalty(&self, p: &[f64]) -> f64 {
        let mut total = 0.0;
        for c in &self.cylinders {
            let d = ((p[0] - c.center[0]).powi(2) + (p[1] - c.center[1]).powi(2)).sqrt() - c.radius;
            total += barrier(d, self.margin, self.sharpness);
        }
        // the ground acts as one more obstacle
        total += barrier(p[2], self.margin, self.sharpness);
        self.obstacle_weight * total
    }

    fn position_term(&self, p: &[f64]) -> f64 {
        let g = self.goal();
        self.position_weight * (0..3).map(|i| (p[i] - g[i]).powi(2)).sum::<f64>()
    }
}

/// Nearest rotation to `m` in the Frobenius sense.
fn polar_projection(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * vt;
    }
    r
}

impl DynamicsModel for Quadrotor {
    fn state_dim(&self) -> usize {
        STATE_DIM
    }
    fn control_dim(&self) -> usize {
        4
    }
    fn dt(&self) -> f64 {
        self.dt
    }
    fn step_into(&self, x: &[f64], u: &[f64], next: &mut [f64]) {
        let f = u[0].clamp(0.0, self.max_thrust);
        let tau = Vector3::new(
            u[1].clamp(-self.max_torque, self.max_torque),
            u[2].clamp(-self.max_torque, self.max_torque),
            u[3].clamp(-self.max_torque, self.max_torque),
        );
        let mut x0 = [0.0; STATE_DIM];
        x0.copy_from_slice(x);
        let h = self.dt;
        let offset = |k: &[f64; STATE_DIM], s: f64| {
            let mut y = x0;
            for i in 0..STATE_DIM {
                y[i] += s * k[i];
            }
            y
        };
        let k1 = self.derivative(&x0, f, &tau);
        let k2 = self.derivative(&offset(&k1, h / 2.0), f, &tau);
        let k3 = self.derivative(&offset(&k2, h / 2.0), f, &tau);
        let k4 = self.derivative(&offset(&k3, h), f, &tau);
        for i in 0..STATE_DIM {
            next[i] = x0[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let r = polar_projection(&Matrix3::from_row_slice(&next[6..15]));
        for i in 0..3 {
            for k in 0..3 {
                next[6 + 3 * i + k] = r[(i, k)];
            }
        }
    }
}

impl CostModel for Quadrotor {
    fn stage_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        self.position_term(x)
            + self.obstacle_penalty(x)
            + self.thrust_weight * u[0] * u[0]
            + self.torque_weight * (u[1] * u[1] + u[2] * u[2] + u[3] * u[3])
            + self.attitude_weight * (1.0 - x[14])
    }
    fn terminal_cost(&self, x: &[f64]) -> f64 {
        let speed2 = x[3] * x[3] + x[4] * x[4] + x[5] * x[5];
        self.position_term(x) + self.obstacle_penalty(x) + self.terminal_velocity_weight * speed2
    }
}

impl Environment for Quadrotor {
    fn name(&self) -> &'static str {
        "quadrotor"
    }

    // Obstacles are vertical cylinders, so traps live in the horizontal
    // plane; features drop the altitude.
    fn feature_dim(&self) -> usize {
        2
    }

    fn project(&self, x: &[f64], z: &mut [f64]) {
        z.copy_from_slice(&x[..2]);
    }

    /// Value at the goal altitude.
    fn value(&self, z: &[f64]) -> f64 {
        let p = [z[0], z[1], Quadrotor::goal(self)[2]];
        self.position_term(&p) + self.obstacle_penalty(&p)
    }

    fn goal(&self) -> Option<Vec<f64>> {
        Some(Quadrotor::goal(self)[..2].to_vec())
    }

    fn characteristic_scale(&self) -> f64 {
        10.0
    }

    fn value_scale(&self) -> f64 {
        self.position_weight
    }

    fn in_collision(&self, x: &[f64]) -> bool {
        x[2] < 0.0
            || self.cylinders.iter().any(|c| {
                (x[0] - c.center[0]).powi(2) + (x[1] - c.center[1]).powi(2) < c.radius * c.radius
            })
    }

    fn control_bounds(&self) -> Vec<ControlBound> {
        let t = self.max_torque;
        vec![
            ControlBound::new(0.0, self.max_thrust),
            ControlBound::new(-t, t),
            ControlBound::new(-t, t),
            ControlBound::new(-t, t),
        ]
    }

    fn nominal_control(&self) -> Vec<f64> {
        vec![self.hover_thrust(), 0.0, 0.0, 0.0]
    }
}
