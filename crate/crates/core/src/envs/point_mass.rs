use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{barrier, barrier_slope, Environment};
use crate::error::{Error, Result};
use crate::model::{CostModel, DynamicsModel};
use crate::mppi::ControlBound;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disc {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Obstacle layout, goal and start distribution for [`PointMassNav`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NavScenario {
    pub name: String,
    pub goal: [f64; 2],
    pub obstacles: Vec<Disc>,
    /// Normal starts are drawn uniformly from this box, at rest.
    pub start_lo: [f64; 2],
    pub start_hi: [f64; 2],
    /// A point inside the trap whose descent direction heads into the wall.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trap_probe: Option<[f64; 2]>,
    /// Full states captured when standard MPPI got stuck.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trap_starts: Vec<Vec<f64>>,
}

fn wall(from: [f64; 2], to: [f64; 2], radius: f64, out: &mut Vec<Disc>) {
    let len = ((to[0] - from[0]).powi(2) + (to[1] - from[1]).powi(2)).sqrt();
    let n = (len / radius).ceil().max(1.0) as usize;
    for i in 0..=n {
        let t = i as f64 / n as f64;
        out.push(Disc {
            center: [from[0] + t * (to[0] - from[0]), from[1] + t * (to[1] - from[1])],
            radius,
        });
    }
}

impl NavScenario {
    /// A U-shaped pocket opening toward the start, with the goal behind the
    /// closed end.
    pub fn u_trap() -> Self {
        let mut obstacles = Vec::new();
        let r = 0.25;
        wall([3.0, -2.0], [3.0, 2.0], r, &mut obstacles);
        wall([0.0, 2.0], [3.0 - r, 2.0], r, &mut obstacles);
        wall([0.0, -2.0], [3.0 - r, -2.0], r, &mut obstacles);
        Self {
            name: "u-trap".into(),
            goal: [6.0, 0.0],
            obstacles,
            start_lo: [-3.0, -1.0],
            start_hi: [-1.0, 1.0],
            trap_probe: Some([1.5, 0.0]),
            trap_starts: Vec::new(),
        }
    }

    /// An L-shaped corner facing the start.
    pub fn corner() -> Self {
        let mut obstacles = Vec::new();
        let r = 0.25;
        wall([3.0, -2.5], [3.0, 1.0], r, &mut obstacles);
        wall([0.5, 1.0], [3.0 - r, 1.0], r, &mut obstacles);
        Self {
            name: "corner".into(),
            goal: [6.0, 0.5],
            obstacles,
            start_lo: [-3.0, -0.5],
            start_hi: [-1.0, 0.5],
            trap_probe: Some([2.0, 0.3]),
            trap_starts: Vec::new(),
        }
    }

    /// Scattered discs with no enclosed pocket.
    pub fn open_field() -> Self {
        let obstacles = vec![
            Disc { center: [1.5, 0.8], radius: 0.5 },
            Disc { center: [3.0, -0.9], radius: 0.6 },
            Disc { center: [4.2, 1.2], radius: 0.4 },
        ];
        Self {
            name: "open-field".into(),
            goal: [6.0, 0.0],
            obstacles,
            start_lo: [-3.0, -1.0],
            start_hi: [-1.0, 1.0],
            trap_probe: None,
            trap_starts: Vec::new(),
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "u-trap" => Some(Self::u_trap()),
            "corner" => Some(Self::corner()),
            "open-field" => Some(Self::open_field()),
            _ => None,
        }
    }

    /// Loads a TOML scenario file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let s: NavScenario = toml::from_str(&text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, toml::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.obstacles.iter().any(|d| !(d.radius > 0.0)) {
            return Err(Error::InvalidConfig(format!("scenario {}: radius must be > 0", self.name)));
        }
        if (0..2).any(|i| !(self.start_lo[i] <= self.start_hi[i])) {
            return Err(Error::InvalidConfig(format!("scenario {}: start box inverted", self.name)));
        }
        if self.trap_starts.iter().any(|s| s.len() != 4 || s.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidConfig(format!(
                "scenario {}: trap starts must be finite 4-vectors",
                self.name
            )));
        }
        Ok(())
    }
}

/// Planar double integrator `(p, v)` driven by acceleration, with soft disc
/// obstacles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointMassNav {
    pub dt: f64,
    pub max_speed: f64,
    pub max_accel: f64,
    pub goal_weight: f64,
    pub obstacle_weight: f64,
    pub control_weight: f64,
    pub terminal_weight: f64,
    /// Clearance beyond each disc where the penalty starts.
    pub margin: f64,
    pub sharpness: f64,
    #[serde(skip)]
    pub scenario: Option<NavScenario>,
}

impl Default for PointMassNav {
    fn default() -> Self {
        Self {
            dt: 0.1,
            max_speed: 2.0,
            max_accel: 2.0,
            goal_weight: 0.5,
            obstacle_weight: 300.0,
            control_weight: 0.01,
            terminal_weight: 1.0,
            margin: 0.4,
            sharpness: 10.0,
            scenario: Some(NavScenario::u_trap()),
        }
    }
}

impl PointMassNav {
    pub fn new(scenario: NavScenario) -> Self {
        Self { scenario: Some(scenario), ..Self::default() }
    }

    pub fn with_scenario(mut self, scenario: NavScenario) -> Self {
        self.scenario = Some(scenario);
        self
    }

    pub fn scenario(&self) -> &NavScenario {
        self.scenario.as_ref().expect("navigation environment without scenario")
    }

    fn goal_xy(&self) -> [f64; 2] {
        self.scenario().goal
    }

    /// Sum of obstacle penalties at position `p`.
    pub fn obstacle_penalty(&self, p: &[f64]) -> f64 {
        let mut total = 0.0;
        for d in &self.scenario().obstacles {
            let dx = p[0] - d.center[0];
            let dy = p[1] - d.center[1];
            let reach = d.radius + self.margin;
            // cheap reject before the square root
            if dx.abs() >= reach || dy.abs() >= reach {
                continue;
            }
            let clearance = (dx * dx + dy * dy).sqrt() - d.radius;
            total += barrier(clearance, self.margin, self.sharpness);
        }
        self.obstacle_weight * total
    }

    fn goal_term(&self, p: &[f64]) -> f64 {
        let g = self.goal_xy();
        self.goal_weight * ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2))
    }

    /// Smallest clearance to any disc core (negative inside).
    pub fn clearance(&self, p: &[f64]) -> f64 {
        self.scenario()
            .obstacles
            .iter()
            .map(|d| ((p[0] - d.center[0]).powi(2) + (p[1] - d.center[1]).powi(2)).sqrt() - d.radius)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn start_box(&self) -> ([f64; 2], [f64; 2]) {
        (self.scenario().start_lo, self.scenario().start_hi)
    }
}

impl DynamicsModel for PointMassNav {
    fn state_dim(&self) -> usize {
        4
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn dt(&self) -> f64 {
        self.dt
    }
    fn step_into(&self, x: &[f64], u: &[f64], next: &mut [f64]) {
        let mut vx = x[2] + u[0] * self.dt;
        let mut vy = x[3] + u[1] * self.dt;
        let speed = (vx * vx + vy * vy).sqrt();
        if speed > self.max_speed {
            let k = self.max_speed / speed;
            vx *= k;
            vy *= k;
        }
        next[0] = x[0] + vx * self.dt;
        next[1] = x[1] + vy * self.dt;
        next[2] = vx;
        next[3] = vy;
    }
}

impl CostModel for PointMassNav {
    fn stage_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        self.goal_term(x)
            + self.obstacle_penalty(x)
            + self.control_weight * (u[0] * u[0] + u[1] * u[1])
    }
    fn terminal_cost(&self, x: &[f64]) -> f64 {
        self.terminal_weight * (self.goal_term(x) + self.obstacle_penalty(x))
    }
}

impl Environment for PointMassNav {
    fn name(&self) -> &'static str {
        "point-mass"
    }

    fn feature_dim(&self) -> usize {
        2
    }

    fn project(&self, x: &[f64], z: &mut [f64]) {
        z[0] = x[0];
        z[1] = x[1];
    }

    fn value(&self, z: &[f64]) -> f64 {
        self.goal_term(z) + self.obstacle_penalty(z)
    }

    fn value_gradient(&self, z: &[f64]) -> Option<Vec<f64>> {
        let g = self.goal_xy();
        let mut grad = vec![
            2.0 * self.goal_weight * (z[0] - g[0]),
            2.0 * self.goal_weight * (z[1] - g[1]),
        ];
        for d in &self.scenario().obstacles {
            let dx = z[0] - d.center[0];
            let dy = z[1] - d.center[1];
            let dist = (dx * dx + dy * dy).sqrt();
            if dist == 0.0 {
                continue;
            }
            let slope = barrier_slope(dist - d.radius, self.margin, self.sharpness);
            grad[0] += self.obstacle_weight * slope * dx / dist;
            grad[1] += self.obstacle_weight * slope * dy / dist;
        }
        Some(grad)
    }

    fn goal(&self) -> Option<Vec<f64>> {
        Some(self.goal_xy().to_vec())
    }

    fn characteristic_scale(&self) -> f64 {
        10.0
    }

    fn value_scale(&self) -> f64 {
        self.goal_weight
    }

    fn direction_to_control(&self, d: &[f64]) -> Option<Vec<f64>> {
        Some(d.to_vec())
    }

    fn in_collision(&self, x: &[f64]) -> bool {
        self.clearance(x) < 0.0
    }

    fn control_bounds(&self) -> Vec<ControlBound> {
        vec![ControlBound::new(-self.max_accel, self.max_accel); 2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::numeric_gradient;

    #[test]
    fn integration() {
        let env = PointMassNav::default();
        assert_eq!(env.step(&[1.0, 2.0, 0.0, 0.0], &[0.0, 0.0]), vec![1.0, 2.0, 0.0, 0.0]);
        let x = env.step(&[0.0, 0.0, 0.0, 0.0], &[1.0, 0.0]);
        assert!((x[2] - 0.1).abs() < 1e-15 && (x[0] - 0.01).abs() < 1e-15);
        let x = env.step(&[0.0, 0.0, 1.9, 0.0], &[100.0, 0.0]);
        assert_eq!(x[2], env.max_speed);
    }

    #[test]
    fn cost_at_goal_is_zero() {
        let env = PointMassNav::default();
        let g = env.goal_xy();
        assert_eq!(env.stage_cost(&[g[0], g[1], 0.0, 0.0], &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn free_ray_is_monotone() {
        let env = PointMassNav::new(NavScenario { obstacles: vec![], ..NavScenario::u_trap() });
        let g = env.goal_xy();
        let mut last = f64::INFINITY;
        for i in 0..50 {
            let t = i as f64 / 50.0;
            let p = [-4.0 + t * (g[0] + 4.0), t * g[1]];
            let c = env.stage_cost(&[p[0], p[1], 0.0, 0.0], &[0.0, 0.0]);
            assert!(c < last);
            last = c;
        }
    }

    #[test]
    fn analytic_value_gradient() {
        let env = PointMassNav::default();
        for p in [[1.5, 0.0], [2.4, 0.3], [1.0, 1.5], [-1.0, 0.2]] {
            let g = env.value_gradient(&p).unwrap();
            let fd = numeric_gradient(&|z: &[f64]| env.value(z), &p, 1e-6).unwrap();
            assert!((g[0] - fd[0]).abs() < 1e-5 && (g[1] - fd[1]).abs() < 1e-5, "{p:?}");
        }
    }

    #[test]
    fn trap_descent_points_at_the_wall() {
        let env = PointMassNav::default();
        let probe = env.scenario().trap_probe.unwrap();
        let g = env.goal_xy();
        let grad = numeric_gradient(&|z: &[f64]| env.value(z), &probe, 1e-5).unwrap();
        let to_goal = [g[0] - probe[0], g[1] - probe[1]];
        assert!(grad[0] * to_goal[0] + grad[1] * to_goal[1] < 0.0);
    }

    #[test]
    fn scenario_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.toml");
        let mut s = NavScenario::u_trap();
        s.trap_starts.push(vec![2.1, 0.05, 0.0, -0.01]);
        s.save(&path).unwrap();
        assert_eq!(NavScenario::load(&path).unwrap(), s);
    }
}
