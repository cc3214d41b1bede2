use serde::{Serialize, Serializer};

use crate::envs::{DoubleWell, Environment, NavScenario, Pendulum, PointMassNav, Quadrotor};
use crate::model::{CostModel, DynamicsModel};
use crate::mppi::ControlBound;

/// Any built-in environment, selected at run time.
#[derive(Debug, Clone)]
pub enum AnyEnv {
    PointMass(PointMassNav),
    Pendulum(Pendulum),
    Quadrotor(Quadrotor),
    DoubleWell(DoubleWell),
}

macro_rules! dispatch {
    ($self:ident, $e:ident => $body:expr) => {
        match $self {
            AnyEnv::PointMass($e) => $body,
            AnyEnv::Pendulum($e) => $body,
            AnyEnv::Quadrotor($e) => $body,
            AnyEnv::DoubleWell($e) => $body,
        }
    };
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum EnvDocument<'a> {
    PointMass { params: &'a PointMassNav, scenario: &'a NavScenario },
    Pendulum { params: &'a Pendulum },
    Quadrotor { params: &'a Quadrotor },
    DoubleWell { params: &'a DoubleWell },
}

// Navigation parameters skip the scenario, so it is written alongside.
impl Serialize for AnyEnv {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AnyEnv::PointMass(e) => EnvDocument::PointMass { params: e, scenario: e.scenario() },
            AnyEnv::Pendulum(e) => EnvDocument::Pendulum { params: e },
            AnyEnv::Quadrotor(e) => EnvDocument::Quadrotor { params: e },
            AnyEnv::DoubleWell(e) => EnvDocument::DoubleWell { params: e },
        }
        .serialize(s)
    }
}

impl AnyEnv {
    /// Scenario label for reports.
    pub fn scenario_name(&self) -> String {
        match self {
            AnyEnv::PointMass(e) => e.scenario().name.clone(),
            _ => String::new(),
        }
    }
}

impl DynamicsModel for AnyEnv {
    fn state_dim(&self) -> usize {
        dispatch!(self, e => e.state_dim())
    }
    fn control_dim(&self) -> usize {
        dispatch!(self, e => e.control_dim())
    }
    fn dt(&self) -> f64 {
        dispatch!(self, e => e.dt())
    }
    fn step_into(&self, x: &[f64], u: &[f64], next: &mut [f64]) {
        dispatch!(self, e => e.step_into(x, u, next))
    }
}

impl CostModel for AnyEnv {
    fn stage_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        dispatch!(self, e => e.stage_cost(x, u))
    }
    fn terminal_cost(&self, x: &[f64]) -> f64 {
        dispatch!(self, e => e.terminal_cost(x))
    }
}

impl Environment for AnyEnv {
    fn name(&self) -> &'static str {
        dispatch!(self, e => e.name())
    }
    fn feature_dim(&self) -> usize {
        dispatch!(self, e => e.feature_dim())
    }
    fn project(&self, x: &[f64], z: &mut [f64]) {
        dispatch!(self, e => e.project(x, z))
    }
    fn value(&self, z: &[f64]) -> f64 {
        dispatch!(self, e => e.value(z))
    }
    fn value_gradient(&self, z: &[f64]) -> Option<Vec<f64>> {
        dispatch!(self, e => e.value_gradient(z))
    }
    fn goal(&self) -> Option<Vec<f64>> {
        dispatch!(self, e => e.goal())
    }
    fn characteristic_scale(&self) -> f64 {
        dispatch!(self, e => e.characteristic_scale())
    }
    fn value_scale(&self) -> f64 {
        dispatch!(self, e => e.value_scale())
    }
    fn direction_to_control(&self, d: &[f64]) -> Option<Vec<f64>> {
        dispatch!(self, e => e.direction_to_control(d))
    }
    fn in_collision(&self, x: &[f64]) -> bool {
        dispatch!(self, e => e.in_collision(x))
    }
    fn control_bounds(&self) -> Vec<ControlBound> {
        dispatch!(self, e => e.control_bounds())
    }
    fn nominal_control(&self) -> Vec<f64> {
        dispatch!(self, e => e.nominal_control())
    }
}
