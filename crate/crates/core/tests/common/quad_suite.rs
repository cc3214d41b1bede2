use mamppi::envs::{hat, Environment, Quadrotor};
use mamppi::model::stream_rng;
use nalgebra::{Matrix3, Vector3};
use rand::Rng;

use super::{ensure, Check};

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn hover_equilibrium() -> Check {
    let q = Quadrotor::default();
    let x0 = q.hover_state([1.0, -2.0, 3.0]);
    let mut x = x0.clone();
    for _ in 0..1000 {
        x = q.step(&x, &[q.hover_thrust(), 0.0, 0.0, 0.0]);
    }
    let err = max_abs_diff(&x, &x0);
    ensure!(err < 1e-9, "hover drifted by {err:e} over 1000 steps");
    Ok(format!("drift {err:.1e} after 1000 steps"))
}

pub fn free_fall() -> Check {
    // drag vanishes at rest, so the first step is a pure gravity drop
    let q = Quadrotor::default();
    let x = q.step(&q.hover_state([0.0, 0.0, 10.0]), &[0.0, 0.0, 0.0, 0.0]);
    let no_drag = Quadrotor { drag: 0.0, ..q.clone() };
    let y = no_drag.step(&no_drag.hover_state([0.0, 0.0, 10.0]), &[0.0, 0.0, 0.0, 0.0]);
    let dt = q.dt;
    let dv = y[5] + q.gravity * dt;
    let dz = y[2] - (10.0 - 0.5 * q.gravity * dt * dt);
    ensure!(dv.abs() < 1e-12 && dz.abs() < 1e-12, "drag-free drop off by {dv:e} / {dz:e}");
    ensure!(x[3].abs() < 1e-15 && x[4].abs() < 1e-15, "free fall moved sideways");
    ensure!(x[5] > y[5] && x[5] < 0.0, "drag did not slow the fall");
    Ok("v̇ = g from rest".into())
}

pub fn hat_identity() -> Check {
    ensure!(hat(&Vector3::zeros()) == Matrix3::zeros(), "hat(0) is not zero");
    ensure!(
        hat(&Vector3::new(1.0, 2.0, 3.0)) * Vector3::x() == Vector3::new(0.0, 3.0, -2.0),
        "hat((1,2,3))·e₁ != (0,3,−2)"
    );
    ensure!(hat(&Vector3::z()) * Vector3::x() == Vector3::y(), "hat(e₃)·e₁ != e₂");
    let mut rng = stream_rng(5, 0, 0);
    for _ in 0..1000 {
        let w = Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0));
        let v = Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0));
        let h = hat(&w);
        ensure!(h.transpose() == -h, "hat not skew-symmetric");
        ensure!((h * v - w.cross(&v)).norm() < 1e-12, "hat(ω)x != ω × x");
    }
    Ok("1000 random cross products".into())
}

pub fn orthonormality(steps: usize) -> Check {
    let q = Quadrotor::default();
    let mut rng = stream_rng(17, 0, 0);
    let mut x = q.hover_state([0.0, 0.0, 2.0]);
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        let u = [
            rng.random_range(0.0..q.max_thrust),
            rng.random_range(-q.max_torque..q.max_torque),
            rng.random_range(-q.max_torque..q.max_torque),
            rng.random_range(-q.max_torque..q.max_torque),
        ];
        x = q.step(&x, &u);
        let r = Quadrotor::rotation(&x);
        worst = worst.max((r.transpose() * r - Matrix3::identity()).norm());
        ensure!(x.iter().all(|v| v.is_finite()), "state went non-finite");
    }
    ensure!(worst <= 1e-6, "‖RᵀR − I‖ reached {worst:e}");
    Ok(format!("max ‖RᵀR − I‖ {worst:.1e} over {steps} random steps"))
}

pub fn angular_momentum() -> Check {
    let q = Quadrotor { drag: 0.0, gravity: 0.0, dt: 0.002, ..Quadrotor::default() };
    let mut x = q.hover_state([0.0, 0.0, 0.0]);
    x[15..18].copy_from_slice(&[3.0, -1.0, 2.0]);
    let l0 = q.angular_momentum(&x);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        x = q.step(&x, &[0.0, 0.0, 0.0, 0.0]);
        worst = worst.max((q.angular_momentum(&x) - l0).norm() / l0.norm());
    }
    ensure!(worst <= 0.005, "angular momentum drifted {:.3}%", 100.0 * worst);
    Ok(format!("max drift {:.2e}% over 1000 steps", 100.0 * worst))
}

pub fn all(orthonormal_steps: usize) -> Vec<(&'static str, Check)> {
    vec![
        ("hover", hover_equilibrium()),
        ("free fall", free_fall()),
        ("hat map", hat_identity()),
        ("orthonormality", orthonormality(orthonormal_steps)),
        ("angular momentum", angular_momentum()),
    ]
}
