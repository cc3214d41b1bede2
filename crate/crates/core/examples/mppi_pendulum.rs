//! Standard MPPI swinging the pendulum up from hanging rest (θ = π).

use mamppi::envs::{wrap_angle, Environment, Pendulum};
use mamppi::{Mppi, MppiConfig};
use nalgebra::DMatrix;

fn main() -> mamppi::Result<()> {
    let env = Pendulum::default();
    let cfg = MppiConfig {
        samples: 1000,
        horizon: 15,
        temperature: 0.1,
        control_covariance: DMatrix::from_element(1, 1, 1.0),
        control_bounds: env.control_bounds(),
        seed: 1,
    };
    let mut ctrl = Mppi::new(cfg, env.clone(), env.clone())?;
    let mut x = vec![std::f64::consts::PI, 0.0];
    for t in 0..300 {
        let (u, _) = ctrl.step(&x)?;
        x = env.step(&x, u.as_slice());
        if t % 25 == 0 {
            println!("t={t:3}  θ={:+.3}  ω={:+.3}  u={:+.2}", wrap_angle(x[0]), x[1], u.as_slice()[0]);
        }
    }
    println!("final angle from upright: {:.3} rad", wrap_angle(x[0]).abs());
    Ok(())
}
