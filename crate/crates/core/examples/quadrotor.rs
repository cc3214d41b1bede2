//! Quadrotor flying through a U-shaped cylinder pocket toward a goal 8 m ahead.

use mamppi::bench::{default_controller, AnyEnv};
use mamppi::envs::{QuadScenario, Quadrotor};
use mamppi::{run_episode, MaMppi};

fn main() -> mamppi::Result<()> {
    let quad = Quadrotor::scenario(QuadScenario::UTrap);
    let start = quad.hover_state([0.0, 0.0, 2.0]);
    let env = AnyEnv::Quadrotor(quad);
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(600);
    for memory in [false, true] {
        let mut cfg = default_controller(&env);
        cfg.memory_enabled = memory;
        let mut ctrl = MaMppi::new(cfg, env.clone())?;
        let log = run_episode(&mut ctrl, &start, steps)?;
        let p = &log.final_state[..3];
        let miss = ((p[0] - 8.0).powi(2) + p[1].powi(2) + (p[2] - 2.0).powi(2)).sqrt();
        println!(
            "memory {memory:5}: final ({:+.2}, {:+.2}, {:+.2}), {miss:.2} m from goal, collided {}, {:.1} s",
            p[0],
            p[1],
            p[2],
            log.collided(),
            log.total_wall_time()
        );
    }
    Ok(())
}
