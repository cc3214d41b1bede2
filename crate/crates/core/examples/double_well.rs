//! Escaping the left well of the double-well landscape. Without memory the
//! controller settles at the nearest minimum; with memory the stagnation is
//! recorded and the well is filled until the barrier is crossed.

use mamppi::bench::{default_controller, AnyEnv};
use mamppi::envs::DoubleWell;
use mamppi::{run_episode, MaMppi};

fn main() -> mamppi::Result<()> {
    let env = AnyEnv::DoubleWell(DoubleWell::default());
    for memory in [false, true] {
        let mut cfg = default_controller(&env);
        cfg.memory_enabled = memory;
        // a stronger memory term than the default so one pocket is enough
        cfg.memory_weight = 5.0;
        let mut ctrl = MaMppi::new(cfg, env.clone())?;
        let log = run_episode(&mut ctrl, &[-1.0, 0.0], 1000)?;
        let crossed = log.records.iter().position(|r| r.state[0] > 0.0);
        println!(
            "memory {memory:5}: final ({:+.2}, {:+.2}), crossed the barrier at {:?}, {} features",
            log.final_state[0],
            log.final_state[1],
            crossed,
            ctrl.memory().len()
        );
    }
    Ok(())
}
