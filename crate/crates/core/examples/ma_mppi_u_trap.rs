//! Point mass behind a U-shaped pocket: standard MPPI stalls in the pocket,
//! MA-MPPI records the trap and plans around it.

use mamppi::bench::{default_controller, AnyEnv};
use mamppi::envs::{NavScenario, PointMassNav};
use mamppi::{run_episode, MaMppi};

fn main() -> mamppi::Result<()> {
    let env = AnyEnv::PointMass(PointMassNav::new(NavScenario::u_trap()));
    let goal = NavScenario::u_trap().goal;
    for memory in [false, true] {
        let mut cfg = default_controller(&env);
        cfg.memory_enabled = memory;
        cfg.mppi.seed = 3;
        let mut ctrl = MaMppi::new(cfg, env.clone())?;
        let log = run_episode(&mut ctrl, &[-2.0, 0.1, 0.0, 0.0], 400)?;
        let f = &log.final_state;
        let miss = (f[0] - goal[0]).hypot(f[1] - goal[1]);
        println!(
            "{:8}  final ({:+.2}, {:+.2})  distance to goal {miss:.2}  features {}  collided {}",
            if memory { "MA-MPPI" } else { "MPPI" },
            f[0],
            f[1],
            ctrl.memory().len(),
            log.collided()
        );
        for feat in ctrl.memory().features() {
            println!("    {:?} at ({:+.2}, {:+.2}) r={:.2} γ={:.2}", feat.kind, feat.position[0], feat.position[1], feat.radius, feat.strength);
        }
    }
    Ok(())
}
